"""Outcome transforms that turn causal data into testable scores.

Treatment-effect questions reduce to mean questions through per-row scores
whose conditional expectation equals the treatment effect at the row's
features: inverse-propensity weighting (`ipw_transform`) needs only the known
propensity; the augmented version (`aipw_transform`) additionally regresses
each arm's outcome on features with cross-fitting, which shrinks the score
variance without moving its mean.  Augmented scores are used by the tests
only; analysts keep seeing the plain inverse-propensity scores, so nothing
the augmentation learned from masked outcomes can leak through reveals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import Dataset

__all__ = [
    "CausalRow", "NuisancePair", "ipw_scores", "ipw_transform",
    "aipw_transform", "shift_by_cutoff", "apply_transform_config",
]


@dataclass(frozen=True)
class CausalRow:
    """One observation of a randomized comparison."""

    x: np.ndarray
    w: float
    y_obs: float
    e: float


@dataclass(frozen=True)
class NuisancePair:
    """Cross-fitted per-arm regression predictions for one row."""

    g1: float
    g0: float


def ipw_scores(w: np.ndarray, y_obs: np.ndarray, e: np.ndarray) -> np.ndarray:
    """Vectorized inverse-propensity scores: w*y/e - (1-w)*y/(1-e)."""
    w = np.asarray(w, dtype=np.float64)
    y = np.asarray(y_obs, dtype=np.float64)
    e = np.asarray(e, dtype=np.float64)
    if np.any((e <= 0.0) | (e >= 1.0)):
        raise ValueError("propensities must lie strictly inside (0, 1)")
    return w * y / e - (1.0 - w) * y / (1.0 - e)


def ipw_transform(row: CausalRow) -> float:
    """Inverse-propensity score of a single row.

    >>> ipw_transform(CausalRow(x=np.zeros(1), w=1.0, y_obs=2.0, e=0.5))
    4.0
    """
    return float(ipw_scores(np.asarray([row.w]), np.asarray([row.y_obs]),
                            np.asarray([row.e]))[0])


def _fit_arm(x: np.ndarray, y: np.ndarray, kind: str,
             dims: Optional[Sequence[int]] = None) -> Tuple[np.ndarray, float]:
    """Per-arm outcome regression; returns (coef, intercept).

    dims restricts the regression to those feature columns (deliberate
    misspecification knob); the returned coefficient vector is full-width
    with zeros elsewhere.
    """
    d = x.shape[1]
    if kind == "zero" or y.size == 0:
        return np.zeros(d), 0.0
    if kind == "mean":
        return np.zeros(d), float(np.mean(y))
    if kind == "linear":
        cols = np.arange(d) if dims is None else np.asarray(list(dims), dtype=int)
        design = np.column_stack([np.ones(x.shape[0]), x[:, cols]])
        beta, *_ = np.linalg.lstsq(design, y, rcond=None)
        coef = np.zeros(d)
        coef[cols] = beta[1:]
        return coef, float(beta[0])
    raise ValueError(f"unknown nuisance learner {kind!r}")


def aipw_transform(
    dataset: Dataset,
    K: int = 5,
    learner_spec: Optional[dict] = None,
    seed: int = 0,
) -> Dataset:
    """Dataset copy whose test outcome is the cross-fitted augmented score.

    Rows are split into K folds; each row's per-arm predictions come from a
    regression fitted on the other folds, so a row never predicts itself.
    The analyst-visible outcome stays the plain inverse-propensity score.
    Propensities must be known (stored on the dataset).
    """
    if not dataset.has_causal:
        raise ValueError("augmentation needs treatment, outcome and propensity columns")
    if K < 2:
        raise ValueError("cross-fitting needs at least 2 folds")
    kind = (learner_spec or {}).get("kind", "mean")
    dims = (learner_spec or {}).get("dims")
    n = dataset.n
    x, w, y, e = dataset.x, dataset.w, dataset.y_obs, dataset.e

    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 3)))
    fold = rng.permutation(n) % K

    g1 = np.empty(n)
    g0 = np.empty(n)
    for k in range(K):
        held = fold == k
        train = ~held
        c1, b1 = _fit_arm(x[train & (w == 1.0)], y[train & (w == 1.0)], kind, dims)
        c0, b0 = _fit_arm(x[train & (w == 0.0)], y[train & (w == 0.0)], kind, dims)
        g1[held] = x[held] @ c1 + b1
        g0[held] = x[held] @ c0 + b0

    score = (g1 + w * (y - g1) / e) - (g0 + (1.0 - w) * (y - g0) / (1.0 - e))
    return dataset.replace_y_test(score)


def shift_by_cutoff(dataset: Dataset, c: float) -> Dataset:
    """Dataset copy with the cutoff subtracted from both outcome channels,
    so downstream tests can use a zero cutoff."""
    shifted = dataset.replace_y_test(dataset.y_test - c)
    shifted.y_reveal = dataset.y_reveal - c
    return shifted


def apply_transform_config(dataset: Dataset, config: dict) -> Dataset:
    """Apply a transform described as plain JSON:
    {"transform": "ipw"|"aipw", "K": folds, "learner": {...}, "cutoff": c}.

    Causal datasets already carry inverse-propensity outcomes from loading,
    so "ipw" adds nothing beyond the optional cutoff shift.
    """
    kind = config.get("transform", "ipw")
    out = dataset
    if kind == "aipw":
        out = aipw_transform(out, K=int(config.get("K", 5)),
                             learner_spec=config.get("learner"),
                             seed=int(config.get("seed", 0)))
    elif kind != "ipw":
        raise ValueError(f"unknown transform {kind!r}")
    c = float(config.get("cutoff", 0.0))
    if c != 0.0:
        out = shift_by_cutoff(out, c)
    return out
