"""Score functions fitted on revealed rows.

A scorer is a frozen value object: fitting returns a new scorer carrying its
parameters, the rows it was fitted on, and the dataset id, so a session can
verify that every cut it applies was computed from revealed data only.
Scorers built without data (constant, coordinate) carry no fit token and are
always admissible.

Families:

- constant: fixed score everywhere.
- coordinate: score is one raw feature.
- linear: least squares on standardized features.
- ridge_loocv: ridge with the penalty chosen by closed-form leave-one-out.
- logistic: L2-penalized logistic regression fitted by iteratively
  reweighted least squares; scores are probabilities.
- hyperrect: per-dimension monotone step functions combined by min; upper
  level sets are axis-aligned boxes, tracked exactly.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import spearmanr

from .core import Interval
from .testing import INF

__all__ = [
    "ScorerSpec", "StepFn", "fit_unimodal_1d", "fit_scorer", "score",
    "ConstantScorer", "CoordinateScorer", "AuxScorer", "LinearScorer",
    "RidgeLoocvScorer", "LogisticScorer", "HyperrectScorer",
    "scorer_from_dict",
]


@dataclass(frozen=True)
class ScorerSpec:
    """What to fit: family name, family parameters, and the refit cadence
    used by strategies (refit every `refit_batch` reveals; None lets the
    strategy pick its default)."""

    family: str
    params: dict = field(default_factory=dict)
    refit_batch: Optional[int] = None

    def to_dict(self) -> dict:
        return {"family": self.family, "params": dict(self.params),
                "refit_batch": self.refit_batch}

    @classmethod
    def from_dict(cls, d: dict) -> "ScorerSpec":
        return cls(family=d["family"], params=dict(d.get("params") or {}),
                   refit_batch=d.get("refit_batch"))


def _hash_id(*parts: bytes) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.hexdigest()[:12]


def _float_key(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(np.asarray(arr, dtype=np.float64)).tobytes()


# ---------------------------------------------------------------------------
# Monotone step functions (exact level sets)


@dataclass(frozen=True)
class StepFn:
    """Piecewise-constant function: value levels[i] on [knots[i], knots[i+1]),
    levels[0] below the first knot.  Monotone by construction (levels sorted
    the way the fit direction demands)."""

    knots: Tuple[float, ...]
    levels: Tuple[float, ...]
    increasing: bool

    def predict(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        idx = np.searchsorted(self.knots, v, side="right") - 1
        idx = np.clip(idx, 0, len(self.levels) - 1)
        return np.asarray(self.levels, dtype=np.float64)[idx]

    def level_set(self, psi: float) -> Interval:
        """Exact interval {v : predict(v) > psi} (monotone levels make it an
        interval; equality with the predicate is property-tested)."""
        levels = np.asarray(self.levels)
        above = levels > psi
        if not above.any():
            return Interval(lo=INF, hi=-INF)  # empty
        if self.increasing:
            k = int(np.argmax(above))  # first level above
            if k == 0:
                return Interval()
            return Interval(lo=self.knots[k], lo_strict=False)
        k = int(len(levels) - 1 - np.argmax(above[::-1]))  # last level above
        if k == len(levels) - 1:
            return Interval()
        return Interval(hi=self.knots[k + 1], hi_strict=True)

    def to_dict(self) -> dict:
        return {"knots": list(self.knots), "levels": list(self.levels),
                "increasing": self.increasing}

    @classmethod
    def from_dict(cls, d: dict) -> "StepFn":
        return cls(knots=tuple(d["knots"]), levels=tuple(d["levels"]),
                   increasing=bool(d["increasing"]))


def _pava_increasing(y: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted least-squares fit under a non-decreasing constraint (pool
    adjacent violators).  Returns the fitted value for each input position."""
    means: List[float] = []
    weights: List[float] = []
    sizes: List[int] = []
    for yi, wi in zip(y, w):
        means.append(float(yi))
        weights.append(float(wi))
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, s2 = means.pop(), weights.pop(), sizes.pop()
            m1, w1, s1 = means.pop(), weights.pop(), sizes.pop()
            wt = w1 + w2
            means.append((m1 * w1 + m2 * w2) / wt)
            weights.append(wt)
            sizes.append(s1 + s2)
    out = np.empty(len(y))
    pos = 0
    for m, s in zip(means, sizes):
        out[pos:pos + s] = m
        pos += s
    return out


def fit_unimodal_1d(
    pairs: Sequence[Tuple[float, float]], direction: str = "auto"
) -> StepFn:
    """Monotone step-function fit of y on a single coordinate.

    direction: 'increasing', 'decreasing', or 'auto' (sign of the rank
    correlation; ties or undefined correlation default to increasing).
    Duplicate x values are pooled (weighted by multiplicity) before the fit.
    """
    arr = np.asarray(list(pairs), dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ValueError("pairs must be a nonempty sequence of (x, y)")
    order = np.argsort(arr[:, 0], kind="stable")
    x = arr[order, 0]
    y = arr[order, 1]
    xs, start = np.unique(x, return_index=True)
    if xs.size < 2:
        raise ValueError("need at least two distinct x values")
    counts = np.diff(np.append(start, x.size))
    sums = np.add.reduceat(y, start)
    ymeans = sums / counts

    if direction == "auto":
        if xs.size < 2 or np.unique(y).size < 2:
            direction = "increasing"
        else:
            res = spearmanr(x, y)
            rho = res.statistic if hasattr(res, "statistic") else res.correlation
            direction = "decreasing" if (rho is not None and rho < 0) else "increasing"
    if direction not in ("increasing", "decreasing"):
        raise ValueError(f"unknown direction {direction!r}")

    if direction == "increasing":
        fitted = _pava_increasing(ymeans, counts.astype(np.float64))
    else:
        fitted = -_pava_increasing(-ymeans, counts.astype(np.float64))
    return StepFn(knots=tuple(xs.tolist()), levels=tuple(fitted.tolist()),
                  increasing=(direction == "increasing"))


# ---------------------------------------------------------------------------
# Scorer families


@dataclass(frozen=True)
class ConstantScorer:
    value: float = 0.0
    family: str = "constant"
    fitted_on: Optional[Tuple[int, ...]] = None
    dataset_id: Optional[str] = None
    uses_aux: bool = False

    @property
    def scorer_id(self) -> str:
        return _hash_id(b"constant", _float_key([self.value]))

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        return np.full(np.atleast_2d(x).shape[0], self.value)

    def score_one(self, x: np.ndarray) -> float:
        return float(self.value)

    def level_set_intervals(self, psi: float) -> Dict[int, Interval]:
        if self.value > psi:
            return {}
        return {0: Interval(lo=INF, hi=-INF)}

    def to_dict(self) -> dict:
        return {"family": "constant", "value": self.value}


@dataclass(frozen=True)
class CoordinateScorer:
    dim: int = 0
    family: str = "coordinate"
    fitted_on: Optional[Tuple[int, ...]] = None
    dataset_id: Optional[str] = None
    uses_aux: bool = False

    @property
    def scorer_id(self) -> str:
        return _hash_id(b"coordinate", str(self.dim).encode())

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        return np.atleast_2d(np.asarray(x, dtype=np.float64))[:, self.dim]

    def score_one(self, x: np.ndarray) -> float:
        return float(np.asarray(x, dtype=np.float64)[self.dim])

    def level_set_intervals(self, psi: float) -> Dict[int, Interval]:
        return {self.dim: Interval(lo=psi, lo_strict=True)}

    def to_dict(self) -> dict:
        return {"family": "coordinate", "dim": self.dim}


@dataclass(frozen=True)
class AuxScorer:
    """Scores rows by their auxiliary uniform (sessions special-case data
    access; the scorer itself never sees features)."""

    family: str = "aux"
    fitted_on: Optional[Tuple[int, ...]] = None
    dataset_id: Optional[str] = None
    uses_aux: bool = True

    @property
    def scorer_id(self) -> str:
        return "aux"

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        raise RuntimeError("auxiliary scores live on the session, not on features")

    def score_one(self, x: np.ndarray) -> float:
        raise RuntimeError("auxiliary scores live on the session, not on features")

    def to_dict(self) -> dict:
        return {"family": "aux"}


@dataclass(frozen=True)
class _AffineScorer:
    """Shared implementation for scorers that reduce to coef . x + intercept."""

    coef: Tuple[float, ...] = ()
    intercept: float = 0.0
    fitted_on: Optional[Tuple[int, ...]] = None
    dataset_id: Optional[str] = None
    uses_aux: bool = False

    def _linear(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return x @ np.asarray(self.coef, dtype=np.float64) + self.intercept

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        return self._linear(x)

    def score_one(self, x: np.ndarray) -> float:
        return float(self.score_batch(np.asarray(x)[None, :])[0])

    @property
    def scorer_id(self) -> str:
        return _hash_id(self.family.encode(), _float_key(self.coef),
                        _float_key([self.intercept]))

    def to_dict(self) -> dict:
        return {"family": self.family, "coef": list(self.coef),
                "intercept": self.intercept}


@dataclass(frozen=True)
class LinearScorer(_AffineScorer):
    family: str = "linear"


@dataclass(frozen=True)
class RidgeLoocvScorer(_AffineScorer):
    family: str = "ridge_loocv"
    penalty: float = 0.0

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["penalty"] = self.penalty
        return out


@dataclass(frozen=True)
class LogisticScorer(_AffineScorer):
    family: str = "logistic"
    penalty: float = 1.0

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        lin = np.clip(self._linear(x), -700.0, 700.0)
        return 1.0 / (1.0 + np.exp(-lin))

    def to_dict(self) -> dict:
        out = super().to_dict()
        out["penalty"] = self.penalty
        return out


@dataclass(frozen=True)
class HyperrectScorer:
    """min over dimensions of per-dimension monotone step functions; absent
    dimensions contribute +inf (no restriction)."""

    dims: Tuple[int, ...] = ()
    fns: Tuple[StepFn, ...] = ()
    family: str = "hyperrect"
    fitted_on: Optional[Tuple[int, ...]] = None
    dataset_id: Optional[str] = None
    uses_aux: bool = False

    @property
    def scorer_id(self) -> str:
        parts = [b"hyperrect", str(self.dims).encode()]
        for fn in self.fns:
            parts.append(_float_key(fn.knots))
            parts.append(_float_key(fn.levels))
        return _hash_id(*parts)

    def score_batch(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if not self.dims:
            return np.full(x.shape[0], INF)
        out = np.full(x.shape[0], INF)
        for dim, fn in zip(self.dims, self.fns):
            out = np.minimum(out, fn.predict(x[:, dim]))
        return out

    def score_one(self, x: np.ndarray) -> float:
        return float(self.score_batch(np.asarray(x)[None, :])[0])

    def level_set_intervals(self, psi: float) -> Dict[int, Interval]:
        return {dim: fn.level_set(psi) for dim, fn in zip(self.dims, self.fns)}

    def to_dict(self) -> dict:
        return {"family": "hyperrect", "dims": list(self.dims),
                "fns": [fn.to_dict() for fn in self.fns]}


# ---------------------------------------------------------------------------
# Fitting


def _standardize(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    sd = x.std(axis=0)
    sd_safe = np.where(sd > 0, sd, 1.0)
    return (x - mean) / sd_safe, mean, sd_safe


def _destandardize(coef_std: np.ndarray, intercept_std: float,
                   mean: np.ndarray, sd: np.ndarray) -> Tuple[np.ndarray, float]:
    coef = coef_std / sd
    intercept = intercept_std - float(coef @ mean)
    return coef, intercept


def _fit_linear(x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, float]:
    m = x.shape[0]
    if m == 0:
        return np.zeros(x.shape[1]), 0.0
    xs, mean, sd = _standardize(x)
    design = np.column_stack([np.ones(m), xs])
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return _destandardize(beta[1:], float(beta[0]), mean, sd)


_RIDGE_PENALTIES = tuple(np.logspace(-5, 5, 20).tolist())


def _fit_ridge_loocv(
    x: np.ndarray, y: np.ndarray, penalties: Sequence[float] = _RIDGE_PENALTIES
) -> Tuple[np.ndarray, float, float]:
    m = x.shape[0]
    if m < 3:
        c = float(np.mean(y)) if m else 0.0
        return np.zeros(x.shape[1]), c, float(penalties[-1])
    xs, mean, sd = _standardize(x)
    ybar = float(np.mean(y))
    yc = y - ybar
    u, s, vt = np.linalg.svd(xs, full_matrices=False)
    uty = u.T @ yc
    u2 = u ** 2
    best = (math.inf, None, None)
    for lam in penalties:
        shrink = s ** 2 / (s ** 2 + lam)
        fitted = u @ (shrink * uty)
        h = u2 @ shrink + 1.0 / m
        denom = np.clip(1.0 - h, 1e-12, None)
        press = float(np.sum(((yc - fitted) / denom) ** 2))
        if press < best[0]:
            coef_std = vt.T @ ((s / (s ** 2 + lam)) * uty)
            best = (press, coef_std, lam)
    coef, intercept = _destandardize(best[1], ybar, mean, sd)
    return coef, intercept, float(best[2])


def _fit_logistic_irls(
    x: np.ndarray, y: np.ndarray, penalty: float = 1.0,
    max_iter: int = 100, tol: float = 1e-10,
) -> Tuple[np.ndarray, float]:
    m, d = x.shape
    if m == 0:
        return np.zeros(d), 0.0
    xs, mean, sd = _standardize(x)
    design = np.column_stack([np.ones(m), xs])
    beta = np.zeros(d + 1)
    ridge = penalty * np.eye(d + 1)
    ridge[0, 0] = 0.0  # intercept unpenalized
    for _ in range(max_iter):
        lin = np.clip(design @ beta, -700, 700)
        p = 1.0 / (1.0 + np.exp(-lin))
        w = np.clip(p * (1.0 - p), 1e-10, None)
        grad = design.T @ (y - p) - ridge @ beta
        hess = (design * w[:, None]).T @ design + ridge
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        beta = beta + step
        if float(np.max(np.abs(step))) < tol:
            break
    return _destandardize(beta[1:], float(beta[0]), mean, sd)


def fit_scorer(
    spec: ScorerSpec,
    revealed_rows: dict,
) -> object:
    """Fit the spec'd family on revealed rows.

    revealed_rows: {'x': (m, d) array, 'y': (m,) array, 'idx': row indices,
    'dataset_id': id string, 'd': total feature count}.  Data-free families
    ignore the rows and carry no fit token.
    """
    family = spec.family
    params = dict(spec.params)
    if family == "constant":
        return ConstantScorer(value=float(params.get("value", 0.0)))
    if family == "coordinate":
        return CoordinateScorer(dim=int(params.get("dim", 0)))
    if family == "aux":
        return AuxScorer()

    x = np.atleast_2d(np.asarray(revealed_rows["x"], dtype=np.float64))
    y = np.asarray(revealed_rows["y"], dtype=np.float64)
    idx = tuple(int(i) for i in revealed_rows.get("idx", ()))
    ds_id = revealed_rows.get("dataset_id")

    if family == "linear":
        coef, intercept = _fit_linear(x, y)
        return LinearScorer(coef=tuple(coef.tolist()), intercept=intercept,
                            fitted_on=idx, dataset_id=ds_id)
    if family == "ridge_loocv":
        penalties = params.get("penalties", _RIDGE_PENALTIES)
        coef, intercept, lam = _fit_ridge_loocv(x, y, penalties)
        return RidgeLoocvScorer(coef=tuple(coef.tolist()), intercept=intercept,
                                penalty=lam, fitted_on=idx, dataset_id=ds_id)
    if family == "logistic":
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("logistic scorer needs 0/1 outcomes")
        penalty = float(params.get("penalty", 1.0))
        coef, intercept = _fit_logistic_irls(x, y, penalty)
        return LogisticScorer(coef=tuple(coef.tolist()), intercept=intercept,
                              penalty=penalty, fitted_on=idx, dataset_id=ds_id)
    if family == "hyperrect":
        d_total = int(revealed_rows.get("d", x.shape[1] if x.size else 0))
        dims = tuple(int(j) for j in params.get("dims", range(d_total)))
        direction = params.get("direction", "auto")
        fns = []
        kept = []
        for dim in dims:
            # constant columns carry no ordering; leave them unrestricted
            if x.shape[0] == 0 or np.unique(x[:, dim]).size < 2:
                continue
            fn = fit_unimodal_1d(np.column_stack([x[:, dim], y]), direction)
            fns.append(fn)
            kept.append(dim)
        return HyperrectScorer(dims=tuple(kept), fns=tuple(fns),
                               fitted_on=idx, dataset_id=ds_id)
    raise ValueError(f"unknown scorer family {family!r}")


def fit_on_session(spec: ScorerSpec, session) -> object:
    """Fit on everything the session has revealed so far."""
    idx, x, y = session.revealed_rows()
    return fit_scorer(spec, {
        "x": x, "y": y, "idx": idx.tolist(),
        "dataset_id": session.dataset.dataset_id, "d": session.dataset.d,
    })


def score(scorer, x: np.ndarray) -> float:
    """Score a single point."""
    return scorer.score_one(np.asarray(x, dtype=np.float64))


_FAMILIES = {
    "constant": lambda d: ConstantScorer(value=float(d.get("value", 0.0))),
    "coordinate": lambda d: CoordinateScorer(dim=int(d["dim"])),
    "aux": lambda d: AuxScorer(),
    "linear": lambda d: LinearScorer(coef=tuple(d["coef"]), intercept=d["intercept"]),
    "ridge_loocv": lambda d: RidgeLoocvScorer(
        coef=tuple(d["coef"]), intercept=d["intercept"], penalty=d.get("penalty", 0.0)),
    "logistic": lambda d: LogisticScorer(
        coef=tuple(d["coef"]), intercept=d["intercept"], penalty=d.get("penalty", 1.0)),
    "hyperrect": lambda d: HyperrectScorer(
        dims=tuple(d["dims"]), fns=tuple(StepFn.from_dict(f) for f in d["fns"])),
}


def scorer_from_dict(d: dict) -> object:
    """Rebuild a frozen scorer from its serialized parameters (fit tokens are
    not round-tripped; deserialized scorers are treated as data-free)."""
    family = d["family"]
    if family not in _FAMILIES:
        raise ValueError(f"unknown scorer family {family!r}")
    return _FAMILIES[family](d)
