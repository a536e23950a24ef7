"""Sessions that interleave region shrinking with budgeted tests.

A dataset enters a session fully masked.  Region shrinking (`chisel_step`)
scores every point with a function fitted only on revealed rows, cuts the
region at a threshold, and reveals the rows that fall out; the region over
the remaining (masked) rows is an upper level set of the score.  Because the
cut depends on the data only through what is already revealed, the masked
rows stay an untouched sample from the shrunken region, and the tests in
`chisel.testing` stay valid when interleaved with shrinking.

Auxiliary uniforms: every dataset carries one uniform draw per row (fixed at
load time by the dataset seed).  `reveal_random` shrinks along the auxiliary
coordinate, which reveals a uniformly random subset while leaving the region
over the feature space unchanged.  Auxiliary constraints are recorded in the
trace but never restrict feature-space membership.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .testing import AlphaLedger, ModeConfig, TestRecord, INF

__all__ = [
    "Dataset", "Interval", "Constraint", "RegionTrace", "StepResult",
    "ChiselSession", "load_dataset", "chisel_step", "reveal_random",
    "region_contains", "analyst_view",
]


def _short_hash(parts: Sequence[bytes]) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p)
    return h.hexdigest()[:12]


# ---------------------------------------------------------------------------
# Dataset


@dataclass
class Dataset:
    """Feature matrix plus outcomes and one auxiliary uniform per row.

    y_test is what the tests consume; y_reveal is what analysts and scorers
    see for revealed rows.  They coincide except when a downstream transform
    (e.g. cross-fitted augmentation of causal outcomes) replaces the test
    outcome while the analyst keeps the plain one.
    """

    x: np.ndarray
    y_test: np.ndarray
    y_reveal: np.ndarray
    aux: np.ndarray
    seed: int
    feature_names: List[str]
    w: Optional[np.ndarray] = None
    y_obs: Optional[np.ndarray] = None
    e: Optional[np.ndarray] = None
    dataset_id: str = ""

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise ValueError("x must be a 2-d array")
        self.y_test = np.asarray(self.y_test, dtype=np.float64)
        self.y_reveal = np.asarray(self.y_reveal, dtype=np.float64)
        self.aux = np.asarray(self.aux, dtype=np.float64)
        n = self.x.shape[0]
        for name in ("y_test", "y_reveal", "aux"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have shape ({n},)")
        for name in ("w", "y_obs", "e"):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=np.float64)
                if v.shape != (n,):
                    raise ValueError(f"{name} must have shape ({n},)")
                setattr(self, name, v)
        if not self.feature_names:
            self.feature_names = [f"x{j+1}" for j in range(self.x.shape[1])]
        if not self.dataset_id:
            self.dataset_id = _short_hash([
                np.ascontiguousarray(self.x).tobytes(),
                np.ascontiguousarray(self.y_test).tobytes(),
                str(self.seed).encode(),
            ])

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def has_causal(self) -> bool:
        return self.w is not None

    def replace_y_test(self, y_test: np.ndarray) -> "Dataset":
        """Copy with a different test outcome (analyst-visible outcome kept)."""
        return Dataset(
            x=self.x, y_test=np.asarray(y_test, dtype=np.float64),
            y_reveal=self.y_reveal, aux=self.aux, seed=self.seed,
            feature_names=list(self.feature_names), w=self.w, y_obs=self.y_obs,
            e=self.e,
        )

    def with_fresh_aux(self, rng: np.random.Generator) -> "Dataset":
        """Copy with newly drawn auxiliary uniforms (fresh randomization)."""
        return Dataset(
            x=self.x, y_test=self.y_test, y_reveal=self.y_reveal,
            aux=rng.random(self.n), seed=self.seed,
            feature_names=list(self.feature_names), w=self.w, y_obs=self.y_obs,
            e=self.e,
        )

    def to_dict(self) -> dict:
        out = {
            "x": self.x.tolist(),
            "y_test": self.y_test.tolist(),
            "y_reveal": self.y_reveal.tolist(),
            "aux": self.aux.tolist(),
            "seed": self.seed,
            "feature_names": list(self.feature_names),
            "dataset_id": self.dataset_id,
        }
        for name in ("w", "y_obs", "e"):
            v = getattr(self, name)
            out[name] = v.tolist() if v is not None else None
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Dataset":
        return cls(
            x=np.asarray(d["x"], dtype=np.float64),
            y_test=np.asarray(d["y_test"], dtype=np.float64),
            y_reveal=np.asarray(d["y_reveal"], dtype=np.float64),
            aux=np.asarray(d["aux"], dtype=np.float64),
            seed=int(d["seed"]),
            feature_names=list(d["feature_names"]),
            w=None if d.get("w") is None else np.asarray(d["w"], dtype=np.float64),
            y_obs=None if d.get("y_obs") is None else np.asarray(d["y_obs"], dtype=np.float64),
            e=None if d.get("e") is None else np.asarray(d["e"], dtype=np.float64),
            dataset_id=d.get("dataset_id", ""),
        )


_RESERVED_COLUMNS = ("y", "w", "e")


def load_dataset(
    rows: Union[str, dict, "np.ndarray", Sequence[dict]],
    schema: Optional[dict] = None,
    seed: int = 0,
) -> Dataset:
    """Build a Dataset from CSV (path or text), a dict of arrays, or a list
    of row dicts.

    CSV needs a header row; the outcome column is named by
    schema['y'] (default 'y'), optional treatment/propensity columns by
    schema['w']/schema['e'] (defaults 'w'/'e'), and every other column is a
    feature, in header order.  UTF-8, '.' decimal point.  When a treatment
    column is present the test outcome defaults to the inverse-propensity
    score (propensity from the 'e' column, else schema['e'] as a constant,
    else 0.5); otherwise the outcome column is used as is.

    The dataset seed fixes the auxiliary uniforms (one per row).
    """
    schema = dict(schema or {})
    y_col = schema.get("y", "y")
    w_col = schema.get("w", "w")
    e_col = schema.get("e", "e")

    if isinstance(rows, dict):
        frame = {k: np.asarray(v) for k, v in rows.items()}
        x = np.asarray(frame["x"], dtype=np.float64)
        names = schema.get("features") or [f"x{j+1}" for j in range(x.shape[1])]
        y = np.asarray(frame.get("y"), dtype=np.float64) if "y" in frame else None
        w = frame.get("w")
        e = frame.get("e")
    else:
        import pandas as pd

        if isinstance(rows, str):
            if "\n" not in rows and os.path.exists(rows):
                df = pd.read_csv(rows, encoding="utf-8")
            else:
                df = pd.read_csv(io.StringIO(rows), encoding="utf-8")
        elif isinstance(rows, pd.DataFrame):
            df = rows
        else:
            df = pd.DataFrame(list(rows))
        if y_col not in df.columns:
            raise ValueError(f"outcome column {y_col!r} missing from input")
        feature_cols = schema.get("features")
        if feature_cols is None:
            feature_cols = [c for c in df.columns if c not in (y_col, w_col, e_col)]
        names = list(feature_cols)
        x = df[feature_cols].to_numpy(dtype=np.float64)
        y = df[y_col].to_numpy(dtype=np.float64)
        w = df[w_col].to_numpy(dtype=np.float64) if w_col in df.columns else None
        e = df[e_col].to_numpy(dtype=np.float64) if e_col in df.columns else None

    if x.ndim != 2 or x.shape[1] == 0:
        raise ValueError("feature matrix must be 2-D with at least one column")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    if y is not None and not np.all(np.isfinite(np.asarray(y, dtype=np.float64))):
        raise ValueError("outcomes must be finite")
    n = x.shape[0]
    if n == 0:
        raise ValueError("dataset has no rows")
    aux_rng = np.random.default_rng(np.random.SeedSequence((int(seed), 1)))
    aux = aux_rng.random(n)

    if w is not None:
        w = np.asarray(w, dtype=np.float64)
        if not np.all((w == 0.0) | (w == 1.0)):
            raise ValueError("treatment column must be 0/1")
        if e is None:
            e_val = float(schema.get("e_value", schema.get("e", 0.5)) or 0.5)
            e = np.full(n, e_val)
        e = np.asarray(e, dtype=np.float64)
        if not np.all(np.isfinite(e)) or np.any((e <= 0.0) | (e >= 1.0)):
            raise ValueError("propensities must lie strictly inside (0, 1)")
        if y is None:
            raise ValueError("causal input needs the observed outcome column")
        from .transforms import ipw_scores

        y_ipw = ipw_scores(w, y, e)
        return Dataset(
            x=x, y_test=y_ipw, y_reveal=y_ipw.copy(), aux=aux, seed=int(seed),
            feature_names=names, w=w, y_obs=y, e=e,
        )
    if y is None:
        raise ValueError("input needs an outcome column")
    return Dataset(
        x=x, y_test=y, y_reveal=y.copy(), aux=aux, seed=int(seed),
        feature_names=names,
    )


# ---------------------------------------------------------------------------
# Region geometry


@dataclass(frozen=True)
class Interval:
    """One axis interval with explicit endpoint strictness."""

    lo: float = -INF
    hi: float = INF
    lo_strict: bool = True   # membership needs x > lo (else x >= lo)
    hi_strict: bool = False  # membership needs x < hi (else x <= hi)

    def contains(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        left = (v > self.lo) if self.lo_strict else (v >= self.lo)
        right = (v < self.hi) if self.hi_strict else (v <= self.hi)
        return left & right

    def intersect(self, other: "Interval") -> "Interval":
        if other.lo > self.lo or (other.lo == self.lo and other.lo_strict):
            lo, lo_strict = other.lo, other.lo_strict
        else:
            lo, lo_strict = self.lo, self.lo_strict
        if other.hi < self.hi or (other.hi == self.hi and other.hi_strict):
            hi, hi_strict = other.hi, other.hi_strict
        else:
            hi, hi_strict = self.hi, self.hi_strict
        return Interval(lo, hi, lo_strict, hi_strict)

    @property
    def empty(self) -> bool:
        if self.lo > self.hi:
            return True
        if self.lo == self.hi and (self.lo_strict or self.hi_strict):
            return True
        return False

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi,
                "lo_strict": self.lo_strict, "hi_strict": self.hi_strict}


@dataclass
class Constraint:
    """One recorded cut: keep rows whose score exceeds the threshold.

    kind 'score' cuts on a fitted scorer; kind 'aux' cuts on the auxiliary
    uniform (random reveal) and never restricts feature-space membership.
    aux_threshold carries the tie-break uniform when lexicographic tie
    breaking is on.
    """

    kind: str
    threshold: float
    scorer: Optional[object] = None
    aux_threshold: Optional[float] = None

    @property
    def scorer_id(self) -> str:
        return getattr(self.scorer, "scorer_id", "aux")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "threshold": self.threshold,
            "aux_threshold": self.aux_threshold,
            "scorer": self.scorer.to_dict() if self.scorer is not None else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Constraint":
        scorer = None
        if d.get("scorer") is not None:
            from .scorers import scorer_from_dict

            scorer = scorer_from_dict(d["scorer"])
        return cls(kind=d["kind"], threshold=d["threshold"],
                   scorer=scorer, aux_threshold=d.get("aux_threshold"))


class RegionTrace:
    """Ordered list of cuts defining the current region.

    Membership over the feature space is the conjunction of the score cuts;
    auxiliary cuts are ignored (they only randomize which rows are revealed).
    When every scorer so far is axis-aligned the trace also maintains an
    exact hyperrectangle summary (per-dimension intervals).
    """

    def __init__(self, d: int) -> None:
        self.d = d
        self.constraints: List[Constraint] = []
        self.hyperrect: Optional[Dict[int, Interval]] = {}

    def add(self, constraint: Constraint) -> None:
        self.constraints.append(constraint)
        if constraint.kind == "aux":
            return
        if self.hyperrect is None:
            return
        scorer = constraint.scorer
        intervals = None
        if scorer is not None and hasattr(scorer, "level_set_intervals"):
            intervals = scorer.level_set_intervals(constraint.threshold)
        if intervals is None:
            self.hyperrect = None
            return
        for dim, iv in intervals.items():
            cur = self.hyperrect.get(dim, Interval())
            self.hyperrect[dim] = cur.intersect(iv)

    def score_constraints(self) -> List[Constraint]:
        return [c for c in self.constraints if c.kind == "score"]

    def contains_batch(self, x: np.ndarray, aux: Optional[np.ndarray] = None) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        member = np.ones(x.shape[0], dtype=bool)
        cuts = self.score_constraints()
        if not cuts:
            return member
        scores: Dict[str, np.ndarray] = {}
        for c in cuts:
            sid = c.scorer_id
            if sid not in scores:
                scores[sid] = np.asarray(c.scorer.score_batch(x), dtype=np.float64)
            s = scores[sid]
            keep = s > c.threshold
            if c.aux_threshold is not None and aux is not None:
                keep |= (s == c.threshold) & (np.asarray(aux) > c.aux_threshold)
            member &= keep
            if not member.any():
                break
        return member

    def contains(self, x: np.ndarray, aux: Optional[float] = None) -> bool:
        aux_arr = None if aux is None else np.asarray([aux])
        return bool(self.contains_batch(np.asarray(x)[None, :], aux_arr)[0])

    @property
    def is_empty_hint(self) -> Optional[bool]:
        """True/False when the hyperrect summary can decide emptiness."""
        if self.hyperrect is None:
            return None
        return any(iv.empty for iv in self.hyperrect.values())

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "constraints": [c.to_dict() for c in self.constraints],
            "hyperrect": None if self.hyperrect is None else {
                str(dim): iv.to_dict() for dim, iv in self.hyperrect.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegionTrace":
        trace = cls(d["d"])
        for cd in d["constraints"]:
            trace.add(Constraint.from_dict(cd))
        return trace


def region_contains(trace: RegionTrace, x: np.ndarray, aux: Optional[float] = None) -> bool:
    """Feature-space membership of a single point in the traced region."""
    return trace.contains(x, aux)


# ---------------------------------------------------------------------------
# Session


@dataclass
class StepResult:
    """Outcome of one shrink step."""

    psi: float
    revealed_idx: List[int]
    n_remaining: int
    aux_threshold: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "psi": self.psi,
            "revealed_idx": list(self.revealed_idx),
            "n_remaining": self.n_remaining,
            "aux_threshold": self.aux_threshold,
        }


class ChiselSession:
    """Mutable protocol state: region, reveals, budget, and test history.

    The session's uniform draws (used by randomized tests) come from a
    dedicated generator seeded at construction, and every draw is counted so
    logs can assert replay fidelity.
    """

    def __init__(
        self,
        dataset: Dataset,
        cfg: ModeConfig,
        alpha: float,
        seed: Optional[int] = None,
        record_events: bool = False,
    ) -> None:
        if cfg.mode == "binary":
            vals = np.unique(dataset.y_test)
            if not np.all(np.isin(vals, (0.0, 1.0))):
                raise ValueError("binary mode needs 0/1 test outcomes")
        self.dataset = dataset
        self.cfg = cfg
        self.ledger = AlphaLedger(alpha)
        self.seed = int(dataset.seed + 1 if seed is None else seed)
        self.rng = np.random.default_rng(np.random.SeedSequence((self.seed, 2)))
        self.rng_draws = 0
        self.masked = np.ones(dataset.n, dtype=bool)
        self.revealed_order: List[int] = []
        self._revealed_set: set = set()
        self.trace = RegionTrace(dataset.d)
        self.tests: List[TestRecord] = []
        self.scorers: Dict[str, object] = {}
        self.finalized = False
        self.rejected_record: Optional[TestRecord] = None
        self.events: Optional[List[dict]] = [] if record_events else None
        self.step_counter = 0
        self.trunc_count_base: Optional[int] = None
        # set at the first deterministic budget-exhausting offer,
        # whatever it realizes; later offers round at or below the remainder
        self.terminal_snap_spent = False
        self.gaussian_history: List[Tuple[int, float, float, float]] = []
        self._score_cache: Dict[str, np.ndarray] = {}
        self._y_shift = dataset.y_test - cfg.cutoff

    # -- plumbing used by chisel.testing.run_test

    def masked_y_test(self) -> np.ndarray:
        return self.dataset.y_test[self.masked]

    def next_uniform(self) -> float:
        self.rng_draws += 1
        return float(self.rng.random())

    def _note_test(self, record: TestRecord) -> None:
        if record.auto_accepted:
            self._log("test", record.to_dict())
            return
        if record.mode == "binary":
            term = record.crit_count - record.count
            if self.trunc_count_base is None or term < self.trunc_count_base:
                self.trunc_count_base = term
        else:
            sigma = math.sqrt(record.sigma2_hat)
            self.gaussian_history.append(
                (record.n_t, sigma, record.crit_z, record.masked_sum)
            )
        self._log("test", record.to_dict())

    def _finalize(self, record: Optional[TestRecord]) -> None:
        self.finalized = True
        self.rejected_record = record

    def finalize(self) -> None:
        """Analyst-initiated finalization without a rejection."""
        self._finalize(None)

    # -- internals

    @property
    def n_masked(self) -> int:
        return int(self.masked.sum())

    def _log(self, kind: str, payload: dict) -> None:
        if self.events is None:
            return
        self.step_counter += 1
        self.events.append({"step": self.step_counter, "kind": kind, "payload": payload})

    def scores_for(self, scorer) -> np.ndarray:
        if getattr(scorer, "uses_aux", False):
            return self.dataset.aux
        sid = scorer.scorer_id
        if sid not in self._score_cache:
            self._score_cache[sid] = np.asarray(
                scorer.score_batch(self.dataset.x), dtype=np.float64
            )
        return self._score_cache[sid]

    def _reveal_rows(self, idx: np.ndarray) -> List[int]:
        ordered = sorted(int(i) for i in idx)
        if ordered:
            self.masked[ordered] = False
            self.revealed_order.extend(ordered)
            self._revealed_set.update(ordered)
        return ordered

    def revealed_rows(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(indices, x, y_reveal) of revealed rows in reveal order."""
        idx = np.asarray(self.revealed_order, dtype=int)
        if idx.size == 0:
            return idx, np.empty((0, self.dataset.d)), np.empty(0)
        return idx, self.dataset.x[idx], self.dataset.y_reveal[idx]

    def state_digest(self) -> str:
        h = hashlib.sha256()
        payload = {
            "revealed": self.revealed_order,
            "thresholds": [repr(c.threshold) for c in self.trace.constraints],
            "spends": [repr(a) for a in self.ledger.spends],
            "tests": len(self.tests),
            "rejected": [bool(r.rejected) for r in self.tests],
            "rng_draws": self.rng_draws,
            "finalized": self.finalized,
        }
        h.update(json.dumps(payload, separators=(",", ":")).encode())
        return h.hexdigest()[:16]


def _check_fit_token(session: ChiselSession, scorer) -> None:
    fitted_on = getattr(scorer, "fitted_on", None)
    if fitted_on is None:
        return
    ds_id = getattr(scorer, "dataset_id", None)
    if ds_id is not None and ds_id != session.dataset.dataset_id:
        raise ValueError("scorer was fitted on a different dataset")
    if not set(fitted_on) <= session._revealed_set:
        raise ValueError("scorer was fitted on rows that are not revealed")


def chisel_step(session: ChiselSession, scorer, cap: float = INF) -> StepResult:
    """Cut the region at min(cap, smallest masked score) and reveal the rows
    at or below the cut.

    The scorer must have been fitted on revealed rows of this dataset (data-
    free scorers are always allowed).  Score comparisons are exact float
    comparisons; scores may be +/-inf.  With lexicographic tie breaking on,
    ties at the cut are ordered by the auxiliary uniform and only the
    lexicographic minimum falls out.
    """
    if session.finalized:
        raise RuntimeError("session is finalized; no further steps allowed")
    _check_fit_token(session, scorer)
    scores = session.scores_for(scorer)
    masked = session.masked
    masked_scores = scores[masked]
    kind = "aux" if getattr(scorer, "uses_aux", False) else "score"

    if masked_scores.size == 0:
        psi = cap
        result = StepResult(psi=psi, revealed_idx=[], n_remaining=0)
        if psi != INF:
            constraint = Constraint(kind=kind, threshold=psi, scorer=scorer)
            session.trace.add(constraint)
        session._log("chisel", {
            "scorer_id": scorer.scorer_id, "family": scorer.family,
            "cap": cap, **result.to_dict(),
        })
        return result

    aux_threshold = None
    if session.cfg.tiebreak_aux and kind == "score":
        s_min = float(masked_scores.min())
        if cap < s_min:
            psi = cap
            reveal = masked & (scores <= psi)
        else:
            psi = s_min
            tied = masked & (scores == psi)
            tied_idx = np.where(tied)[0]
            aux_vals = session.dataset.aux[tied_idx]
            winner = tied_idx[int(np.argmin(aux_vals))]
            aux_threshold = float(session.dataset.aux[winner])
            reveal = masked & (scores < psi)
            reveal[winner] = True
    else:
        psi = min(float(cap), float(masked_scores.min()))
        reveal = masked & (scores <= psi)

    revealed = session._reveal_rows(np.where(reveal)[0])
    constraint = Constraint(kind=kind, threshold=psi, scorer=scorer,
                            aux_threshold=aux_threshold)
    session.trace.add(constraint)
    result = StepResult(psi=psi, revealed_idx=revealed,
                        n_remaining=session.n_masked,
                        aux_threshold=aux_threshold)
    session._log("chisel", {
        "scorer_id": scorer.scorer_id, "family": scorer.family,
        "cap": cap, **result.to_dict(),
    })
    return result


def reveal_random(session: ChiselSession, k: int) -> StepResult:
    """Reveal the k masked rows with the smallest auxiliary uniforms.

    Equivalent to k shrink steps on the auxiliary coordinate, recorded as a
    single auxiliary cut; the region over the feature space is unchanged.
    """
    if session.finalized:
        raise RuntimeError("session is finalized; no further steps allowed")
    if k < 0:
        raise ValueError("k must be nonnegative")
    masked_idx = np.where(session.masked)[0]
    if k > masked_idx.size:
        raise ValueError(f"cannot reveal {k} rows; only {masked_idx.size} are masked")
    if k == 0:
        return StepResult(psi=-INF, revealed_idx=[], n_remaining=session.n_masked)
    aux = session.dataset.aux[masked_idx]
    order = np.argsort(aux, kind="stable")
    chosen = masked_idx[order[:k]]
    threshold = float(aux[order[k - 1]])
    revealed = session._reveal_rows(chosen)
    session.trace.add(Constraint(kind="aux", threshold=threshold))
    result = StepResult(psi=threshold, revealed_idx=revealed,
                        n_remaining=session.n_masked)
    session._log("reveal", {"k": k, **result.to_dict()})
    return result


# ---------------------------------------------------------------------------
# Analyst view (redaction boundary)


def _redact_record(record: TestRecord, finalized_by_rejection: bool) -> dict:
    out = {
        "t": record.t,
        "mode": record.mode,
        "n_t": record.n_t,
        "alpha_requested": record.alpha_requested,
        "alpha_t": record.alpha_t,
        "cutoff": record.cutoff,
        "rejected": record.rejected,
        "auto_accepted": record.auto_accepted,
        "rng_draw": record.rng_draw,
    }
    if record.mode == "binary":
        # Truncation and critical values are functions of revealed rows and
        # committed levels only; the masked count stays hidden.
        out["m_t"] = record.m_t
        out["c_t"] = record.c_t
        out["crit_count"] = record.crit_count
        out["trunc_count"] = record.trunc_count
    if record.rejected and finalized_by_rejection:
        out["statistic"] = record.statistic
        out["sigma2_hat"] = record.sigma2_hat
        if record.mode == "gaussian":
            out["m_t"] = record.m_t
            out["c_t"] = record.c_t
    return out


def analyst_view(session: ChiselSession) -> dict:
    """Everything the analyst may see mid-protocol.

    Revealed rows come back in reveal order with their analyst outcome.
    Masked rows contribute nothing: no outcomes, no means, no variances.
    Gaussian test records hide every statistic derived from masked outcomes
    (binary records expose their truncation/critical counts, which depend
    only on revealed data and committed levels).  A rejecting test exposes
    its statistic: at that point the session is finalized and the statistic
    is the reported estimate.
    """
    ds = session.dataset
    idx, x, y = session.revealed_rows()
    revealed = []
    for row_i, xi, yi in zip(idx.tolist(), x.tolist(), y.tolist()):
        row = {"index": row_i, "x": xi, "y": yi}
        if ds.has_causal:
            row["w"] = float(ds.w[row_i])
            row["y_obs"] = float(ds.y_obs[row_i])
            row["e"] = float(ds.e[row_i])
        revealed.append(row)
    rejected = session.rejected_record is not None
    view = {
        "dataset": {
            "dataset_id": ds.dataset_id, "n": ds.n, "d": ds.d,
            "feature_names": list(ds.feature_names), "causal": ds.has_causal,
        },
        "mode_config": session.cfg.to_dict(),
        "alpha": session.ledger.alpha_total,
        "n_masked": session.n_masked,
        "revealed": revealed,
        "region": session.trace.to_dict(),
        "ledger": session.ledger.to_dict(),
        "tests": [_redact_record(r, rejected) for r in session.tests],
        "t": len(session.tests),
        "finalized": session.finalized,
        "rejected": rejected,
        "rng_draws": session.rng_draws,
        "digest": session.state_digest(),
    }
    return view
