"""Sequential one-sided tests with a shared error budget and history truncation.

A session alternates region shrinking with tests of the in-region mean against
a cutoff.  Every test spends part of a multiplicative error budget
(1 - prod(1 - alpha_s) <= alpha, tracked by `AlphaLedger`).  Acceptance of the
earlier tests caps how large the current in-region mean can be; that cap is
the truncation level (`truncation_level`), and each test is run against the
null distribution conditioned on staying below it.  Binary outcomes get an
exact (optionally randomized) truncated binomial test; general outcomes get a
truncated normal test on the studentized mean.

Numerical conventions:

- Scores and thresholds are compared exactly as IEEE doubles; no tolerance.
- Binomial CDF evaluation uses the regularized incomplete beta function via
  `scipy.special.bdtr`; normal CDF/quantile use `scipy.special.ndtr`/`ndtri`
  (complementary-error-function based, max error ~1e-15).  Arguments at
  +/-inf follow the natural limits.
- Binary truncation is carried in integer counts end to end, so floor
  operations are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import bdtr, ndtr, ndtri

INF = float("inf")

# Aggregate budget may exceed alpha by at most this much (pure float slack).
LEDGER_SLACK = 1e-12


class BudgetError(ValueError):
    """Raised when a commit would push the spent aggregate past the budget."""


class EmptySupportError(ValueError):
    """Raised when a truncated distribution has no support left."""


class ConstraintViolation(ValueError):
    """Raised in strict mode when a test request breaks the minimum-size or
    minimum-level constraint."""


def default_alpha_min(alpha: float, cadence: int = 40) -> float:
    """Smallest per-test level worth spending: splits `alpha` into `cadence`
    equal multiplicative shares.

    >>> round(default_alpha_min(0.05), 9)
    0.001281511
    """
    return 1.0 - (1.0 - alpha) ** (1.0 / cadence)


@dataclass
class AlphaLedger:
    """Multiplicative error budget.

    `spends` holds the debited level of every committed test, in order: the
    realized level, capped at what remained before the test (a final snapped
    level may round up past the remainder; the ledger never debits more than
    it holds).  The aggregate spend 1 - prod(1 - a_s) never exceeds
    `alpha_total` (up to float slack); `remaining()` is the largest level a
    further test may use.

    >>> led = AlphaLedger(0.05)
    >>> led.commit(0.02); led.commit(0.01)
    >>> round(led.remaining(), 6)
    0.02082
    >>> round(led.spent_aggregate, 6)
    0.0298
    """

    alpha_total: float
    spends: List[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not (0.0 <= self.alpha_total <= 1.0):
            raise ValueError("alpha_total must lie in [0, 1]")

    def not_spent_product(self) -> float:
        out = 1.0
        for a in self.spends:
            out *= 1.0 - a
        return out

    @property
    def spent_aggregate(self) -> float:
        return 1.0 - self.not_spent_product()

    def remaining(self) -> float:
        """Largest further level that keeps the aggregate within budget."""
        prod = self.not_spent_product()
        if prod <= 0.0:
            return 0.0
        rem = 1.0 - (1.0 - self.alpha_total) / prod
        return max(0.0, rem)

    def commit(self, effective: float) -> None:
        if effective < 0.0 or effective > 1.0:
            raise ValueError("committed level must lie in [0, 1]")
        if effective > self.remaining() + LEDGER_SLACK:
            raise BudgetError(
                f"commit of {effective} exceeds remaining budget {self.remaining()}"
            )
        self.spends.append(float(effective))

    def to_dict(self) -> dict:
        return {
            "alpha_total": self.alpha_total,
            "spends": list(self.spends),
            "spent_aggregate": self.spent_aggregate,
            "remaining": self.remaining(),
        }


def propose_alpha(ledger: AlphaLedger, requested: float) -> float:
    """Grant the largest level <= `requested` the budget still allows.

    Never raises for a too-large request; the grant is simply clipped.

    >>> led = AlphaLedger(0.05)
    >>> led.commit(0.02); led.commit(0.01)
    >>> round(propose_alpha(led, 0.05), 6)
    0.02082
    >>> propose_alpha(led, 0.0)
    0.0
    """
    if requested < 0.0:
        raise ValueError("requested level must be nonnegative")
    return min(float(requested), ledger.remaining())


@dataclass
class ModeConfig:
    """Per-session test configuration.

    mode: "binary" (exact truncated binomial) or "gaussian" (asymptotic
        truncated normal on the studentized mean).
    cutoff: null boundary for the in-region mean.
    eps: a prior test enters the gaussian truncation only while the current
        masked count is at least `eps` times its masked count.
    alpha_min: smallest positive per-test level (None: derived from the
        session budget as default_alpha_min(alpha)).
    n_min: smallest masked count a positive-level test may use in strict mode.
    deterministic_rounding: binary mode only; snap the requested level to
        the nearest achievable truncated-tail level instead of randomizing.
        Mid-budget snaps stay at or below the remaining budget (shortfalls
        roll forward); a budget-exhausting request snaps to the nearest
        level outright, capped only by the session total, so the final
        rounding is symmetric rather than one-sided.
    strict: enforce the minimum-size/minimum-level constraint for gaussian
        tests (ignored in binary mode, where the test is exact at any size).
    clip_nonneg: clip the gaussian critical value at zero (on the shifted
        scale) so vacuous truncation states cannot produce negative critical
        values.
    tiebreak_aux: break score ties lexicographically on the auxiliary
        coordinate when shrinking regions.
    """

    mode: str = "gaussian"
    cutoff: float = 0.0
    eps: float = 0.05
    alpha_min: Optional[float] = None
    n_min: int = 30
    deterministic_rounding: bool = True
    strict: bool = True
    clip_nonneg: bool = True
    tiebreak_aux: bool = False

    def __post_init__(self) -> None:
        if self.mode not in ("binary", "gaussian"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "binary" and not (0.0 < self.cutoff < 1.0):
            raise ValueError("binary mode needs a cutoff strictly inside (0, 1)")

    def resolved_alpha_min(self, alpha_total: float) -> float:
        if self.alpha_min is not None:
            return self.alpha_min
        return default_alpha_min(alpha_total)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "cutoff": self.cutoff,
            "eps": self.eps,
            "alpha_min": self.alpha_min,
            "n_min": self.n_min,
            "deterministic_rounding": self.deterministic_rounding,
            "strict": self.strict,
            "clip_nonneg": self.clip_nonneg,
            "tiebreak_aux": self.tiebreak_aux,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModeConfig":
        return cls(**{k: d[k] for k in cls().__dict__ if k in d})


def truncation_level(
    history: Iterable[Tuple[float, float, float]], n_t: float
) -> float:
    """Largest value the current masked mean can take given that every prior
    test accepted.

    `history` yields one triple per prior test: (n_s, c_s, removed_sum) where
    n_s is the masked count at that test, c_s its critical value for the mean,
    and removed_sum the sum of outcomes revealed since then (rows masked at
    test s but not now).  Empty history puts no cap on the mean.

    >>> truncation_level([(10, 0.6, 1.0)], 8)
    0.625
    >>> truncation_level([], 12)
    inf
    """
    if n_t <= 0:
        raise ValueError("n_t must be positive")
    best = INF
    for n_s, c_s, removed in history:
        level = (n_s * c_s - removed) / n_t
        if level < best:
            best = level
    return best


# ---------------------------------------------------------------------------
# Binomial machinery


def binomial_cdf(k: float, n: int, p: float) -> float:
    """P(Binomial(n, p) <= k), with k < 0 giving 0 and k >= n giving 1."""
    if k < 0:
        return 0.0
    if k >= n:
        return 1.0
    return float(bdtr(float(math.floor(k)), n, p))


def _smallest_count_cdf_ge(target: float, n: int, p: float, hi: int) -> int:
    """Smallest z in [-1, hi] with CDF(z) >= target.  Caller guarantees
    CDF(hi) >= target."""
    if target <= 0.0:
        return -1
    lo = -1  # CDF(-1) = 0 < target
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if binomial_cdf(mid, n, p) >= target:
            hi = mid
        else:
            lo = mid
    return hi


@dataclass(frozen=True)
class BinaryCritical:
    """Critical count for a truncated binomial test: reject iff count > crit."""

    crit: int
    n_t: int
    alpha_effective: float
    draw: Optional[float]
    trunc_top: int

    @property
    def crit_mean(self) -> float:
        return self.crit / self.n_t


def _clamped_trunc_top(trunc: float, n: int) -> int:
    """Integer top of the truncated support; raises if the support is empty."""
    if trunc < 0:
        raise EmptySupportError("truncation below zero leaves no support")
    if trunc >= n:
        return n
    return int(math.floor(trunc))


def randomized_truncated_binomial_quantile(
    q: float, n: int, mu: float, trunc: float, rng: Optional[np.random.Generator]
) -> int:
    """q-quantile of Binomial(n, mu) conditioned on being <= trunc, randomized
    so that P(Z <= output) = q exactly under the truncated law.

    Picks the two integers bracketing q in the conditional CDF and mixes
    between them; an exact CDF hit returns the lower one deterministically
    (no draw consumed).  trunc values >= n clamp to n; trunc < 0 raises
    EmptySupportError.

    >>> randomized_truncated_binomial_quantile(1.0, 10, 0.5, 10, None)
    10
    >>> rng = np.random.default_rng(0)
    >>> randomized_truncated_binomial_quantile(0.95, 10, 0.5, 10, rng)
    7
    """
    z, _draw = _randomized_quantile_detail(q, n, mu, trunc, rng)
    return z


def _randomized_quantile_detail(
    q: float, n: int, mu: float, trunc: float, rng: Optional[np.random.Generator]
) -> Tuple[int, Optional[float]]:
    if not (0.0 <= q <= 1.0):
        raise ValueError("q must lie in [0, 1]")
    top = _clamped_trunc_top(trunc, n)
    denom = binomial_cdf(top, n, mu)
    if denom <= 0.0:
        raise EmptySupportError("truncated support carries no probability mass")
    if q >= 1.0:
        return top, None
    target = q * denom
    if target <= 0.0:
        return -1, None
    z_hi = _smallest_count_cdf_ge(target, n, mu, top)
    cdf_hi = binomial_cdf(z_hi, n, mu)
    if cdf_hi == target:
        # exact hit: the conditional CDF equals q at z_hi
        return z_hi, None
    z_lo = z_hi - 1
    cdf_lo = binomial_cdf(z_lo, n, mu)
    p_up = (target - cdf_lo) / (cdf_hi - cdf_lo)
    if rng is None:
        raise ValueError("rng required when the quantile must randomize")
    u = float(rng.random())
    return (z_hi if u < p_up else z_lo), u


def _snapped_binary_critical(
    alpha_t: float, n_t: int, cutoff: float, trunc_top: int, max_level: float
) -> Tuple[int, float]:
    """Deterministic critical count whose achievable truncated-tail level is
    nearest to alpha_t without exceeding max_level.  Returns (count, level)."""
    denom = binomial_cdf(trunc_top, n_t, cutoff)
    if denom <= 0.0:
        raise EmptySupportError("truncated support carries no probability mass")
    if alpha_t <= 0.0:
        return trunc_top, 0.0

    def tail(z: int) -> float:
        t = 1.0 - binomial_cdf(z, n_t, cutoff) / denom
        return max(0.0, t)

    target = (1.0 - alpha_t) * denom
    z_at_or_below = _smallest_count_cdf_ge(target, n_t, cutoff, trunc_top)
    lo_tail = tail(z_at_or_below)  # <= alpha_t
    hi_tail = tail(z_at_or_below - 1) if z_at_or_below > -1 else 1.0  # > alpha_t
    if (alpha_t - lo_tail) <= (hi_tail - alpha_t) or hi_tail > max_level + LEDGER_SLACK:
        return z_at_or_below, lo_tail
    return z_at_or_below - 1, hi_tail


def binary_critical_value(
    alpha_t: float,
    n_t: int,
    cutoff: float,
    m_t: float,
    rng: Optional[np.random.Generator] = None,
    deterministic: bool = False,
    max_level: float = 1.0,
) -> float:
    """Critical value for the truncated binomial test of mean > cutoff.

    The test rejects iff the masked mean exceeds the returned value;
    equivalently iff the masked count exceeds the underlying integer critical
    count.  `m_t` is the truncation level on the mean scale (counts are
    recovered exactly; see `_count_from_mean`).

    >>> round(binary_critical_value(0.05, 10, 0.5, float('inf'),
    ...                             deterministic=True), 4)
    0.7
    """
    detail = _binary_critical_detail(
        alpha_t, n_t, cutoff, _count_from_mean(m_t, n_t), rng, deterministic, max_level
    )
    return detail.crit_mean


def _count_from_mean(m_t: float, n_t: int) -> float:
    """Exact integer count for a mean-scale truncation level.

    Mean-scale levels are ratios count/n_t; multiplying back can land a half
    ulp off an integer, so values within 1e-9 (relative) of an integer snap to
    it before flooring."""
    if m_t == INF:
        return INF
    x = m_t * n_t
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return float(r)
    return float(math.floor(x))


def _binary_critical_detail(
    alpha_t: float,
    n_t: int,
    cutoff: float,
    trunc: float,
    rng: Optional[np.random.Generator],
    deterministic: bool,
    max_level: float,
) -> BinaryCritical:
    top = _clamped_trunc_top(trunc, n_t)
    if deterministic:
        crit, eff = _snapped_binary_critical(alpha_t, n_t, cutoff, top, max_level)
        return BinaryCritical(crit, n_t, eff, None, top)
    crit, draw = _randomized_quantile_detail(1.0 - alpha_t, n_t, cutoff, top, rng)
    return BinaryCritical(crit, n_t, float(alpha_t), draw, top)


# ---------------------------------------------------------------------------
# Normal machinery


def truncated_normal_quantile(q: float, m: float) -> float:
    """q-quantile of a standard normal conditioned on being <= m.

    Solves Phi(z) = q * Phi(m).  Underflow of the product returns -inf.

    >>> round(truncated_normal_quantile(0.975, float('inf')), 6)
    1.959964
    >>> truncated_normal_quantile(0.0, 1.5)
    -inf
    """
    if not (0.0 <= q <= 1.0):
        raise ValueError("q must lie in [0, 1]")
    if m == INF:
        mass = 1.0
    else:
        mass = float(ndtr(m))
    target = q * mass
    if target <= 0.0:
        return -INF
    if target >= 1.0:
        return INF
    return float(ndtri(target))


def gaussian_critical_value(
    alpha_t: float,
    n_t: int,
    sigma2_hat: float,
    m_t: float,
    clip_nonneg: bool = True,
) -> float:
    """Critical value (mean scale, cutoff already shifted to zero) for the
    truncated normal test: reject iff the masked mean exceeds it.

    `m_t` is the mean-scale truncation level.  Zero variance returns +inf
    (the caller should auto-accept before reaching this point).
    """
    if n_t <= 0:
        raise ValueError("n_t must be positive")
    if sigma2_hat <= 0.0:
        return INF
    sigma = math.sqrt(sigma2_hat)
    scale = sigma / math.sqrt(n_t)
    m_z = m_t / scale if m_t != INF else INF
    c_z = truncated_normal_quantile(1.0 - alpha_t, m_z)
    if clip_nonneg:
        c_z = max(0.0, c_z)
    return c_z * scale


# ---------------------------------------------------------------------------
# Test records and the session-level test runner


@dataclass
class TestRecord:
    """Everything one test committed to.  Serialized in full into operator
    logs; the analyst-facing view applies its own redaction."""

    t: int
    mode: str
    n_t: int
    alpha_requested: float
    alpha_t: float
    cutoff: float
    m_t: float
    c_t: float
    statistic: Optional[float]
    sigma2_hat: Optional[float]
    rejected: bool
    rng_draw: Optional[float]
    auto_accepted: bool = False
    count: Optional[int] = None
    crit_count: Optional[int] = None
    trunc_count: Optional[int] = None
    masked_sum: float = 0.0
    crit_z: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "mode": self.mode,
            "n_t": self.n_t,
            "alpha_requested": self.alpha_requested,
            "alpha_t": self.alpha_t,
            "cutoff": self.cutoff,
            "m_t": self.m_t,
            "c_t": self.c_t,
            "statistic": self.statistic,
            "sigma2_hat": self.sigma2_hat,
            "rejected": self.rejected,
            "rng_draw": self.rng_draw,
            "auto_accepted": self.auto_accepted,
            "count": self.count,
            "crit_count": self.crit_count,
            "trunc_count": self.trunc_count,
            "masked_sum": self.masked_sum,
            "crit_z": self.crit_z,
        }


def run_test(
    session,
    alpha_t: float,
    mode_config: Optional[ModeConfig] = None,
    rng: Optional[np.random.Generator] = None,
) -> TestRecord:
    """Run one budgeted test of the masked mean against the cutoff.

    Grants the requested level through the session ledger, evaluates the
    truncated test for the session's mode, commits the realized level, and
    appends the record to the session history.  A rejection finalizes the
    session.  Tests whose statistic is undefined (no masked rows, or zero
    sample variance in gaussian mode) accept automatically and spend nothing.

    With deterministic rounding the realized binary level snaps to the
    achievable discrete grid.  Mid-budget grants snap to the nearest grid
    point at or below the remaining budget, and the ledger debits what was
    realized, so under-spends roll forward into later grants.  A grant that
    consumes the entire remaining budget is the session's last positive
    test, so no future test could double-spend an overshoot; its level
    snaps to the nearest grid point outright (never above the session
    total), making the final rounding symmetric around the budget rather
    than one-sided, and the ledger debits the full remainder.
    """
    if session.finalized:
        raise RuntimeError("session is finalized; no further tests allowed")
    cfg = mode_config if mode_config is not None else session.cfg
    rem = session.ledger.remaining()
    granted = propose_alpha(session.ledger, alpha_t)
    t = len(session.tests) + 1

    if cfg.mode == "binary":
        record = _run_binary_test(session, cfg, t, alpha_t, granted, rng)
    else:
        record = _run_gaussian_test(session, cfg, t, alpha_t, granted, rng)

    session.ledger.commit(min(record.alpha_t, rem))
    session.tests.append(record)
    session._note_test(record)
    if record.rejected:
        session._finalize(record)
    return record


def _run_binary_test(
    session, cfg: ModeConfig, t: int, requested: float, granted: float, rng
) -> TestRecord:
    y = session.masked_y_test()
    n_t = int(y.size)
    if n_t == 0:
        return TestRecord(
            t=t, mode="binary", n_t=0, alpha_requested=requested, alpha_t=0.0,
            cutoff=cfg.cutoff, m_t=INF, c_t=INF, statistic=None, sigma2_hat=None,
            rejected=False, rng_draw=None, auto_accepted=True,
        )
    count = int(round(float(y.sum())))
    base = session.trunc_count_base  # min over prior tests of (crit - count_s)
    if base is None:
        trunc: float = INF
        trunc_top = n_t
    else:
        trunc = float(base + count)
        trunc_top = _clamped_trunc_top(trunc, n_t)

    use_rng = rng if rng is not None else _SessionRng(session)
    rem = session.ledger.remaining()
    # The first grant of the entire remainder is the session's terminal
    # offer: its snap may round up past the remainder (never past the
    # session total), which keeps the final rounding symmetric instead of
    # one-sided.  The window closes at that offer whatever it realizes —
    # keeping it open until something is realized would stop the walk
    # preferentially on up-rounds and bias the realized total high — so
    # every later offer, like every mid-budget grant, rounds at or below
    # the remainder, and a sweep of leftover residue stays one-sided.
    exhausts = (granted >= rem - LEDGER_SLACK
                and not session.terminal_snap_spent)
    max_level = session.ledger.alpha_total if exhausts else rem
    if exhausts and cfg.deterministic_rounding:
        session.terminal_snap_spent = True
    detail = _binary_critical_detail(
        granted, n_t, cfg.cutoff, trunc, use_rng,
        cfg.deterministic_rounding, max_level,
    )
    effective = detail.alpha_effective
    rejected = bool(count > detail.crit) and effective > 0.0
    return TestRecord(
        t=t, mode="binary", n_t=n_t, alpha_requested=requested, alpha_t=effective,
        cutoff=cfg.cutoff, m_t=trunc_top / n_t, c_t=detail.crit / n_t,
        statistic=count / n_t, sigma2_hat=None, rejected=rejected,
        rng_draw=detail.draw, count=count, crit_count=detail.crit,
        trunc_count=trunc_top, masked_sum=float(count),
    )


class _SessionRng:
    """Adapter so quantile randomization draws count against the session."""

    def __init__(self, session) -> None:
        self._session = session

    def random(self) -> float:
        return self._session.next_uniform()


def _run_gaussian_test(
    session, cfg: ModeConfig, t: int, requested: float, granted: float, rng
) -> TestRecord:
    y = session.masked_y_test()
    n_t = int(y.size)
    c = cfg.cutoff
    if n_t == 0:
        return TestRecord(
            t=t, mode="gaussian", n_t=0, alpha_requested=requested, alpha_t=0.0,
            cutoff=c, m_t=INF, c_t=INF, statistic=None, sigma2_hat=None,
            rejected=False, rng_draw=None, auto_accepted=True,
        )
    shifted = y - c
    s_t = float(shifted.sum())
    mean_shift = s_t / n_t
    sigma2 = float(np.mean((shifted - mean_shift) ** 2))
    if granted > 0.0 and cfg.strict:
        alpha_min = cfg.resolved_alpha_min(session.ledger.alpha_total)
        if n_t < cfg.n_min:
            raise ConstraintViolation(
                f"positive-level test needs at least {cfg.n_min} masked rows, have {n_t}"
            )
        if granted < alpha_min - LEDGER_SLACK:
            raise ConstraintViolation(
                f"positive level {granted} is below the minimum {alpha_min}"
            )
    if sigma2 <= 0.0:
        return TestRecord(
            t=t, mode="gaussian", n_t=n_t, alpha_requested=requested, alpha_t=0.0,
            cutoff=c, m_t=INF, c_t=INF, statistic=mean_shift + c, sigma2_hat=sigma2,
            rejected=False, rng_draw=None, auto_accepted=True, masked_sum=s_t,
        )
    sigma = math.sqrt(sigma2)
    root_n = math.sqrt(n_t)
    # Standardized truncation: each prior test s (entering only while
    # n_t >= eps * n_s) contributes (c_hat_s - r_hat) / v_hat, where r_hat is
    # the since-revealed outcome sum standardized by test s's scale and v_hat
    # rescales between the two tests.
    m_z = INF
    for (n_s, sigma_s, c_hat_s, s_s) in session.gaussian_history:
        if n_t < cfg.eps * n_s:
            continue
        scale_s = sigma_s * math.sqrt(n_s)
        r_hat = (s_s - s_t) / scale_s
        v_hat = (sigma * root_n) / scale_s
        term = (c_hat_s - r_hat) / v_hat
        if term < m_z:
            m_z = term
    c_z = truncated_normal_quantile(1.0 - granted, m_z)
    if cfg.clip_nonneg:
        c_z = max(0.0, c_z)
    z_t = root_n * mean_shift / sigma
    rejected = bool(z_t > c_z) and granted > 0.0
    scale_t = sigma / root_n
    return TestRecord(
        t=t, mode="gaussian", n_t=n_t, alpha_requested=requested, alpha_t=granted,
        cutoff=c, m_t=(m_z * scale_t + c) if m_z != INF else INF,
        c_t=(c_z * scale_t + c) if c_z != INF else INF,
        statistic=mean_shift + c, sigma2_hat=sigma2, rejected=rejected,
        rng_draw=None, masked_sum=s_t, crit_z=c_z,
    )
