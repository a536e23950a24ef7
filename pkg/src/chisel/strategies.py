"""End-to-end selection strategies built on sessions, plus baselines.

The interactive strategies (`proportional_alpha_run`, the hyperrect preset)
drive a session: reveal a random warm-up split, shrink to the cutoff
boundary with refitted scorers, then alternate small budgeted tests with
single-point shrinks so the budget is spent in proportion to how far the
region has shrunk.  The non-interactive baselines (`data_splitting`,
`simultaneous_data_splitting`, `global_mean_test`) answer the same question
without interleaving and are implemented as independent code paths; the test
suite checks the known reductions between them and the session route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import t as student_t

from .core import (ChiselSession, Constraint, Dataset, RegionTrace,
                   chisel_step, reveal_random)
from .scorers import ScorerSpec, fit_on_session, fit_scorer
from .testing import (INF, LEDGER_SLACK, AlphaLedger, ModeConfig, TestRecord,
                      _binary_critical_detail, gaussian_critical_value,
                      run_test)

__all__ = [
    "StrategyConfig", "Report", "chisel_to_boundary", "proportional_alpha_run",
    "report_from_session", "data_splitting", "simultaneous_data_splitting",
    "global_mean_test", "bonferroni_aggregate", "run_preset", "PRESETS",
]


@dataclass
class StrategyConfig:
    """Knobs shared by the interactive strategies.

    p: fraction revealed up front (ceil(p*n) rows, chosen by the auxiliary
       uniforms).
    alpha0: budget spent on the initial region before any shrinking.
    scorer: what to fit when shrinking; refit_batch overrides its cadence
       (None: refit every max(1, ceil(0.05*n)) reveals).
    skip_boundary: skip the shrink-to-boundary phase (axis-aligned preset).
    """

    mode_config: ModeConfig = field(default_factory=ModeConfig)
    alpha: float = 0.05
    p: float = 0.2
    alpha0: float = 0.0
    scorer: ScorerSpec = field(default_factory=lambda: ScorerSpec("linear"))
    refit_batch: Optional[int] = None
    skip_boundary: bool = False
    session_seed: Optional[int] = None
    record_events: bool = False

    def resolved_refit_batch(self, n: int) -> int:
        if self.scorer.refit_batch is not None:
            return max(1, int(self.scorer.refit_batch))
        if self.refit_batch is not None:
            return max(1, int(self.refit_batch))
        return max(1, math.ceil(0.05 * n))


@dataclass
class Report:
    """What a strategy hands back.  The region is None exactly when no test
    rejected; a rejecting run reports the region at rejection time together
    with the masked mean of that region (the natural estimate)."""

    rejected: bool
    region: Optional[RegionTrace]
    estimate: Optional[float]
    n_final: int
    alpha: float
    tests: List[TestRecord] = field(default_factory=list)
    ledger: Optional[AlphaLedger] = None
    flags: List[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rejected": self.rejected,
            "region": self.region.to_dict() if self.region is not None else None,
            "estimate": self.estimate,
            "n_final": self.n_final,
            "alpha": self.alpha,
            "tests": [r.to_dict() for r in self.tests],
            "ledger": self.ledger.to_dict() if self.ledger is not None else None,
            "flags": list(self.flags),
            "meta": self.meta,
        }


def _empty_report(alpha: float, tests=None, ledger=None, flags=None, meta=None) -> Report:
    return Report(rejected=False, region=None, estimate=None, n_final=0,
                  alpha=alpha, tests=list(tests or []), ledger=ledger,
                  flags=list(flags or []), meta=dict(meta or {}))


# ---------------------------------------------------------------------------
# Boundary phase


def chisel_to_boundary(session: ChiselSession, cfg: StrategyConfig) -> dict:
    """Shrink until a freshly fitted scorer finds nothing at or below the
    cutoff.  Refits every `refit_batch` reveals; a stale scorer revealing
    nothing forces a refit before the stop is accepted."""
    cap = session.cfg.cutoff
    batch = cfg.resolved_refit_batch(session.dataset.n)
    scorer = fit_on_session(cfg.scorer, session)
    since_fit = 0
    steps = 0
    revealed_total = 0
    while session.n_masked > 0:
        res = chisel_step(session, scorer, cap=cap)
        steps += 1
        got = len(res.revealed_idx)
        if got:
            revealed_total += got
            since_fit += got
            if since_fit >= batch and session.n_masked > 0:
                scorer = fit_on_session(cfg.scorer, session)
                since_fit = 0
            continue
        if since_fit == 0:
            break
        scorer = fit_on_session(cfg.scorer, session)
        since_fit = 0
    return {"steps": steps, "revealed": revealed_total,
            "n_boundary": session.n_masked}


# ---------------------------------------------------------------------------
# Proportional budget strategy


def _spend_admissible(mode: ModeConfig, n_t: int) -> bool:
    # strict gaussian sessions refuse positive levels below n_min; the
    # binary test is exact at any size, so it keeps the capped final test
    return n_t >= mode.n_min or mode.mode == "binary" or not mode.strict


def proportional_alpha_run(
    dataset: Dataset, cfg: StrategyConfig, rng: Optional[np.random.Generator] = None
) -> Report:
    """Reveal, optionally spend alpha0 on the initial region, shrink to the
    boundary, then alternate tests and single-point shrinks with the budget
    released in proportion to the region's shrinkage; the last admissible
    test gets everything that is left.

    The per-iteration level is gated at alpha_min (levels below it are
    skipped, rolling their budget forward) and the loop stops at rejection
    or, in gaussian mode, at the first test with fewer than n_min masked
    rows.  Binary sessions keep walking below n_min: the exact test has no
    size floor, and each reveal refreshes the achievable discrete grid, so
    repeated full-remainder offers let some later grid absorb what earlier
    grids could not express; the walk stops once the remainder is spent (or
    the masked set is exhausted).  When the region lands below n_min without visiting it (a
    tied reveal, or a boundary phase that overshoots), a strict gaussian
    session cannot spend there, so the run stops without that final test.
    """
    session = ChiselSession(dataset, cfg.mode_config, cfg.alpha,
                            seed=cfg.session_seed,
                            record_events=cfg.record_events)
    alpha = cfg.alpha
    alpha0 = min(cfg.alpha0, alpha)
    n_min = cfg.mode_config.n_min
    alpha_min = cfg.mode_config.resolved_alpha_min(alpha)

    k0 = min(math.ceil(cfg.p * dataset.n), dataset.n)
    reveal_random(session, k0)

    if (alpha0 > 0.0 and session.n_masked > 0
            and _spend_admissible(cfg.mode_config, session.n_masked)):
        run_test(session, alpha0, rng=rng)

    boundary_info = {"steps": 0, "revealed": 0, "n_boundary": session.n_masked}
    if not session.finalized:
        if not cfg.skip_boundary:
            boundary_info = chisel_to_boundary(session, cfg)
        n_nu = session.n_masked
        batch = cfg.resolved_refit_batch(dataset.n)
        scorer = fit_on_session(cfg.scorer, session)
        since_fit = 0
        while not session.finalized and session.n_masked > 0:
            n_t = session.n_masked
            if n_nu > n_min and n_t >= n_min:
                frac = min(1.0, max(0.0, (n_nu - n_t) / (n_nu - n_min)))
            else:
                frac = 1.0
            alpha_budget = alpha0 + frac * (alpha - alpha0)
            not_spent = session.ledger.not_spent_product()
            alpha_t = 1.0 - (1.0 - alpha_budget) / not_spent if not_spent > 0 else 0.0
            remaining = session.ledger.remaining()
            alpha_t = max(0.0, min(alpha_t, remaining))
            # an offer of the whole remainder is the last one with anywhere
            # to roll forward to, so the alpha_min gate never skips it —
            # unless the mode itself refuses sub-minimum levels (strict
            # gaussian), where the remainder genuinely strands
            full_remainder = (alpha_t >= remaining - LEDGER_SLACK
                              and (cfg.mode_config.mode == "binary"
                                   or not cfg.mode_config.strict))
            if alpha_t < alpha_min and not full_remainder:
                alpha_t = 0.0
            if not _spend_admissible(cfg.mode_config, n_t):
                alpha_t = 0.0
            if alpha_t > 0.0:
                record = run_test(session, alpha_t, rng=rng)
                if record.rejected:
                    break
            if n_t < n_min:
                if cfg.mode_config.mode != "binary":
                    break
                # The binary test is exact at any size, and the achievable
                # discrete grid changes with every reveal, so keep offering
                # the remainder until some grid can express it (rounding
                # down, never past what is left) or the budget is gone.
                if session.ledger.remaining() <= LEDGER_SLACK:
                    break
            if since_fit >= batch and n_t >= n_min:
                scorer = fit_on_session(cfg.scorer, session)
                since_fit = 0
            res = chisel_step(session, scorer, cap=INF)
            since_fit += len(res.revealed_idx)
            if not res.revealed_idx:
                break

    meta = {
        "strategy": "proportional", "p": cfg.p, "alpha0": alpha0,
        "boundary": boundary_info, "final_masked": session.n_masked,
        "session_digest": session.state_digest(),
    }
    if session.events is not None:
        meta["events"] = session.events
    return report_from_session(session, meta)


def report_from_session(session: ChiselSession, meta: Optional[dict] = None) -> Report:
    """Report for a finished (or abandoned) session: the traced region and
    the rejecting test's mean if a test rejected, the empty report otherwise."""
    record = session.rejected_record
    rejected = record is not None
    return Report(
        rejected=rejected,
        region=session.trace if rejected else None,
        estimate=record.statistic if rejected else None,
        n_final=record.n_t if rejected else 0,
        alpha=session.ledger.alpha_total,
        tests=list(session.tests),
        ledger=session.ledger,
        flags=[],
        meta=dict(meta or {}),
    )


# ---------------------------------------------------------------------------
# Data splitting (independent code path)


def _aux_split(dataset: Dataset, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """(train, test) row indices: train = the k smallest auxiliary uniforms."""
    order = np.argsort(dataset.aux, kind="stable")
    return order[:k], order[k:]


def _default_rng(dataset: Dataset, tag: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((dataset.seed + 1, tag)))


class _PlainRng:
    def __init__(self, rng: np.random.Generator) -> None:
        self._rng = rng

    def random(self) -> float:
        return float(self._rng.random())


def data_splitting(
    dataset: Dataset, p: float, cfg: StrategyConfig,
    rng: Optional[np.random.Generator] = None,
) -> Report:
    """Classical one-shot baseline: fit the scorer on floor(p*n) rows, fix
    the region {score > cutoff}, and run a single level-alpha test of the
    held-out rows that fall inside it."""
    mode = cfg.mode_config
    alpha = cfg.alpha
    k = int(math.floor(p * dataset.n))
    train, test = _aux_split(dataset, k)
    scorer = fit_scorer(cfg.scorer, {
        "x": dataset.x[train], "y": dataset.y_reveal[train],
        "idx": train.tolist(), "dataset_id": dataset.dataset_id,
        "d": dataset.d,
    })
    test_scores = np.asarray(scorer.score_batch(dataset.x[test]), dtype=np.float64)
    in_region = test_scores > mode.cutoff
    y_t = dataset.y_test[test[in_region]]
    n_t = int(y_t.size)
    meta = {"strategy": "datasplit", "p": p, "n_train": int(k), "n_region": n_t}
    ledger = AlphaLedger(alpha)

    if n_t == 0:
        record = TestRecord(t=1, mode=mode.mode, n_t=0, alpha_requested=alpha,
                            alpha_t=0.0, cutoff=mode.cutoff, m_t=INF, c_t=INF,
                            statistic=None, sigma2_hat=None, rejected=False,
                            rng_draw=None, auto_accepted=True)
        ledger.commit(0.0)
        return _empty_report(alpha, tests=[record], ledger=ledger, meta=meta)

    if mode.mode == "binary":
        vals = np.unique(y_t)
        if not np.all(np.isin(vals, (0.0, 1.0))):
            raise ValueError("binary mode needs 0/1 test outcomes")
        count = int(round(float(y_t.sum())))
        use_rng = _PlainRng(rng if rng is not None else _default_rng(dataset, 2))
        detail = _binary_critical_detail(alpha, n_t, mode.cutoff, INF, use_rng,
                                         mode.deterministic_rounding, alpha)
        effective = detail.alpha_effective
        rejected = bool(count > detail.crit) and effective > 0.0
        record = TestRecord(
            t=1, mode="binary", n_t=n_t, alpha_requested=alpha, alpha_t=effective,
            cutoff=mode.cutoff, m_t=detail.trunc_top / n_t, c_t=detail.crit / n_t,
            statistic=count / n_t, sigma2_hat=None, rejected=rejected,
            rng_draw=detail.draw, count=count, crit_count=detail.crit,
            trunc_count=detail.trunc_top, masked_sum=float(count),
        )
    else:
        shifted = y_t - mode.cutoff
        mean_shift = float(shifted.mean())
        sigma2 = float(np.mean((shifted - mean_shift) ** 2))
        if sigma2 <= 0.0:
            record = TestRecord(
                t=1, mode="gaussian", n_t=n_t, alpha_requested=alpha, alpha_t=0.0,
                cutoff=mode.cutoff, m_t=INF, c_t=INF, statistic=mean_shift + mode.cutoff,
                sigma2_hat=sigma2, rejected=False, rng_draw=None, auto_accepted=True,
                masked_sum=float(shifted.sum()),
            )
        else:
            c_shift = gaussian_critical_value(alpha, n_t, sigma2, INF,
                                              clip_nonneg=mode.clip_nonneg)
            rejected = mean_shift > c_shift
            scale = math.sqrt(sigma2 / n_t)
            record = TestRecord(
                t=1, mode="gaussian", n_t=n_t, alpha_requested=alpha, alpha_t=alpha,
                cutoff=mode.cutoff, m_t=INF, c_t=c_shift + mode.cutoff,
                statistic=mean_shift + mode.cutoff, sigma2_hat=sigma2,
                rejected=rejected, rng_draw=None, masked_sum=float(shifted.sum()),
                crit_z=c_shift / scale,
            )
    ledger.commit(record.alpha_t)
    if not record.rejected:
        return _empty_report(alpha, tests=[record], ledger=ledger, meta=meta)
    trace = RegionTrace(dataset.d)
    trace.add(Constraint(kind="score", threshold=mode.cutoff, scorer=scorer))
    return Report(rejected=True, region=trace, estimate=record.statistic,
                  n_final=n_t, alpha=alpha, tests=[record], ledger=ledger,
                  meta=meta)


# ---------------------------------------------------------------------------
# Simultaneous data splitting


def _randomized_empirical_quantile(
    values: np.ndarray, q: float, rng: np.random.Generator
) -> float:
    """Randomized q-quantile of an empirical distribution with atoms: mixes
    between the two adjacent atoms so that P(V <= output) = q exactly under
    the empirical law; an exact CDF hit returns the lower atom."""
    vals = np.sort(np.asarray(values, dtype=np.float64))
    m = vals.size
    target = q * m
    k = int(math.ceil(target))
    # F(vals[k-1]) >= q; find the atom boundaries around the target
    hi_val = vals[min(k, m) - 1]
    hi_cdf = float(np.searchsorted(vals, hi_val, side="right")) / m
    lo_mask = vals < hi_val
    if not lo_mask.any():
        lo_val, lo_cdf = -INF, 0.0
    else:
        lo_val = float(vals[lo_mask][-1])
        lo_cdf = float(np.searchsorted(vals, lo_val, side="right")) / m
    if lo_cdf == q:
        return lo_val
    p_up = (q - lo_cdf) / (hi_cdf - lo_cdf)
    return float(hi_val) if float(rng.random()) < p_up else lo_val


def simultaneous_data_splitting(
    dataset: Dataset, p: float, cfg: StrategyConfig, B: int = 1000,
    rng: Optional[np.random.Generator] = None,
) -> Report:
    """Data splitting over a ladder of nested candidate regions with one
    simultaneous calibration, reporting the largest region that clears the
    cutoff.

    Candidates are upper level sets of the train-fitted score at descending
    order-statistic thresholds, stepping from the cutoff region's size down
    to n_min as evenly as possible.  Gaussian mode calibrates with a max-t
    multiplier bootstrap on the held-out rows (same resamples for every
    stratum); binary mode simulates the max statistic under independent
    cutoff-probability outcomes with the regions held fixed, which ignores
    the selection of the regions and is therefore anti-conservative (flagged
    in the report).
    """
    mode = cfg.mode_config
    alpha = cfg.alpha
    use_rng = rng if rng is not None else _default_rng(dataset, 4)
    k = int(math.floor(p * dataset.n))
    train, test = _aux_split(dataset, k)
    scorer = fit_scorer(cfg.scorer, {
        "x": dataset.x[train], "y": dataset.y_reveal[train],
        "idx": train.tolist(), "dataset_id": dataset.dataset_id,
        "d": dataset.d,
    })
    test_scores = np.asarray(scorer.score_batch(dataset.x[test]), dtype=np.float64)
    y_test_rows = dataset.y_test[test]
    n_test = test.size
    k1 = int((test_scores > mode.cutoff).sum())
    meta = {"strategy": "simsplit", "p": p, "n_train": int(k), "k1": k1}
    if k1 < mode.n_min:
        return _empty_report(alpha, flags=["no candidate region reached the minimum size"],
                             meta=meta)

    n_levels = 10
    raw_sizes = [k1 - j * (k1 - mode.n_min) / (n_levels - 1) for j in range(n_levels)]
    sizes = sorted({max(mode.n_min, int(round(s))) for s in raw_sizes}, reverse=True)
    sorted_desc = np.sort(test_scores)[::-1]
    thresholds = []
    for size in sizes:
        thr = mode.cutoff if size == k1 else float(sorted_desc[size])
        thresholds.append(thr)
    strata = [test_scores > thr for thr in thresholds]
    counts = np.array([int(s.sum()) for s in strata])
    keep = counts >= mode.n_min
    strata = [s for s, kq in zip(strata, keep) if kq]
    thresholds = [t for t, kq in zip(thresholds, keep) if kq]
    counts = counts[keep]
    J = len(strata)
    if J == 0:
        return _empty_report(alpha, flags=["no candidate region reached the minimum size"],
                             meta=meta)
    theta = np.array([float(y_test_rows[s].mean()) for s in strata])
    meta.update({"thresholds": thresholds, "sizes": counts.tolist(),
                 "theta": theta.tolist(), "levels": J})

    flags: List[str] = []
    if mode.mode == "binary":
        # nested strata split the test rows into disjoint shells; simulate
        # independent cutoff-probability outcomes shell by shell
        shells = []
        inner = np.zeros(n_test, dtype=bool)
        for s in reversed(range(J)):
            shells.append(int((strata[s] & ~inner).sum()))
            inner = strata[s]
        shells = shells  # shells[0] is the innermost stratum
        nsims = 100_000
        sim_counts = np.zeros((nsims, J))
        acc = np.zeros(nsims)
        for depth, shell_n in enumerate(shells):
            acc = acc + use_rng.binomial(shell_n, mode.cutoff, size=nsims)
            sim_counts[:, J - 1 - depth] = acc
        with np.errstate(divide="ignore", invalid="ignore"):
            sim_theta = sim_counts / counts[None, :]
            sim_stats = (np.sqrt(counts)[None, :] * (sim_theta - mode.cutoff)
                         / np.sqrt(sim_theta * (1.0 - sim_theta)))
            sim_stats = np.where(sim_theta >= 1.0, INF, sim_stats)
            sim_stats = np.nan_to_num(sim_stats, nan=0.0, posinf=INF, neginf=-INF)
        sim_max = sim_stats.max(axis=1)
        crit = _randomized_empirical_quantile(sim_max, 1.0 - alpha, use_rng)
        with np.errstate(divide="ignore", invalid="ignore"):
            stats = (np.sqrt(counts) * (theta - mode.cutoff)
                     / np.sqrt(theta * (1.0 - theta)))
            stats = np.where(theta >= 1.0, INF, stats)
            stats = np.nan_to_num(stats, nan=0.0, posinf=INF, neginf=-INF)
        reject = stats > crit
        flags.append("binary simultaneous calibration ignores region selection; "
                     "anti-conservative upper bound")
        meta.update({"stats": stats.tolist(), "crit": crit})
    else:
        member = np.column_stack(strata).astype(np.float64)  # n_test x J
        weights = use_rng.multinomial(n_test, np.full(n_test, 1.0 / n_test),
                                      size=B).astype(np.float64)
        denom = weights @ member
        numer = weights @ (member * y_test_rows[:, None])
        with np.errstate(divide="ignore", invalid="ignore"):
            boot_theta = numer / denom
        sigma = np.nanstd(boot_theta, axis=0, ddof=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t_vals = (boot_theta - theta[None, :]) / sigma[None, :]
        t_vals = np.where(np.isfinite(t_vals), t_vals, -INF)
        t_max = t_vals.max(axis=1)
        q_mult = float(np.quantile(t_max, 1.0 - alpha, method="higher"))
        with np.errstate(invalid="ignore"):
            # 0 * inf evaluates in the unselected branch; where() discards it
            bounds = np.where(sigma > 0, theta - sigma * q_mult, theta)
        reject = bounds > mode.cutoff
        meta.update({"bounds": bounds.tolist(), "q_mult": q_mult,
                     "sigma": sigma.tolist()})

    ledger = AlphaLedger(alpha)
    ledger.commit(alpha)
    if not reject.any():
        return _empty_report(alpha, ledger=ledger, flags=flags, meta=meta)
    j_star = int(np.argmax(reject))  # smallest index = largest region
    trace = RegionTrace(dataset.d)
    trace.add(Constraint(kind="score", threshold=thresholds[j_star], scorer=scorer))
    meta["chosen_level"] = j_star
    return Report(rejected=True, region=trace, estimate=float(theta[j_star]),
                  n_final=int(counts[j_star]), alpha=alpha, ledger=ledger,
                  flags=flags, meta=meta)


# ---------------------------------------------------------------------------
# Global test and aggregation


def global_mean_test(dataset: Dataset, c: float, alpha: float) -> Report:
    """One-sided t-test of the whole-population mean against the cutoff; the
    reported region is all of feature space.  Zero sample variance degrades
    to the deterministic comparison mean > c."""
    # moments on the shifted values, like the session test: y pinned at the
    # cutoff gives exact zeros instead of summation noise around c
    shifted = dataset.y_test - c
    n = int(shifted.size)
    mean_shift = float(shifted.mean())
    mean = mean_shift + c
    sd = float(shifted.std(ddof=1)) if n > 1 else 0.0
    if sd == 0.0:
        rejected = mean_shift > 0.0
        stat = INF if rejected else (0.0 if mean_shift == 0.0 else -INF)
    else:
        stat = math.sqrt(n) * mean_shift / sd
        rejected = stat > float(student_t.ppf(1.0 - alpha, n - 1))
    ledger = AlphaLedger(alpha)
    ledger.commit(alpha if sd > 0.0 else 0.0)
    meta = {"strategy": "global", "t_stat": stat, "n": n}
    if not rejected:
        return _empty_report(alpha, ledger=ledger, meta=meta)
    return Report(rejected=True, region=RegionTrace(dataset.d), estimate=mean,
                  n_final=n, alpha=alpha, ledger=ledger, meta=meta)


def bonferroni_aggregate(
    dataset: Dataset,
    runner: Callable[[Dataset, float, float, np.random.Generator], Report],
    ps: Sequence[float] = (0.2, 0.5, 0.8),
    alphas: Optional[Sequence[float]] = None,
    rng: Optional[np.random.Generator] = None,
) -> Report:
    """Run the strategy at several split fractions with an additive budget
    split and fresh reveal randomization per sub-run; report the sub-run at
    the largest fraction whose region is non-empty."""
    use_rng = rng if rng is not None else _default_rng(dataset, 5)
    ps = list(ps)
    if alphas is None:
        alphas = [0.05 / len(ps)] * len(ps)
    alphas = list(alphas)
    if len(alphas) != len(ps):
        raise ValueError("need one budget share per split fraction")
    total = float(sum(alphas))
    reports: List[Report] = []
    for p_k, a_k in zip(ps, alphas):
        child_seed = int(use_rng.integers(2 ** 62))
        sub_rng = np.random.default_rng(np.random.SeedSequence((child_seed, 7)))
        ds_k = dataset.with_fresh_aux(
            np.random.default_rng(np.random.SeedSequence((child_seed, 6))))
        reports.append(runner(ds_k, p_k, a_k, sub_rng))
    chosen = None
    for j in range(len(reports) - 1, -1, -1):
        if reports[j].rejected:
            chosen = j
            break
    meta = {"strategy": "bonferroni", "p_grid": ps, "alphas": alphas,
            "rejected_mask": [r.rejected for r in reports], "chosen": chosen}
    if chosen is None:
        return _empty_report(total, meta=meta)
    base = reports[chosen]
    return Report(rejected=True, region=base.region, estimate=base.estimate,
                  n_final=base.n_final, alpha=total, tests=base.tests,
                  ledger=base.ledger, flags=list(base.flags), meta=meta)


# ---------------------------------------------------------------------------
# Preset registry


def _preset_proportional(dataset, cfg, rng, **kw):
    return proportional_alpha_run(dataset, cfg, rng)


def _preset_hedge(dataset, cfg, rng, **kw):
    cfg.alpha0 = kw.get("alpha0", cfg.alpha / 2.0)
    return proportional_alpha_run(dataset, cfg, rng)


def _preset_hyperrect(dataset, cfg, rng, **kw):
    cfg.skip_boundary = True
    if cfg.scorer.family != "hyperrect":
        cfg.scorer = ScorerSpec("hyperrect", refit_batch=cfg.scorer.refit_batch)
    return proportional_alpha_run(dataset, cfg, rng)


def _preset_datasplit(dataset, cfg, rng, **kw):
    return data_splitting(dataset, cfg.p, cfg, rng)


def _preset_simsplit(dataset, cfg, rng, **kw):
    return simultaneous_data_splitting(dataset, cfg.p, cfg,
                                       B=int(kw.get("bootstrap", 1000)), rng=rng)


def _preset_global(dataset, cfg, rng, **kw):
    return global_mean_test(dataset, cfg.mode_config.cutoff, cfg.alpha)


def _preset_bonferroni(dataset, cfg, rng, **kw):
    ps = list(kw.get("p_grid", (0.2, 0.5, 0.8)))
    alphas = kw.get("alpha_split") or [cfg.alpha / len(ps)] * len(ps)

    def runner(ds, p_k, a_k, sub_rng):
        sub_cfg = StrategyConfig(
            mode_config=cfg.mode_config, alpha=a_k, p=p_k, alpha0=cfg.alpha0,
            scorer=cfg.scorer, refit_batch=cfg.refit_batch,
            skip_boundary=cfg.skip_boundary,
        )
        return proportional_alpha_run(ds, sub_cfg, sub_rng)

    return bonferroni_aggregate(dataset, runner, ps, alphas, rng)


PRESETS = {
    "proportional": _preset_proportional,
    "hedge": _preset_hedge,
    "hyperrect": _preset_hyperrect,
    "datasplit": _preset_datasplit,
    "simsplit": _preset_simsplit,
    "global": _preset_global,
    "bonferroni": _preset_bonferroni,
}


def run_preset(
    name: str,
    dataset: Dataset,
    cfg: Optional[StrategyConfig] = None,
    rng: Optional[np.random.Generator] = None,
    **kw,
) -> Report:
    """Run a named strategy preset with the given configuration."""
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    cfg = cfg if cfg is not None else StrategyConfig()
    report = PRESETS[name](dataset, cfg, rng, **kw)
    report.meta.setdefault("preset", name)
    return report
