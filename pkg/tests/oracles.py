"""Independent reference implementations used only by the test suite.

Everything here is written from the definitions with exact rational
arithmetic (or brute-force enumeration) and no reliance on the package's own
numerics, so agreement is evidence rather than tautology.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

INF = float("inf")


# ---------------------------------------------------------------------------
# Exact binomial law


def exact_binomial_pmf(n: int, p_float: float) -> List[Fraction]:
    """pmf of Binomial(n, p) with p the exact rational value of the double."""
    p = Fraction(p_float)
    q = 1 - p
    return [Fraction(math.comb(n, k)) * p**k * q**(n - k) for k in range(n + 1)]


def exact_binomial_cdf(n: int, p_float: float) -> List[Fraction]:
    """cdf values F(0..n) as exact rationals."""
    out: List[Fraction] = []
    acc = Fraction(0)
    for mass in exact_binomial_pmf(n, p_float):
        acc += mass
        out.append(acc)
    return out


def exact_cdf_at(cdf: Sequence[Fraction], z: int) -> Fraction:
    """F(z) with F(-1) = 0 and F(z >= n) = F(n)."""
    if z < 0:
        return Fraction(0)
    return cdf[min(z, len(cdf) - 1)]


# ---------------------------------------------------------------------------
# Output law of the randomized truncated quantile

# law: dict z -> exact probability of outputting z


def quantile_output_law(q_float: float, n: int, mu: float, trunc: int) -> Dict[int, Fraction]:
    """Exact output distribution of the randomized truncated binomial
    quantile: mixture over the two adjacent support points, a point mass on
    an exact conditional-CDF hit, the truncation top at q = 1, and -1 when
    the target mass is unreachable."""
    if trunc < 0:
        raise ValueError("empty support")
    top = min(trunc, n)
    cdf = exact_binomial_cdf(n, mu)
    denom = exact_cdf_at(cdf, top)
    if q_float >= 1.0:
        return {top: Fraction(1)}
    target = Fraction(q_float) * denom
    if target <= 0:
        return {-1: Fraction(1)}
    z_hi = next(z for z in range(-1, top + 1) if exact_cdf_at(cdf, z) >= target)
    f_hi = exact_cdf_at(cdf, z_hi)
    if f_hi == target:
        return {z_hi: Fraction(1)}
    z_lo = z_hi - 1
    f_lo = exact_cdf_at(cdf, z_lo)
    p_up = (target - f_lo) / (f_hi - f_lo)
    return {z_hi: p_up, z_lo: 1 - p_up}


class FixedRng:
    """Returns a fixed uniform; counts how often it is asked."""

    def __init__(self, u: float) -> None:
        self.u = u
        self.calls = 0

    def random(self) -> float:
        self.calls += 1
        return self.u


class ForbiddenRng:
    """Raises if the implementation tries to draw."""

    def random(self) -> float:  # pragma: no cover - failure path
        raise AssertionError("quantile drew randomness on a deterministic case")


def implementation_output_law(quantile_fn, q: float, n: int, mu: float, trunc: int) -> Dict[int, Fraction]:
    """Black-box reconstruction of the implementation's output law.

    A call that consumes no uniform is a point mass.  Otherwise the output
    is a threshold function of the uniform (upper point below the mixing
    probability), so bisecting the threshold to sub-ulp width recovers the
    implementation's exact mixture.
    """
    probe = FixedRng(0.0)
    out0 = int(quantile_fn(q, n, mu, trunc, probe))
    if probe.calls == 0:
        return {out0: Fraction(1)}
    hi_u = 1.0 - 2.0**-53
    out1 = int(quantile_fn(q, n, mu, trunc, FixedRng(hi_u)))
    if out1 == out0:
        return {out0: Fraction(1)}
    lo, hi = 0.0, hi_u
    for _ in range(70):
        mid = 0.5 * (lo + hi)
        if int(quantile_fn(q, n, mu, trunc, FixedRng(mid))) == out0:
            lo = mid
        else:
            hi = mid
    p_up = Fraction(hi)
    return {out0: p_up, out1: 1 - p_up}


def tv_distance(a: Dict[int, Fraction], b: Dict[int, Fraction]) -> Fraction:
    support = set(a) | set(b)
    return sum(abs(a.get(z, Fraction(0)) - b.get(z, Fraction(0))) for z in support) / 2


# ---------------------------------------------------------------------------
# Brute-force isotonic regression (least squares, weights = multiplicities)


def brute_force_isotonic(xs: Sequence[float], ys: Sequence[float]) -> List[Fraction]:
    """Least-squares nondecreasing fit by enumerating contiguous partitions
    of the sorted points (n <= ~10), in exact rational arithmetic.  Returns
    fitted values per sorted x as Fractions."""
    order = sorted(range(len(xs)), key=lambda i: xs[i])
    y = [Fraction(ys[i]) for i in order]
    n = len(y)
    best_sse, best_fit = None, None
    for cuts in itertools.product((0, 1), repeat=n - 1):
        blocks: List[List[int]] = [[0]]
        for i, cut in enumerate(cuts):
            if cut:
                blocks.append([i + 1])
            else:
                blocks[-1].append(i + 1)
        means = [sum(y[i] for i in b) / len(b) for b in blocks]
        if any(means[j] > means[j + 1] for j in range(len(means) - 1)):
            continue
        sse = sum((y[i] - means[j]) ** 2 for j, b in enumerate(blocks) for i in b)
        if best_sse is None or sse < best_sse:
            best_sse, best_fit = sse, [means[j] for j, b in enumerate(blocks) for _ in b]
    assert best_fit is not None
    return best_fit


# ---------------------------------------------------------------------------
# Direct truncation-level recursion on realized binary histories


def binary_trunc_count(history: Sequence[Tuple[int, int, int]], count_now_removed: Sequence[int]) -> float:
    """min over prior tests s of (crit_count_s - removed_count_{s,now});
    history entries are (n_s, crit_count_s, count_s) and
    count_now_removed[s] = outcomes revealed since test s."""
    if not history:
        return INF
    vals = [crit - rem for (_, crit, _), rem in zip(history, count_now_removed)]
    return float(min(vals))
