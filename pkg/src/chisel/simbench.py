"""Simulation bench: generating processes with ground-truth oracles, region
utility evaluated against the generating law, and a replicated experiment
runner in which every method sees identical datasets.

Each family admits an exact conditional mean mu(x), so the utility of any
traced region can be evaluated by Monte Carlo over fresh covariates without
re-deriving outcomes: U(R) = E[(mu(X) - c) 1{X in R}].  The runner draws one
shared covariate pool per experiment and scores every report against it, so
paired method comparisons are exact on the pool and the oracle-optimal
region normalizes to 1 by construction.

RNG discipline (common random numbers): with experiment seed s, replicate r
draws its dataset from SeedSequence((s, r, 0)) (dataset seed first, then
rows), method m at grid index j consumes SeedSequence((s, r, 1 + m, j)), and
the evaluation pool uses SeedSequence((s, 3)).  Methods never share streams,
and re-running any single cell reproduces it bit-exactly.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from .core import Dataset, RegionTrace, load_dataset
from .scorers import ScorerSpec
from .strategies import StrategyConfig, run_preset
from .testing import ModeConfig
from .transforms import apply_transform_config

__all__ = [
    "DgpSpec", "Oracle", "sample_dgp", "true_utility", "MethodSpec",
    "ExperimentConfig", "MetricsRow", "ExperimentResult", "run_experiment",
]


# ---------------------------------------------------------------------------
# Specs and oracles


@dataclass
class DgpSpec:
    """A named generating process plus the selection cutoff.

    Families and their params (everything has a default):

    - linear_rct: RCT, X ~ N(0, I_d), CATE tau + x'beta with beta along
      (1,...,1) scaled to norm beta_norm, control outcome N(0, noise_sd^2).
      params: d=20, beta_norm=0.5, tau=0.0, noise_sd=1.0.  cutoff 0.
    - hetero_rct: RCT, X ~ N(0, S) with S_ij = rho^|i-j|, CATE tau + x'beta
      with beta along the first `spike` coordinates scaled to norm theta,
      control outcome Expo(1) - 1.  params: d=100, theta=0.45, tau=0.0,
      rho=0.2, spike=5.  cutoff 0.
    - binary_logistic: direct binary regression, X as in hetero_rct,
      P(Y=1|X) = expit(tau + x'beta).  params: d=100, theta=2.0, tau=2.2,
      rho=0.2, spike=5.  cutoff 0.9 (must stay inside (0,1)).
    - nonneg_rct: RCT on d=5 with a two-valued CATE: Z ~ Bern(q) marks
      responders, L is A - mean(A) for A ~ N(0, I_5) (exact conditioning of
      A on a zero coordinate sum), X_j = tau Z + tau0 (1-Z) + L_j, so the
      CATE is the coordinate mean of X: tau for responders, tau0 otherwise.
      params: q=1.0, tau=0.1/q, tau0=0.0, noise_sd=1.0.  cutoff 0.
    - null_setting1|2|3: boundary-null processes.  Covariates: setting 1 is
      N(0, S) with S_ij = 0.2^|i-j|, d=50; setting 2 is Rademacher, d=100;
      setting 3 is Expo(1)-1 entries, d=150.  params: outcome="ipw"
      (default) gives an RCT with zero CATE, baseline arctan((x_1+...+x_5)/
      sqrt(5)) and per-setting noise (Expo(1)-1, t_5, heteroscedastic
      normal); outcome="binary" gives Y ~ Bern(0.5) independent of X with
      cutoff 0.5.
    - custom: RCT with X ~ N(0, I_d) and CATE intercept + x'coef.
      params: coef (list, required), intercept=0.0, noise_sd=1.0.
    """

    family: str
    cutoff: Optional[float] = None
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"family": self.family, "cutoff": self.cutoff,
                "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "DgpSpec":
        return cls(family=d["family"], cutoff=d.get("cutoff"),
                   params=dict(d.get("params") or {}))


@dataclass
class Oracle:
    """Ground truth: the conditional mean over feature space, a fresh
    covariate sampler, and closed-form optima where the family has them."""

    family: str
    cutoff: float
    mu: Callable[[np.ndarray], np.ndarray]
    sample_x: Callable[[np.random.Generator, int], np.ndarray]
    optimal_utility: Optional[float] = None
    optimal_mass: Optional[float] = None
    is_null: bool = False


@dataclass
class _Family:
    oracle: Oracle
    draw: Callable[[np.random.Generator, int], dict]
    mode: str  # outcome model for the tests: "gaussian" or "binary"


def _ar_cov(d: int, rho: float) -> np.ndarray:
    idx = np.arange(d)
    return rho ** np.abs(np.subtract.outer(idx, idx))


def _spike_beta(d: int, norm: float, spike: int) -> np.ndarray:
    b = np.zeros(d)
    b[: min(spike, d)] = 1.0
    if norm > 0.0:
        b *= norm / float(np.linalg.norm(b))
    else:
        b[:] = 0.0
    return b


def _gauss_plus_mean(m: float, s: float) -> float:
    # E[max(N(m, s^2), 0)]
    if s <= 0.0:
        return max(m, 0.0)
    return float(m * norm.cdf(m / s) + s * norm.pdf(m / s))


def _gauss_tail(m: float, s: float, c: float) -> float:
    # P(N(m, s^2) > c)
    if s <= 0.0:
        return 1.0 if m > c else 0.0
    return float(norm.sf((c - m) / s))


def _f_first5(x: np.ndarray) -> np.ndarray:
    k = min(5, x.shape[1])
    return np.arctan(x[:, :k].sum(axis=1) / math.sqrt(5.0))


def _corr_normal_sampler(d: int, rho: float):
    chol = np.linalg.cholesky(_ar_cov(d, rho))

    def sample(rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.normal(size=(n, d)) @ chol.T

    return sample


def _expit_plus_mean(tau: float, s: float, c: float) -> float:
    # E[max(expit(tau + s Z) - c, 0)] by a dense deterministic quadrature
    z = np.linspace(-12.0, 12.0, 24001)
    vals = np.maximum(expit(tau + s * z) - c, 0.0) * norm.pdf(z)
    return float(np.trapezoid(vals, z))


def _rct_draw(sample_x, mu, noise) -> Callable[[np.random.Generator, int], dict]:
    # fixed draw order (x, w, control noise) keeps replicate streams aligned
    def draw(rng: np.random.Generator, n: int) -> dict:
        x = sample_x(rng, n)
        w = (rng.random(n) < 0.5).astype(np.float64)
        y0 = noise(rng, x)
        y = y0 + w * mu(x)
        return {"x": x, "y": y, "w": w, "e": np.full(n, 0.5)}

    return draw


def _build_family(spec: DgpSpec) -> _Family:
    fam = spec.family
    p = dict(spec.params)

    def bad(msg: str) -> ValueError:
        return ValueError(f"{fam}: {msg}")

    if fam == "linear_rct" or fam == "custom":
        if fam == "linear_rct":
            d = int(p.get("d", 20))
            bnorm = float(p.get("beta_norm", 0.5))
            if d < 1 or bnorm < 0:
                raise bad("need d >= 1 and beta_norm >= 0")
            beta = np.full(d, 1.0)
            beta *= (bnorm / float(np.linalg.norm(beta))) if bnorm > 0 else 0.0
            tau = float(p.get("tau", 0.0))
        else:
            if "coef" not in p:
                raise bad("needs an explicit coef vector")
            beta = np.asarray(p["coef"], dtype=np.float64)
            if beta.ndim != 1 or beta.size < 1:
                raise bad("coef must be a nonempty vector")
            d = beta.size
            tau = float(p.get("intercept", 0.0))
        noise_sd = float(p.get("noise_sd", 1.0))
        if noise_sd < 0:
            raise bad("noise_sd must be nonnegative")
        c = 0.0 if spec.cutoff is None else float(spec.cutoff)
        sigma_mu = float(np.linalg.norm(beta))

        def mu(x: np.ndarray) -> np.ndarray:
            return tau + np.asarray(x, dtype=np.float64) @ beta

        def sample_x(rng: np.random.Generator, n: int) -> np.ndarray:
            return rng.normal(size=(n, d))

        oracle = Oracle(
            family=fam, cutoff=c, mu=mu, sample_x=sample_x,
            optimal_utility=_gauss_plus_mean(tau - c, sigma_mu),
            optimal_mass=_gauss_tail(tau, sigma_mu, c),
            is_null=(sigma_mu == 0.0 and tau <= c),
        )
        noise = lambda rng, x: rng.normal(0.0, noise_sd, size=x.shape[0]) \
            if noise_sd > 0 else np.zeros(x.shape[0])
        return _Family(oracle, _rct_draw(sample_x, mu, noise), "gaussian")

    if fam == "hetero_rct":
        d = int(p.get("d", 100))
        theta = float(p.get("theta", 0.45))
        tau = float(p.get("tau", 0.0))
        rho = float(p.get("rho", 0.2))
        spike = int(p.get("spike", 5))
        if d < 1 or theta < 0 or not (0 <= rho < 1) or spike < 1:
            raise bad("need d >= 1, theta >= 0, rho in [0,1), spike >= 1")
        beta = _spike_beta(d, theta, spike)
        cov = _ar_cov(d, rho)
        sigma_mu = float(math.sqrt(beta @ cov @ beta))
        c = 0.0 if spec.cutoff is None else float(spec.cutoff)
        sample_x = _corr_normal_sampler(d, rho)

        def mu(x: np.ndarray) -> np.ndarray:
            return tau + np.asarray(x, dtype=np.float64) @ beta

        oracle = Oracle(
            family=fam, cutoff=c, mu=mu, sample_x=sample_x,
            optimal_utility=_gauss_plus_mean(tau - c, sigma_mu),
            optimal_mass=_gauss_tail(tau, sigma_mu, c),
            is_null=(sigma_mu == 0.0 and tau <= c),
        )
        noise = lambda rng, x: rng.exponential(1.0, size=x.shape[0]) - 1.0
        return _Family(oracle, _rct_draw(sample_x, mu, noise), "gaussian")

    if fam == "binary_logistic":
        d = int(p.get("d", 100))
        theta = float(p.get("theta", 2.0))
        tau = float(p.get("tau", 2.2))
        rho = float(p.get("rho", 0.2))
        spike = int(p.get("spike", 5))
        if d < 1 or theta < 0 or not (0 <= rho < 1) or spike < 1:
            raise bad("need d >= 1, theta >= 0, rho in [0,1), spike >= 1")
        c = 0.9 if spec.cutoff is None else float(spec.cutoff)
        if not (0.0 < c < 1.0):
            raise bad("cutoff must lie strictly inside (0, 1)")
        beta = _spike_beta(d, theta, spike)
        cov = _ar_cov(d, rho)
        sigma_mu = float(math.sqrt(beta @ cov @ beta))
        sample_x = _corr_normal_sampler(d, rho)

        def mu(x: np.ndarray) -> np.ndarray:
            return expit(tau + np.asarray(x, dtype=np.float64) @ beta)

        logit_c = math.log(c / (1.0 - c))
        oracle = Oracle(
            family=fam, cutoff=c, mu=mu, sample_x=sample_x,
            optimal_utility=_expit_plus_mean(tau, sigma_mu, c),
            optimal_mass=_gauss_tail(tau, sigma_mu, logit_c),
            is_null=(sigma_mu == 0.0 and expit(tau) <= c),
        )

        def draw(rng: np.random.Generator, n: int) -> dict:
            x = sample_x(rng, n)
            y = (rng.random(n) < mu(x)).astype(np.float64)
            return {"x": x, "y": y}

        return _Family(oracle, draw, "binary")

    if fam == "nonneg_rct":
        q = float(p.get("q", 1.0))
        if not (0.0 < q <= 1.0):
            raise bad("responder fraction q must lie in (0, 1]")
        tau = float(p.get("tau", 0.1 / q))
        tau0 = float(p.get("tau0", 0.0))
        noise_sd = float(p.get("noise_sd", 1.0))
        c = 0.0 if spec.cutoff is None else float(spec.cutoff)

        def mu(x: np.ndarray) -> np.ndarray:
            # the centered part has zero coordinate sum, so the coordinate
            # mean recovers the CATE exactly
            return np.asarray(x, dtype=np.float64).mean(axis=1)

        def sample_x(rng: np.random.Generator, n: int) -> np.ndarray:
            z = (rng.random(n) < q).astype(np.float64)
            a = rng.normal(size=(n, 5))
            l = a - a.mean(axis=1, keepdims=True)
            return (tau * z + tau0 * (1.0 - z))[:, None] + l

        oracle = Oracle(
            family=fam, cutoff=c, mu=mu, sample_x=sample_x,
            optimal_utility=q * max(tau - c, 0.0) + (1 - q) * max(tau0 - c, 0.0),
            optimal_mass=q * float(tau > c) + (1 - q) * float(tau0 > c),
            is_null=(max(tau, tau0) <= c),
        )
        noise = lambda rng, x: rng.normal(0.0, noise_sd, size=x.shape[0]) \
            if noise_sd > 0 else np.zeros(x.shape[0])
        return _Family(oracle, _rct_draw(sample_x, mu, noise), "gaussian")

    if fam in ("null_setting1", "null_setting2", "null_setting3"):
        outcome = str(p.get("outcome", "ipw"))
        if outcome not in ("ipw", "binary"):
            raise bad("outcome must be 'ipw' or 'binary'")
        if fam == "null_setting1":
            d = 50
            sample_x = _corr_normal_sampler(d, 0.2)
            eps = lambda rng, x: rng.exponential(1.0, size=x.shape[0]) - 1.0
        elif fam == "null_setting2":
            d = 100

            def sample_x(rng: np.random.Generator, n: int) -> np.ndarray:
                return (rng.integers(0, 2, size=(n, d)) * 2 - 1).astype(np.float64)

            eps = lambda rng, x: rng.standard_t(5, size=x.shape[0])
        else:
            d = 150

            def sample_x(rng: np.random.Generator, n: int) -> np.ndarray:
                return rng.exponential(1.0, size=(n, d)) - 1.0

            eps = lambda rng, x: rng.normal(size=x.shape[0]) * np.sqrt(
                1.0 + _f_first5(x) ** 2)

        if outcome == "binary":
            c = 0.5 if spec.cutoff is None else float(spec.cutoff)
            mu_level = 0.5
            oracle = Oracle(
                family=fam, cutoff=c, sample_x=sample_x,
                mu=lambda x: np.full(np.atleast_2d(x).shape[0], mu_level),
                optimal_utility=max(mu_level - c, 0.0),
                optimal_mass=float(mu_level > c), is_null=(mu_level <= c),
            )

            def draw(rng: np.random.Generator, n: int) -> dict:
                x = sample_x(rng, n)
                y = (rng.random(n) < mu_level).astype(np.float64)
                return {"x": x, "y": y}

            return _Family(oracle, draw, "binary")

        c = 0.0 if spec.cutoff is None else float(spec.cutoff)
        oracle = Oracle(
            family=fam, cutoff=c, sample_x=sample_x,
            mu=lambda x: np.zeros(np.atleast_2d(x).shape[0]),
            optimal_utility=max(0.0 - c, 0.0), optimal_mass=float(0.0 > c),
            is_null=(0.0 <= c),
        )

        def draw(rng: np.random.Generator, n: int) -> dict:
            # zero CATE: both arms share the same outcome
            x = sample_x(rng, n)
            w = (rng.random(n) < 0.5).astype(np.float64)
            y = _f_first5(x) + eps(rng, x)
            return {"x": x, "y": y, "w": w, "e": np.full(n, 0.5)}

        return _Family(oracle, draw, "gaussian")

    raise ValueError(f"unknown DGP family {spec.family!r}")


def sample_dgp(
    spec: DgpSpec, n: int, rng: Optional[np.random.Generator] = None,
) -> Tuple[Dataset, Oracle]:
    """Draw one dataset of size n plus the family's oracle.

    The dataset seed (which fixes the auxiliary uniforms) is drawn from the
    stream before the rows, so a given generator state determines the whole
    dataset including its session randomness.
    """
    if n < 1:
        raise ValueError("need at least one row")
    fam = _build_family(spec)
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence((0, 4)))
    seed = int(rng.integers(2 ** 62))
    rows = fam.draw(rng, n)
    return load_dataset(rows, seed=seed), fam.oracle


def true_utility(
    trace: Optional[RegionTrace], oracle: Oracle, mc_n: int = 200_000,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """Monte Carlo utility of a traced region: E[(mu(X) - c) 1{X in R}] over
    mc_n fresh covariates.  None stands for the empty region and scores 0."""
    if mc_n < 1000:
        raise ValueError("mc_n below 1000 is too noisy to report")
    if trace is None:
        return 0.0
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence((7, 0)))
    x = oracle.sample_x(rng, int(mc_n))
    member = trace.contains_batch(x)
    if not member.any():
        return 0.0
    return float(np.mean((oracle.mu(x) - oracle.cutoff) * member))


# ---------------------------------------------------------------------------
# Experiment runner


@dataclass
class MethodSpec:
    """One strategy cell of an experiment.

    transform, when set, is an apply_transform_config payload (e.g.
    {"transform": "aipw", "K": 5, "learner": {...}}); the runner injects a
    per-replicate seed unless the payload pins one.  Presets that take no
    split fraction (global, bonferroni) run once per replicate instead of
    once per grid point.
    """

    name: str
    preset: str = "proportional"
    scorer: ScorerSpec = field(default_factory=lambda: ScorerSpec("linear"))
    alpha0: float = 0.0
    transform: Optional[dict] = None
    preset_kw: dict = field(default_factory=dict)

    @property
    def uses_p(self) -> bool:
        return self.preset not in ("global", "bonferroni")

    def to_dict(self) -> dict:
        return {"name": self.name, "preset": self.preset,
                "scorer": self.scorer.to_dict(), "alpha0": self.alpha0,
                "transform": self.transform, "preset_kw": dict(self.preset_kw)}

    @classmethod
    def from_dict(cls, d: dict) -> "MethodSpec":
        scorer = d.get("scorer")
        return cls(
            name=d["name"], preset=d.get("preset", "proportional"),
            scorer=ScorerSpec.from_dict(scorer) if scorer else ScorerSpec("linear"),
            alpha0=float(d.get("alpha0", 0.0)), transform=d.get("transform"),
            preset_kw=dict(d.get("preset_kw") or {}),
        )


@dataclass
class ExperimentConfig:
    """Everything a run needs; serializes to/from JSON."""

    name: str
    dgp: DgpSpec
    n: int
    methods: List[MethodSpec]
    p_grid: List[float] = field(default_factory=lambda: [0.2, 0.5, 0.8])
    replicates: int = 500
    alpha: float = 0.05
    seed: int = 0
    mc_n: int = 200_000
    n_min: int = 30
    mode_overrides: dict = field(default_factory=dict)
    include_oracle: bool = False

    def to_dict(self) -> dict:
        return {
            "name": self.name, "dgp": self.dgp.to_dict(), "n": self.n,
            "methods": [m.to_dict() for m in self.methods],
            "p_grid": list(self.p_grid), "replicates": self.replicates,
            "alpha": self.alpha, "seed": self.seed, "mc_n": self.mc_n,
            "n_min": self.n_min, "mode_overrides": dict(self.mode_overrides),
            "include_oracle": self.include_oracle,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(
            name=d["name"], dgp=DgpSpec.from_dict(d["dgp"]), n=int(d["n"]),
            methods=[MethodSpec.from_dict(m) for m in d["methods"]],
            p_grid=[float(v) for v in d.get("p_grid", [0.2, 0.5, 0.8])],
            replicates=int(d.get("replicates", 500)),
            alpha=float(d.get("alpha", 0.05)), seed=int(d.get("seed", 0)),
            mc_n=int(d.get("mc_n", 200_000)), n_min=int(d.get("n_min", 30)),
            mode_overrides=dict(d.get("mode_overrides") or {}),
            include_oracle=bool(d.get("include_oracle", False)),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))


@dataclass
class MetricsRow:
    method: str
    p: Optional[float]
    replicates: int
    utility: float
    utility_se: float
    power: float
    power_se: float
    mass: float
    type1: float
    type1_se: float

    def to_dict(self) -> dict:
        return {
            "method": self.method, "p": self.p, "replicates": self.replicates,
            "utility": self.utility, "utility_se": self.utility_se,
            "power": self.power, "power_se": self.power_se, "mass": self.mass,
            "type1": self.type1, "type1_se": self.type1_se,
        }


_CSV_FIELDS = ["method", "p", "replicates", "utility", "utility_se",
               "power", "power_se", "mass", "type1", "type1_se"]


@dataclass
class ExperimentResult:
    """Aggregated rows plus the per-replicate arrays the rows were reduced
    from (keyed by (method name, p or None)); cells carry 'utility' (already
    normalized when the experiment is), 'rejected', 'type1', 'mass'."""

    config: ExperimentConfig
    rows: List[MetricsRow]
    cells: Dict[Tuple[str, Optional[float]], Dict[str, np.ndarray]]
    optimal_utility: float
    optimal_mass: float
    normalized: bool
    flags: List[str]

    def cell(self, method: str, p: Optional[float] = None) -> Dict[str, np.ndarray]:
        return self.cells[(method, p)]

    def row(self, method: str, p: Optional[float] = None) -> MetricsRow:
        for r in self.rows:
            if r.method == method and r.p == p:
                return r
        raise KeyError((method, p))

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "optimal_utility": self.optimal_utility,
            "optimal_mass": self.optimal_mass,
            "normalized": self.normalized,
            "flags": list(self.flags),
            "rows": [r.to_dict() for r in self.rows],
        }

    def plot_data(self) -> dict:
        curves: Dict[str, List[float]] = {}
        lines: Dict[str, float] = {}
        for r in self.rows:
            if r.p is None:
                lines[r.method] = r.utility
            else:
                curves.setdefault(r.method, []).append(r.utility)
        return {"x": list(self.config.p_grid), "series": curves,
                "lines": lines,
                "y": "normalized utility" if self.normalized else "utility"}

    def write_outputs(self, out_dir: str) -> Dict[str, str]:
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "csv": os.path.join(out_dir, "metrics.csv"),
            "json": os.path.join(out_dir, "metrics.json"),
            "plot": os.path.join(out_dir, "plot_data.json"),
        }
        with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=_CSV_FIELDS)
            writer.writeheader()
            for r in self.rows:
                writer.writerow({k: ("" if v is None else v)
                                 for k, v in r.to_dict().items()})
        with open(paths["json"], "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
        with open(paths["plot"], "w", encoding="utf-8") as fh:
            json.dump(self.plot_data(), fh, indent=2)
        return paths


def _mean_se(values: np.ndarray) -> Tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    m = float(v.mean())
    if v.size < 2:
        return m, 0.0
    return m, float(v.std(ddof=1) / math.sqrt(v.size))


def run_experiment(
    config: ExperimentConfig, rng: Optional[np.random.Generator] = None,
) -> ExperimentResult:
    """Run every (method, split fraction) cell over common-random-number
    replicates and reduce to one MetricsRow per cell.

    Utilities are evaluated on one covariate pool shared by all cells and
    normalized by the pool utility of the oracle-optimal region whenever the
    process is non-null.  The Type I column tracks the oracle-checked event
    that a nonempty reported region has pool mean at or below the cutoff;
    non-null cells exceeding alpha are flagged.  The `rng` argument is
    accepted for signature symmetry but replicate streams are derived from
    config.seed so cells stay reproducible in isolation.
    """
    del rng  # streams are derived from config.seed; see module docstring
    if config.replicates < 1:
        raise ValueError("need at least one replicate")
    if not config.methods:
        raise ValueError("need at least one method")
    if any(not (0.0 < p < 1.0) for p in config.p_grid):
        raise ValueError("split fractions must lie strictly inside (0, 1)")
    fam = _build_family(config.dgp)
    oracle = fam.oracle
    mode_kw = {"mode": fam.mode, "cutoff": oracle.cutoff,
               "n_min": config.n_min}
    mode_kw.update(config.mode_overrides)
    mode_cfg = ModeConfig(**mode_kw)

    if config.mc_n < 1000:
        raise ValueError("mc_n below 1000 is too noisy to report")
    pool_rng = np.random.default_rng(np.random.SeedSequence((config.seed, 3)))
    pool_x = oracle.sample_x(pool_rng, int(config.mc_n))
    mu_pool = oracle.mu(pool_x)
    gain = mu_pool - oracle.cutoff
    opt_util = float(np.maximum(gain, 0.0).mean())
    opt_mass = float((gain > 0.0).mean())
    normalized = opt_util > 0.0

    grid = [(m_idx, m, p_idx, p)
            for m_idx, m in enumerate(config.methods)
            for p_idx, p in (enumerate(config.p_grid) if m.uses_p
                             else [(0, None)])]
    raw: Dict[Tuple[str, Optional[float]], Dict[str, list]] = {
        (m.name, p): {"utility": [], "rejected": [], "type1": [], "mass": []}
        for _, m, _, p in grid
    }
    if len(raw) != len(grid):
        raise ValueError("method names must be unique")
    if config.include_oracle and any(m.name == "oracle" for m in config.methods):
        raise ValueError("method name 'oracle' is reserved for the reference row")

    for rep in range(config.replicates):
        ds_rng = np.random.default_rng(
            np.random.SeedSequence((config.seed, rep, 0)))
        base_ds, _ = sample_dgp(config.dgp, config.n, ds_rng)
        transformed: Dict[str, Dataset] = {}
        for m_idx, m, p_idx, p in grid:
            ds_m = base_ds
            if m.transform is not None:
                key = json.dumps(m.transform, sort_keys=True)
                if key not in transformed:
                    payload = dict(m.transform)
                    payload.setdefault("seed", rep)
                    transformed[key] = apply_transform_config(base_ds, payload)
                ds_m = transformed[key]
            m_rng = np.random.default_rng(
                np.random.SeedSequence((config.seed, rep, 1 + m_idx, p_idx)))
            cfg = StrategyConfig(
                mode_config=mode_cfg, alpha=config.alpha,
                p=(p if p is not None else 0.2), alpha0=m.alpha0,
                scorer=m.scorer,
            )
            report = run_preset(m.preset, ds_m, cfg, rng=m_rng, **m.preset_kw)
            cell = raw[(m.name, p)]
            cell["rejected"].append(bool(report.rejected))
            if report.rejected and report.region is not None:
                member = report.region.contains_batch(pool_x)
                k = int(member.sum())
                util = float((gain * member).mean())
                mass = k / float(member.size)
                # a region the pool cannot see has no demonstrable gain
                is_type1 = (k == 0) or float(mu_pool[member].mean()) <= oracle.cutoff
            else:
                util, mass, is_type1 = 0.0, 0.0, False
            cell["utility"].append(util / opt_util if normalized else util)
            cell["mass"].append(mass)
            cell["type1"].append(is_type1)

    rows: List[MetricsRow] = []
    cells: Dict[Tuple[str, Optional[float]], Dict[str, np.ndarray]] = {}
    flags: List[str] = []
    for m_idx, m, p_idx, p in grid:
        cell = {k: np.asarray(v) for k, v in raw[(m.name, p)].items()}
        cells[(m.name, p)] = cell
        util, util_se = _mean_se(cell["utility"])
        power, power_se = _mean_se(cell["rejected"].astype(np.float64))
        type1, type1_se = _mean_se(cell["type1"].astype(np.float64))
        rows.append(MetricsRow(
            method=m.name, p=p, replicates=config.replicates,
            utility=util, utility_se=util_se, power=power, power_se=power_se,
            mass=float(cell["mass"].mean()), type1=type1, type1_se=type1_se,
        ))
        if normalized and type1 > config.alpha:
            flags.append(
                f"type1 audit: {m.name} at p={p} runs {type1:.4f} > "
                f"alpha={config.alpha}")

    if config.include_oracle:
        # fixed optimal region as a reference row: normalizes to 1 exactly
        member = gain > 0.0
        util = 1.0 if normalized else opt_util
        arr = np.full(config.replicates, util)
        cells[("oracle", None)] = {
            "utility": arr, "rejected": np.ones(config.replicates, dtype=bool),
            "type1": np.zeros(config.replicates, dtype=bool),
            "mass": np.full(config.replicates, float(member.mean())),
        }
        rows.append(MetricsRow(
            method="oracle", p=None, replicates=config.replicates,
            utility=util, utility_se=0.0, power=1.0, power_se=0.0,
            mass=float(member.mean()), type1=0.0, type1_se=0.0,
        ))

    return ExperimentResult(
        config=config, rows=rows, cells=cells, optimal_utility=opt_util,
        optimal_mass=opt_mass, normalized=normalized, flags=flags,
    )
