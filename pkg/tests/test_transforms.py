"""Causal outcome transforms: inverse-propensity scores, cross-fitted
augmentation, and cutoff shifting."""

import numpy as np
import pytest

from chisel import (ChiselSession, Dataset, ModeConfig, reveal_random, run_test)
from chisel.transforms import (CausalRow, aipw_transform, apply_transform_config,
                               ipw_scores, ipw_transform, shift_by_cutoff)


def _rct(n, d=3, seed=0, cate=None, baseline=None, noise=1.0):
    """Randomized trial with known propensity 0.5 and additive effect."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, d))
    w = rng.integers(0, 2, n).astype(float)
    tau = cate(x) if cate is not None else np.zeros(n)
    base = baseline(x) if baseline is not None else np.zeros(n)
    y_obs = base + w * tau + rng.normal(scale=noise, size=n)
    ds = Dataset(x=x, y_test=ipw_scores(w, y_obs, np.full(n, 0.5)),
                 y_reveal=ipw_scores(w, y_obs, np.full(n, 0.5)),
                 aux=rng.random(n), seed=seed,
                 feature_names=[f"x{j+1}" for j in range(d)],
                 w=w, y_obs=y_obs, e=np.full(n, 0.5))
    return ds, tau


def _replicate_folds(n, K, seed):
    # the documented fold assignment: seeded shuffle, sizes differing by <= 1
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 3)))
    return rng.permutation(n) % K


class TestIpw:
    def test_treated_row(self):
        assert ipw_transform(CausalRow(np.zeros(1), w=1.0, y_obs=2.0, e=0.5)) == 4.0

    def test_control_row(self):
        assert ipw_transform(CausalRow(np.zeros(1), w=0.0, y_obs=2.0, e=0.5)) == -4.0

    def test_unbalanced_propensity(self):
        assert ipw_transform(CausalRow(np.zeros(1), w=1.0, y_obs=1.0, e=0.25)) == 4.0

    def test_propensity_outside_unit_interval_rejected(self):
        for e in (0.0, 1.0, -0.1, 1.7):
            with pytest.raises(ValueError):
                ipw_scores(np.array([1.0]), np.array([1.0]), np.array([e]))

    def test_vectorized_matches_per_row(self):
        rng = np.random.default_rng(4)
        w = rng.integers(0, 2, 50).astype(float)
        y = rng.normal(size=50)
        e = rng.uniform(0.2, 0.8, 50)
        batch = ipw_scores(w, y, e)
        for i in range(50):
            row = CausalRow(np.zeros(1), w=w[i], y_obs=y[i], e=e[i])
            assert batch[i] == ipw_transform(row)

    def test_unbiased_for_conditional_effect_within_region(self):
        # inside any fixed region, inverse-propensity scores average to the
        # treatment effect
        n = 200_000
        ds, tau = _rct(n, seed=11, cate=lambda x: x[:, 0],
                       baseline=lambda x: 0.5 * x[:, 1], noise=0.5)
        in_region = ds.x[:, 1] > 0.3
        diff = ds.y_test[in_region] - tau[in_region]
        se = diff.std(ddof=1) / np.sqrt(diff.size)
        assert abs(diff.mean()) < 3 * se


class TestAipw:
    def test_null_learner_reduces_to_ipw_exactly(self):
        ds, _ = _rct(400, seed=2, cate=lambda x: x[:, 0])
        out = aipw_transform(ds, K=5, learner_spec={"kind": "zero"}, seed=9)
        assert np.array_equal(out.y_test, ds.y_test)

    def test_arm_mean_learner_formula(self):
        ds, _ = _rct(120, seed=3, cate=lambda x: x[:, 0],
                     baseline=lambda x: x[:, 1])
        K, seed = 4, 17
        out = aipw_transform(ds, K=K, learner_spec={"kind": "mean"}, seed=seed)
        fold = _replicate_folds(ds.n, K, seed)
        w, y, e = ds.w, ds.y_obs, ds.e
        for i in range(ds.n):
            train = fold != fold[i]
            g1 = y[train & (w == 1.0)].mean()
            g0 = y[train & (w == 0.0)].mean()
            if w[i] == 1.0:
                want = g1 + (y[i] - g1) / e[i] - g0
            else:
                want = g1 - (g0 + (y[i] - g0) / (1.0 - e[i]))
            assert out.y_test[i] == pytest.approx(want, rel=1e-12)

    def test_fold_sizes_differ_by_at_most_one(self):
        for n, K in ((100, 5), (101, 5), (7, 3)):
            counts = np.bincount(_replicate_folds(n, K, 0), minlength=K)
            assert counts.max() - counts.min() <= 1

    def test_fold_hygiene_no_leakage(self):
        # perturbing one row changes only that row and rows in *other* folds
        # (whose nuisances were trained on it); its fold mates never move
        ds, _ = _rct(90, seed=5, cate=lambda x: x[:, 0],
                     baseline=lambda x: x[:, 1])
        K, seed = 3, 21
        fold = _replicate_folds(ds.n, K, seed)
        base = aipw_transform(ds, K=K, learner_spec={"kind": "linear"}, seed=seed)
        target = 7
        y2 = ds.y_obs.copy()
        y2[target] += 50.0
        ds2 = Dataset(x=ds.x, y_test=ipw_scores(ds.w, y2, ds.e),
                      y_reveal=ipw_scores(ds.w, y2, ds.e), aux=ds.aux,
                      seed=ds.seed, feature_names=ds.feature_names,
                      w=ds.w, y_obs=y2, e=ds.e)
        perturbed = aipw_transform(ds2, K=K, learner_spec={"kind": "linear"},
                                   seed=seed)
        mates = (fold == fold[target]) & (np.arange(ds.n) != target)
        assert np.array_equal(base.y_test[mates], perturbed.y_test[mates])
        others = fold != fold[target]
        assert not np.array_equal(base.y_test[others], perturbed.y_test[others])

    def test_same_mean_smaller_variance_with_informative_learner(self):
        n = 10_000
        ds, _ = _rct(n, seed=8, cate=lambda x: 2.0 * x[:, 0],
                     baseline=lambda x: 3.0 * x[:, 1], noise=0.5)
        out = aipw_transform(ds, K=5, learner_spec={"kind": "linear"}, seed=1)
        diff = out.y_test - ds.y_test
        se = diff.std(ddof=1) / np.sqrt(n)
        assert abs(diff.mean()) < 3 * se
        assert out.y_test.var() < ds.y_test.var()

    def test_analyst_channel_keeps_plain_scores(self):
        ds, _ = _rct(200, seed=6, cate=lambda x: x[:, 0])
        out = aipw_transform(ds, K=5, learner_spec={"kind": "linear"}, seed=2)
        assert np.array_equal(out.y_reveal, ds.y_reveal)
        assert not np.array_equal(out.y_test, ds.y_test)

    def test_validation_errors(self):
        ds, _ = _rct(50, seed=7)
        with pytest.raises(ValueError):
            aipw_transform(ds, K=1)
        with pytest.raises(ValueError):
            aipw_transform(ds, K=5, learner_spec={"kind": "forest"})
        plain = Dataset(x=ds.x, y_test=ds.y_test, y_reveal=ds.y_reveal,
                        aux=ds.aux, seed=0, feature_names=ds.feature_names)
        with pytest.raises(ValueError):
            aipw_transform(plain)


class TestShiftByCutoff:
    def test_zero_shift_is_identity(self):
        ds, _ = _rct(20, seed=1)
        out = shift_by_cutoff(ds, 0.0)
        assert np.array_equal(out.y_test, ds.y_test)
        assert np.array_equal(out.y_reveal, ds.y_reveal)

    def test_shift_moves_both_channels(self):
        ds = Dataset(x=np.zeros((1, 1)), y_test=np.array([1.0]),
                     y_reveal=np.array([1.0]), aux=np.array([0.5]), seed=0,
                     feature_names=["x1"])
        out = shift_by_cutoff(ds, 0.9)
        assert out.y_test[0] == pytest.approx(0.1)
        assert out.y_reveal[0] == pytest.approx(0.1)

    def test_shifted_run_matches_test_at_cutoff(self):
        # testing y - c against 0 is the same procedure as testing y against c
        rng = np.random.default_rng(13)
        x = rng.normal(size=(80, 2))
        y = rng.normal(loc=0.4, size=80)
        c = 0.25
        base = Dataset(x=x, y_test=y, y_reveal=y.copy(),
                       aux=np.random.default_rng(99).random(80), seed=0,
                       feature_names=["x1", "x2"])
        shifted = shift_by_cutoff(base, c)

        cfg_at_c = ModeConfig(mode="gaussian", cutoff=c, strict=False, n_min=5)
        cfg_at_0 = ModeConfig(mode="gaussian", cutoff=0.0, strict=False, n_min=5)
        sess_a = ChiselSession(base, cfg_at_c, alpha=0.05)
        sess_b = ChiselSession(shifted, cfg_at_0, alpha=0.05)
        for sess in (sess_a, sess_b):
            reveal_random(sess, 20)
        for alpha_t in (0.01, 0.02, 0.02):
            ra = run_test(sess_a, alpha_t)
            rb = run_test(sess_b, alpha_t)
            assert ra.rejected == rb.rejected
            assert ra.alpha_t == rb.alpha_t
            # estimates and thresholds live on each session's outcome scale
            assert ra.statistic == pytest.approx(rb.statistic + c, abs=1e-9)
            assert ra.m_t == pytest.approx(rb.m_t + c, abs=1e-9)
            assert ra.c_t == pytest.approx(rb.c_t + c, abs=1e-9)
            assert ra.crit_z == pytest.approx(rb.crit_z, abs=1e-9)
            assert ra.sigma2_hat == pytest.approx(rb.sigma2_hat, rel=1e-9)
            if ra.rejected:
                break


class TestTransformConfig:
    def test_plain_ipw_config_is_passthrough(self):
        ds, _ = _rct(30, seed=4)
        out = apply_transform_config(ds, {"transform": "ipw"})
        assert np.array_equal(out.y_test, ds.y_test)

    def test_aipw_config_dispatches(self):
        ds, _ = _rct(60, seed=4, cate=lambda x: x[:, 0])
        via_config = apply_transform_config(
            ds, {"transform": "aipw", "K": 3, "learner": {"kind": "mean"},
                 "seed": 5})
        direct = aipw_transform(ds, K=3, learner_spec={"kind": "mean"}, seed=5)
        assert np.array_equal(via_config.y_test, direct.y_test)

    def test_cutoff_shift_applies(self):
        ds, _ = _rct(30, seed=4)
        out = apply_transform_config(ds, {"transform": "ipw", "cutoff": 1.5})
        assert np.allclose(out.y_test, ds.y_test - 1.5)

    def test_unknown_transform_rejected(self):
        ds, _ = _rct(10, seed=4)
        with pytest.raises(ValueError):
            apply_transform_config(ds, {"transform": "tmle"})
