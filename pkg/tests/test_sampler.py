import numpy as np
import pytest

from edgefield.hmc import (
    Diagnostics,
    SamplerConfig,
    ess_bulk,
    run_chains,
    sample_target,
    split_rhat,
)
from edgefield.model import Dataset, ModelSpec
from edgefield.synth import Scenario, make_dataset


def std_normal_lp_grad(q):
    return -0.5 * float(q @ q), -q


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError, match="chains"):
            SamplerConfig(chains=0)
        with pytest.raises(ValueError, match="target_accept"):
            SamplerConfig(target_accept=1.5)


class TestToyTargets:
    @pytest.fixture(scope="class")
    def normal5(self):
        cfg = SamplerConfig(chains=4, warmup=1000, samples=1000, seed=42)
        return sample_target(std_normal_lp_grad, 5, cfg)

    def test_standard_normal_moments(self, normal5):
        draws, _, _, _ = normal5
        flat = draws.reshape(-1, 5)
        assert np.all(np.abs(flat.mean(axis=0)) < 0.05)
        assert np.all(np.abs(flat.var(axis=0) - 1.0) < 0.1)

    def test_standard_normal_rhat(self, normal5):
        draws, _, _, _ = normal5
        for j in range(5):
            r, flag = split_rhat(draws[:, :, j])
            assert not flag
            assert r < 1.01

    def test_acceptance_near_target(self, normal5):
        _, _, _, mean_accept = normal5
        assert 0.8 - 0.15 <= mean_accept <= 0.8 + 0.1

    def test_determinism(self):
        cfg = SamplerConfig(chains=2, warmup=200, samples=100, seed=5)
        a = sample_target(std_normal_lp_grad, 3, cfg)
        b = sample_target(std_normal_lp_grad, 3, cfg)
        assert np.array_equal(a[0], b[0])
        assert np.array_equal(a[1], b[1])

    def test_chain_stream_independence(self):
        cfg = SamplerConfig(chains=3, warmup=200, samples=100, seed=5)
        draws, _, _, _ = sample_target(std_normal_lp_grad, 3, cfg)
        assert not np.array_equal(draws[0], draws[1])
        assert not np.array_equal(draws[1], draws[2])

    def test_detailed_balance_2d_gaussian(self):
        cov = np.array([[1.0, 0.6], [0.6, 2.0]])
        prec = np.linalg.inv(cov)

        def lp_grad(q):
            g = -prec @ q
            return 0.5 * float(q @ g), g

        cfg = SamplerConfig(chains=4, warmup=1000, samples=2500, seed=11)
        draws, _, _, _ = sample_target(lp_grad, 2, cfg)
        emp = np.cov(draws.reshape(-1, 2).T)
        assert np.all(np.abs(emp - cov) <= 0.05 * np.abs(cov) + 0.01)


class TestSplitRhat:
    def test_constant_flagged_degenerate(self):
        r, flag = split_rhat(np.ones((4, 100)))
        assert r == 1.0 and flag

    def test_iid_normal(self):
        rng = np.random.default_rng(1)
        r, flag = split_rhat(rng.standard_normal((4, 1000)))
        assert not flag
        assert 0.99 <= r <= 1.01

    def test_shifted_chains_large(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((4, 500))
        x[0] += 10.0
        r, _ = split_rhat(x)
        assert r > 2.0

    def test_within_chain_drift_detected(self):
        # split halves catch a trend even in a single chain
        x = np.linspace(0, 1, 1000)[None, :] + 0.01 * np.random.default_rng(3).standard_normal((1, 1000))
        r, _ = split_rhat(x)
        assert r > 1.5

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            split_rhat(np.ones((1, 3)))


class TestEssBulk:
    def test_constant_flagged(self):
        e, flag = ess_bulk(np.ones((2, 100)))
        assert flag and e == 200.0

    def test_iid_normal_near_total(self):
        rng = np.random.default_rng(4)
        e, flag = ess_bulk(rng.standard_normal((4, 1000)))
        assert not flag
        assert abs(e - 4000) <= 0.2 * 4000

    def test_ar1_matches_analytic_rate(self):
        phi = 0.9
        rng = np.random.default_rng(6)
        n = 20000
        x = np.empty(n)
        x[0] = rng.standard_normal()
        innov = rng.standard_normal(n) * np.sqrt(1 - phi ** 2)
        for t in range(1, n):
            x[t] = phi * x[t - 1] + innov[t]
        e, _ = ess_bulk(x)
        target = (1 - phi) / (1 + phi)
        assert abs(e / n - target) <= 0.3 * target

    def test_too_short_rejected(self):
        with pytest.raises(ValueError):
            ess_bulk(np.ones(4))


class TestRunChains:
    @pytest.fixture(scope="class")
    def small_fit(self):
        synth, g, lg = make_dataset(Scenario(rows=4, cols=4), seed=3)
        cfg = SamplerConfig(chains=2, warmup=400, samples=300, seed=1)
        post, diag = run_chains(synth.data, g, lg, ModelSpec(variant="renege"), cfg)
        return post, diag

    def test_shapes_and_names(self, small_fit):
        post, _ = small_fit
        assert post.draws.shape[:2] == (2, 300)
        assert post.pointwise.shape == (600, 16)
        assert "alpha" in post.param_names
        assert "gamma" in post.param_names
        assert any(n.startswith("eps.") for n in post.param_names)
        gamma = post.column("gamma")
        assert np.all((gamma > 0) & (gamma < 1))

    def test_diagnostics_populated(self, small_fit):
        _, diag = small_fit
        assert set(diag.rhat) == set(diag.ess_bulk)
        assert all(r >= 1 - 1e-3 for r in diag.rhat.values())
        assert all(e >= 0 for e in diag.ess_bulk.values())
        report = diag.report()
        assert "divergences" in report
        assert "alpha" in report

    def test_bit_reproducible(self):
        synth, g, lg = make_dataset(Scenario(rows=4, cols=3), seed=2)
        cfg = SamplerConfig(chains=2, warmup=150, samples=80, seed=9)
        a, _ = run_chains(synth.data, g, lg, ModelSpec(variant="car"), cfg)
        b, _ = run_chains(synth.data, g, lg, ModelSpec(variant="car"), cfg)
        assert np.array_equal(a.draws, b.draws)
        assert np.array_equal(a.constrained, b.constrained)

    def test_posterior_mean_recovers_alpha(self):
        # strong data: E large, flat truth -> alpha posterior near log-rate
        synth, g, lg = make_dataset(
            Scenario(rows=4, cols=4, gradient=0.0, eta_scale=0.0,
                     sigma_theta2=0.01, expected_counts=500.0, true_alpha=0.5),
            seed=8)
        cfg = SamplerConfig(chains=2, warmup=500, samples=400, seed=2)
        post, _ = run_chains(synth.data, g, lg, ModelSpec(variant="car"), cfg)
        assert abs(post.column("alpha").mean() - 0.5) < 0.2

    def test_abort_on_nonfinite_init(self, small_fit):
        synth, g, lg = make_dataset(Scenario(rows=4, cols=3), seed=2)
        bad = Dataset(y=synth.data.y, expected=np.full(12, np.inf), X=synth.data.X)
        cfg = SamplerConfig(chains=1, warmup=10, samples=10, seed=0)
        with pytest.raises(RuntimeError, match="initialization"):
            run_chains(bad, g, lg, ModelSpec(variant="car"), cfg)


def test_degenerate_report_lists_parameter():
    d = Diagnostics(rhat={"alpha": 1.0}, ess_bulk={"alpha": 100.0},
                    degenerate=["alpha"], mean_accept=0.8)
    assert "degenerate" in d.report()
