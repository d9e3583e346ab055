import math

import numpy as np
import pytest
from scipy.stats import chisquare

from varietydist.catalog import catalog
from varietydist.density import MVN, VN, DensityModel, log_density
from varietydist.hmc import (
    AllChainsFailed,
    DualAveraging,
    HmcConfig,
    NonFinite,
    chain_rng,
    hamiltonian,
    hmc_transition,
    init_state,
    leapfrog,
    run_chains,
)
from varietydist.polynomial import Polynomial, PolySystem, VarContext

CIRCLE = catalog("circle").system
BOX2 = ((-1.5, 1.5), (-1.5, 1.5))


def circle_vn(sigma=0.1):
    return DensityModel(CIRCLE, VN(sigma**2))


def gaussian_model(mu, cov):
    ctx = VarContext(tuple(f"x{i}" for i in range(len(mu))))
    eqs = tuple(Polynomial.var(ctx, i) - float(mu[i]) for i in range(len(mu)))
    return DensityModel(PolySystem(ctx, eqs), MVN(np.asarray(cov)))


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            dict(n_chains=0),
            dict(step_size=0.0),
            dict(n_leapfrog=0),
            dict(mass=-1.0),
            dict(target_accept=1.0),
            dict(jitter=1.0),
            dict(seed=2**64),
            dict(init_box=None),
            dict(init_box=((1, 0), (0, 1))),
            dict(init_points=np.zeros((3, 2))),
        ],
    )
    def test_invalid(self, kw):
        base = dict(init_box=BOX2)
        base.update(kw)
        with pytest.raises(ValueError):
            HmcConfig(**base)

    def test_init_points_must_be_in_truncation(self):
        m = DensityModel(CIRCLE, VN(0.01), truncation=BOX2)
        cfg = HmcConfig(n_chains=1, init_points=[[3.0, 0.0]], n_warmup=0, n_samples=1)
        with pytest.raises(ValueError):
            run_chains(m, cfg)


class TestLeapfrog:
    def test_zero_step(self):
        x, p = np.array([1.05, 0.0]), np.array([0.3, -0.2])
        x1, p1 = leapfrog(circle_vn(), x, p, 0.0, 10)
        np.testing.assert_array_equal(x1, x)
        np.testing.assert_array_equal(p1, p)

    def test_reversible(self):
        m = circle_vn()
        x, p = np.array([1.05, 0.2]), np.array([0.3, -0.7])
        x1, p1 = leapfrog(m, x, p, 0.01, 25)
        x2, p2 = leapfrog(m, x1, -p1, 0.01, 25)
        np.testing.assert_allclose(x2, x, atol=1e-10)
        np.testing.assert_allclose(-p2, p, atol=1e-10)

    def test_energy_error_second_order(self):
        m = circle_vn()
        x, p = np.array([1.05, 0.0]), np.array([0.2, 0.5])
        H0 = hamiltonian(m, x, p)
        errs = []
        T = 0.04
        for eps in (0.004, 0.002, 0.001):
            x1, p1 = leapfrog(m, x, p, eps, int(round(T / eps)))
            errs.append(abs(hamiltonian(m, x1, p1) - H0))
        assert 3.0 < errs[0] / errs[1] < 5.0
        assert 3.0 < errs[1] / errs[2] < 5.0

    def test_volume_preserving(self):
        m = circle_vn()
        z = np.array([1.05, 0.2, 0.3, -0.4])
        h = 1e-6

        def step(z):
            x1, p1 = leapfrog(m, z[:2], z[2:], 0.01, 5)
            return np.concatenate([x1, p1])

        D = np.empty((4, 4))
        for k in range(4):
            e = np.zeros(4)
            e[k] = h
            D[:, k] = (step(z + e) - step(z - e)) / (2 * h)
        assert abs(np.linalg.det(D) - 1.0) < 1e-6

    def test_non_finite_raises(self):
        m = DensityModel(PolySystem.from_strings(("x",), ["x^9 - 1"]), VN(1e-4))
        with pytest.raises(NonFinite):
            leapfrog(m, np.array([40.0]), np.array([1e200]), 1e200, 3)


class TestTransition:
    def test_state_consistency_and_counts(self):
        m = circle_vn()
        st = init_state(m, [1.1, 0.0])
        rng = chain_rng(0, 0)
        for _ in range(50):
            st = hmc_transition(m, st, 0.05, 10, rng)
            assert st.log_density == log_density(m, st.x)
        assert st.iteration == 50
        assert 0 < st.accept_count <= 50

    def test_energy_decrease_always_accepted(self):
        # from far outside the band the first move downhill in H is always taken
        m = circle_vn(0.1)
        accepted = 0
        for seed in range(20):
            st = init_state(m, [1.8, 0.0])
            st = hmc_transition(m, st, 1e-3, 5, chain_rng(seed, 0))
            accepted += st.accept_count
        assert accepted == 20


def test_dual_averaging_converges_to_target():
    da = DualAveraging(1.0, 0.8)
    eps = 1.0
    for _ in range(2000):
        # toy acceptance model decreasing in eps
        eps = da.update(math.exp(-eps))
    assert math.exp(-da.final) == pytest.approx(0.8, abs=0.02)


class TestRunChains:
    def test_empty_samples(self):
        b = run_chains(circle_vn(), HmcConfig(n_chains=2, n_warmup=10, n_samples=0, init_box=BOX2))
        assert len(b) == 0 and b.summary["transitions"] == 0

    def test_deterministic_and_chain_independent(self):
        cfg = HmcConfig(n_chains=3, n_warmup=50, n_samples=50, init_box=BOX2, seed=5)
        a, b = run_chains(circle_vn(), cfg), run_chains(circle_vn(), cfg)
        np.testing.assert_array_equal(a.points, b.points)
        np.testing.assert_array_equal(a.meta["chain_id"], np.repeat([0, 1, 2], 50))
        one = run_chains(circle_vn(), HmcConfig(n_chains=1, n_warmup=50, n_samples=50, init_box=BOX2, seed=5))
        np.testing.assert_array_equal(one.points, a.points[:50])

    def test_summary_exact_rates(self):
        b = run_chains(circle_vn(), HmcConfig(n_chains=2, n_warmup=100, n_samples=100, init_box=BOX2, seed=1))
        s = b.summary
        assert s["accepted"] == int(b.meta["accepted"].sum())
        assert s["acceptance_rate"] == s["accepted"] / s["transitions"]
        for ch in s["chains"]:
            sel = b.meta["chain_id"] == ch["chain_id"]
            assert ch["accepted"] == int(b.meta["accepted"][sel].sum())
            assert ch["acceptance_rate"] == ch["accepted"] / ch["transitions"]

    def test_warmup_accept_in_range(self):
        b = run_chains(circle_vn(0.1), HmcConfig(n_chains=4, n_warmup=500, n_samples=10, init_box=BOX2, seed=2))
        for ch in b.summary["chains"]:
            assert 0.6 <= ch["warmup_mean_accept_prob"] <= 0.95

    def test_all_chains_failed(self):
        # density is -inf everywhere inside the init box: no chain can start
        m = DensityModel(CIRCLE, VN(0.01), truncation=((5, 6), (5, 6)))
        with pytest.raises(AllChainsFailed):
            run_chains(m, HmcConfig(n_chains=2, n_warmup=1, n_samples=1, init_box=BOX2))

    def test_circle_stationarity(self):
        sigma = 0.05
        b = run_chains(circle_vn(sigma), HmcConfig(n_chains=4, n_warmup=1000, n_samples=2000, init_box=BOX2, seed=7))
        r = np.hypot(b.points[:, 0], b.points[:, 1])
        assert abs(np.std(r - 1) - sigma) < 0.15 * sigma
        ang = np.arctan2(b.points[:, 1], b.points[:, 0])
        counts, _ = np.histogram(ang, bins=12, range=(-math.pi, math.pi))
        assert chisquare(counts).pvalue > 0.01

    def test_gaussian_target(self):
        mu = np.array([0.5, -1.0])
        cov = np.array([[0.5, 0.2], [0.2, 0.3]])
        m = gaussian_model(mu, cov)
        cfg = HmcConfig(n_chains=4, n_warmup=500, n_samples=2500, n_leapfrog=8, init_box=((-3, 3), (-3, 3)), seed=3)
        X = run_chains(m, cfg).points
        # Monte Carlo standard error by batch means (50 batches of 200 draws)
        se = X.reshape(50, -1, 2).mean(axis=1).std(axis=0, ddof=1) / math.sqrt(50)
        assert np.all(np.abs(X.mean(0) - mu) < 3 * se)
        err = np.linalg.norm(np.cov(X.T) - cov) / np.linalg.norm(cov)
        assert err < 0.10
