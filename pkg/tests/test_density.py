import math

import numpy as np
import pytest

from varietydist.catalog import catalog
from varietydist.density import (
    HVN,
    MVN,
    VN,
    Beta,
    DensityModel,
    Exponential,
    Induced,
    RankDeficient,
    Uniform,
    band_statistic,
    evaluate,
    grad_log_density,
    isotropic,
    log_density,
    residual_normalized,
    residual_raw,
)
from varietydist.polynomial import PolySystem, Polynomial, VarContext

from helpers import fd_gradient, nonsingular_points

CIRCLE = catalog("circle").system
SPHERE_PLANE = catalog("sphere_plane").system


def circle_vn(sigma=0.1, truncation=None):
    return DensityModel(CIRCLE, VN(sigma**2), truncation)


class TestConstruction:
    def test_single_equation_kinds_need_m1(self):
        with pytest.raises(ValueError):
            DensityModel(SPHERE_PLANE, VN(0.01))
        with pytest.raises(ValueError):
            DensityModel(SPHERE_PLANE, HVN(0.01))

    def test_inequalities_rejected(self):
        with pytest.raises(ValueError):
            DensityModel(catalog("disc").system, VN(0.01))

    def test_covariance_checks(self):
        with pytest.raises(ValueError):
            MVN(np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(ValueError):
            DensityModel(SPHERE_PLANE, MVN(np.eye(2)))

    def test_bad_parameters(self):
        for bad in (lambda: VN(0.0), lambda: HVN(-1.0), lambda: Beta(0.0, 1.0), lambda: Exponential(0.0), lambda: Uniform(1, 1)):
            with pytest.raises(ValueError):
                bad()

    def test_truncation_box_checked(self):
        with pytest.raises(ValueError):
            circle_vn(truncation=((0, 1), (1, 0)))
        with pytest.raises(ValueError):
            circle_vn(truncation=((0, 1),))


class TestResiduals:
    def test_raw(self):
        m = circle_vn()
        np.testing.assert_array_equal(residual_raw(m, [1.0, 0.0]), [0.0])
        np.testing.assert_array_equal(residual_raw(m, [1.0, 1.0]), [1.0])
        sp = isotropic(SPHERE_PLANE, 0.1)
        np.testing.assert_array_equal(residual_raw(sp, [0.0, 0.0, 0.0]), [-1.0, 0.0])

    def test_vn_normalized_circle(self):
        assert residual_normalized(circle_vn(), [1.0, 1.0])[0] == pytest.approx(1 / (2 * math.sqrt(2)), abs=1e-12)

    def test_alpha_plus_on_curve(self):
        m = isotropic(catalog("alpha_plus").system, 0.1)
        for x in (1.0, -0.5, 2.0):
            y = math.sqrt(x**3 + x**2)
            assert abs(residual_normalized(m, [x, y])[0]) < 1e-14

    def test_mvn_identity_system(self):
        mu = np.array([0.3, -1.2, 2.0])
        ctx = VarContext(("a", "b", "c"))
        eqs = tuple(Polynomial.var(ctx, i) - float(mu[i]) for i in range(3))
        m = DensityModel(PolySystem(ctx, eqs), MVN(np.eye(3)))
        x = np.array([1.0, 2.0, -3.0])
        np.testing.assert_allclose(residual_normalized(m, x), x - mu, atol=1e-15)

    def test_mvn_overdetermined_formula(self):
        over = PolySystem.from_strings(("x",), ["x - 1", "x^2 - 1", "x^3 - 1"])
        m = DensityModel(over, MVN(np.eye(1) * 0.04))
        x = 1.3
        g = np.array([x - 1, x**2 - 1, x**3 - 1])
        J = np.array([[1.0], [2 * x], [3 * x**2]])
        expect = np.linalg.solve(J.T @ J, J.T @ g)
        np.testing.assert_allclose(residual_normalized(m, [x]), expect, rtol=1e-14)

    def test_rank_deficient_raises(self):
        with pytest.raises(RankDeficient) as err:
            residual_normalized(circle_vn(), [0.0, 0.0])
        assert err.value.smallest_singular_value == 0.0
        whitney = isotropic(catalog("whitney").system, 0.1)
        with pytest.raises(RankDeficient):
            log_density(whitney, [0.0, 0.0, -0.7])

    def test_mask_and_clamp_modes(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0]])
        ev = evaluate(circle_vn(), X, singular="mask")
        assert ev.ok.tolist() == [False, True]
        assert np.isnan(ev.log_density[0]) and np.isfinite(ev.log_density[1])
        ev = evaluate(circle_vn(), X, singular="clamp")
        assert ev.clamped.tolist() == [True, False]


class TestLogDensity:
    def test_circle_values(self):
        m = circle_vn()
        assert log_density(m, [1.0, 0.0]) == 0.0
        assert log_density(m, [1.0, 1.0]) == pytest.approx(-6.25, abs=1e-6)

    def test_hvn(self):
        m = DensityModel(CIRCLE, HVN(0.01))
        assert log_density(m, [1.0, 1.0]) == pytest.approx(-50.0)
        assert log_density(m, [0.0, 0.0]) == pytest.approx(-50.0)  # no rank condition for HVN

    def test_truncation_gives_minus_inf(self):
        m = circle_vn(truncation=((-1.5, 1.5), (-1.5, 1.5)))
        assert log_density(m, [2.0, 0.0]) == -math.inf
        assert np.all(grad_log_density(m, [2.0, 0.0]) == 0.0)

    def test_nonpositive_and_zero_iff_on_variety(self):
        rng = np.random.default_rng(3)
        for name in ("circle", "torus", "sphere_plane", "kuramoto"):
            e = catalog(name)
            m = isotropic(e.system, e.sigma)
            X = rng.uniform(-1.5, 1.5, size=(500, e.system.n))
            ev = evaluate(m, X, singular="mask")
            lp = ev.log_density[ev.ok]
            assert np.all(lp <= 0)
            assert np.all((lp == 0) == np.all(ev.residual[ev.ok] == 0, axis=1))
            if e.witness is not None:
                # witnesses like sqrt(2)/2 are rounded, so only near zero
                assert log_density(m, np.array(e.witness, dtype=float)) > -1e-20

    def test_vn_scale_invariance(self):
        rng = np.random.default_rng(4)
        g = catalog("lissajous6").system
        scaled = PolySystem(g.context, (g.equalities[0] * -3.7,))
        X = nonsingular_points(g, rng, 200)
        a = log_density(DensityModel(g, VN(0.01)), X)
        b = log_density(DensityModel(scaled, VN(0.01)), X)
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_mvn_reduces_to_vn(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(-1.5, 1.5, size=(1000, 2))
        sys = catalog("lemniscate").system
        a = log_density(DensityModel(sys, VN(0.04)), X)
        b = log_density(DensityModel(sys, MVN.isotropic(0.04, 2)), X)
        np.testing.assert_allclose(b, a, rtol=1e-12, atol=0)

    def test_mvn_gaussian_quadratic_form(self):
        rng = np.random.default_rng(6)
        A = rng.normal(size=(3, 3))
        S = A @ A.T + 0.5 * np.eye(3)
        mu = rng.normal(size=3)
        ctx = VarContext(("a", "b", "c"))
        m = DensityModel(PolySystem(ctx, tuple(Polynomial.var(ctx, i) - float(mu[i]) for i in range(3))), MVN(S))
        X = rng.normal(size=(100, 3))
        D = X - mu
        expect = -0.5 * np.einsum("ni,ij,nj->n", D, np.linalg.inv(S), D)
        np.testing.assert_allclose(log_density(m, X), expect, rtol=1e-12)

    def test_mvn_reparameterization_invariance(self):
        rng = np.random.default_rng(7)
        m = isotropic(SPHERE_PLANE, 0.1)
        X = nonsingular_points(SPHERE_PLANE, rng, 100, box=2.0)
        base = residual_normalized(m, X)
        for _ in range(10):
            A = rng.normal(size=(2, 2))
            while abs(np.linalg.det(A)) < 0.1:
                A = rng.normal(size=(2, 2))
            eqs = tuple(
                sum((SPHERE_PLANE.equalities[j] * float(A[i, j]) for j in range(2)), Polynomial.zero(SPHERE_PLANE.context))
                for i in range(2)
            )
            mixed = isotropic(PolySystem(SPHERE_PLANE.context, eqs), 0.1)
            np.testing.assert_allclose(residual_normalized(mixed, X), base, atol=1e-8)

    def test_induced(self):
        u = DensityModel(CIRCLE, Induced(Uniform(-0.1, 0.1)))
        assert log_density(u, [1.0, 0.0]) == 0.0
        assert log_density(u, [1.0, 1.0]) == -math.inf
        e = DensityModel(CIRCLE, Induced(Exponential(10.0)))
        # gbar at (1, 1) is 1/(2 sqrt 2) > 0; inside the disc gbar < 0 is outside the support
        assert log_density(e, [1.0, 1.0]) == pytest.approx(-10.0 / (2 * math.sqrt(2)))
        assert log_density(e, [0.5, 0.0]) == -math.inf
        b = DensityModel(CIRCLE, Induced(Beta.centered(2.0, 3.0, 0.5)))
        assert np.isfinite(log_density(b, [1.0, 0.1]))
        with pytest.raises(ValueError):
            grad_log_density(u, [1.0, 0.0])


class TestGradient:
    def test_on_variety_critical(self):
        np.testing.assert_allclose(grad_log_density(circle_vn(), [1.0, 0.0]), [0.0, 0.0], atol=1e-15)

    def test_points_toward_variety(self):
        g = grad_log_density(circle_vn(), [1.2, 0.0])
        assert g[0] < 0 and g[1] == 0.0

    @pytest.mark.parametrize(
        "name, kind",
        [
            ("circle", "hvn"),
            ("lemniscate", "vn"),
            ("torus", "vn"),
            ("sphere_plane", "mvn"),
            ("kuramoto", "mvn"),
            ("independence2x2", "mvn"),
        ],
    )
    def test_matches_finite_differences(self, name, kind):
        rng = np.random.default_rng(8)
        e = catalog(name)
        m = isotropic(e.system, e.sigma, kind=kind)
        X = nonsingular_points(e.system, rng, 50, box=e.box)
        a = grad_log_density(m, X)
        f = fd_gradient(lambda x: log_density(m, x), X)
        err = np.linalg.norm(a - f, axis=1) / np.maximum(np.linalg.norm(f, axis=1), 1 / e.sigma)
        assert err.max() < 1e-6

    def test_overdetermined_gradient(self):
        over = PolySystem.from_strings(("x", "y"), ["x - 1", "y^2 - x", "x*y - 1"])
        m = DensityModel(over, MVN(np.array([[0.05, 0.01], [0.01, 0.02]])))
        X = np.random.default_rng(9).uniform(0.5, 1.5, size=(50, 2))
        f = fd_gradient(lambda x: log_density(m, x), X)
        np.testing.assert_allclose(grad_log_density(m, X), f, rtol=1e-6, atol=1e-6)

    def test_induced_smooth_gradients(self):
        X = np.random.default_rng(10).uniform(0.95, 1.05, size=(40, 2))
        for base in (Beta.centered(2.5, 3.0, 0.5), Exponential(4.0)):
            m = DensityModel(CIRCLE, Induced(base))
            lp = log_density(m, X)
            ok = np.isfinite(lp)
            f = fd_gradient(lambda x: log_density(m, x), X[ok])
            np.testing.assert_allclose(grad_log_density(m, X[ok]), f, rtol=1e-6, atol=1e-6)


def test_band_statistic():
    X = np.array([[1.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(band_statistic(circle_vn(), X), [1 / (2 * math.sqrt(2)), 0.0])
    np.testing.assert_allclose(band_statistic(DensityModel(CIRCLE, HVN(0.01)), X), [1.0, 0.0])
    assert np.isnan(band_statistic(circle_vn(), [[0.0, 0.0]])[0])
