"""Shared oracles for the test suite."""

import numpy as np
from scipy.optimize import fsolve

from varietydist.evaluator import CompiledSystem
from varietydist.polynomial import PolySystem


def fd_gradient(f, X, h=1e-5):
    """Central differences of a batched scalar function."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty_like(X)
    for k in range(X.shape[1]):
        E = np.zeros(X.shape[1])
        E[k] = h
        out[:, k] = (f(X + E) - f(X - E)) / (2 * h)
    return out


def regularity(sys: PolySystem, X):
    """sigma_min(J) / |H|_F per row: small near singular points of V."""
    comp = CompiledSystem(sys, order=2)
    _, J, H = comp.evaluate(X, want_jac=True, want_hess=True)
    smin = np.linalg.svd(J, compute_uv=False).min(axis=1)
    hn = np.sqrt(np.einsum("nkij,nkij->n", H, H))
    return smin / np.maximum(hn, 1e-300)


def nonsingular_points(sys: PolySystem, rng, count, box=1.5, rho=0.02):
    """Uniform points in the box with a well-conditioned Jacobian."""
    if np.isscalar(box):
        box = ((-box, box),) * sys.n
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    out = []
    while sum(len(o) for o in out) < count:
        X = lo + (hi - lo) * rng.random((4 * count, sys.n))
        out.append(X[regularity(sys, X) >= rho])
    return np.concatenate(out)[:count]


def gradient_descent_on_h(sys: PolySystem, x0, lr=1e-3, iters=20000):
    """Naive projection by descending h = sum g_i^2. Slow and biased; oracle only."""
    comp = CompiledSystem(sys, order=1)
    x = np.array(x0, dtype=float)
    for _ in range(iters):
        g, J = comp.evaluate(x[None], want_jac=True)
        x = x - lr * 2 * (J[0].T @ g[0])
    return x


def lagrange_root(sys: PolySystem, x0, guess=None):
    """Solve g(x) = 0, x - x0 = J(x)' mu with a generic root finder; oracle only."""
    comp = CompiledSystem(sys, order=1)
    n, m = sys.n, sys.m
    x0 = np.asarray(x0, dtype=float)

    def F(z):
        x, mu = z[:n], z[n:]
        g, J = comp.evaluate(x[None], want_jac=True)
        return np.concatenate([g[0], x - x0 - J[0].T @ mu])

    z0 = np.concatenate([x0 if guess is None else guess, np.zeros(m)])
    z, info, ier, _ = fsolve(F, z0, full_output=True, xtol=1e-14)
    return z[:n], ier == 1


# acceptance verdict lines, echoed by the terminal summary hook in conftest
VERDICTS: list[str] = []
