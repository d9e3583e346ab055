"""Project points onto a variety with a critical-point (Fritz John) homotopy.

With h = sum g_i^2 and a start point x0, the unknowns z = (x, l0, l1) solve

    h(x) - t h(x0)                  = 0
    l0 (x - x0) + l1 grad h(x)      = 0
    l0 + a1 l1 - a0                 = 0      (random affine patch)

At t = 1 the point (x0, a0, 0) is an exact solution. Following it to t -> 0
by Euler prediction along dz/dt and Newton correction at fixed t traces
critical points of the distance to x0 on the level sets of h, ending on the
variety. Since grad h vanishes on V(h), the t = 0 system is singular; the
path is tracked to ``t_end`` and the endpoint is then polished by Gauss-Newton
on the well-posed conditions g(x) = 0, x - x0 = J(x)' mu.

Paths are advanced in lockstep as one numpy batch; each row keeps its own t,
step size and patch.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .batch import SampleBatch
from .evaluator import CompiledSystem
from .polynomial import PolySystem, Polynomial, sum_of_squares

CONVERGED = "converged"
STALLED = "stalled"

# below this h(x0) the start point is treated as already on the variety
_ON_VARIETY = 1e-28


@dataclass(frozen=True)
class TrackControls:
    dt_init: float = 0.1
    dt_min: float = 1e-10
    newton_tol: float = 1e-10
    newton_max_iter: int = 10
    t_end: float = 1e-12
    max_steps: int = 5000
    polish_iter: int = 8


@dataclass
class HomotopyTracker:
    system: PolySystem
    h: Polynomial
    x0: np.ndarray
    patch: tuple[float, float]  # (a0, a1)
    x: np.ndarray
    lam: np.ndarray  # (l0, l1)
    t: float
    controls: TrackControls = field(default_factory=TrackControls)
    history: list = field(default_factory=list)  # accepted (t, patch residual)
    _compiled: CompiledSystem | None = field(default=None, repr=False)

    @property
    def compiled(self) -> CompiledSystem:
        if self._compiled is None:
            self._compiled = CompiledSystem(self.system, order=2)
        return self._compiled

    def residual_vector(self) -> np.ndarray:
        """H^a at the current state."""
        z = np.concatenate([self.x, self.lam])[None]
        X0 = self.x0[None]
        h0 = _h_only(self.compiled, X0)
        A = np.array([self.patch])
        return _homotopy(self.compiled, z, X0, h0, A, np.array([self.t]))[0][0]


class ProjectionResult(NamedTuple):
    x_star: np.ndarray
    lam_final: np.ndarray
    t_reached: float
    status: str
    residual: float
    steps: int


def draw_patch(rng: np.random.Generator, attempts: int = 16) -> tuple[float, float]:
    for _ in range(attempts):
        a0, a1 = rng.standard_normal(2)
        if abs(a0) >= 1e-8:
            return float(a0), float(a1)
    raise RuntimeError(f"could not draw a usable affine patch in {attempts} attempts")


def row_rng(seed: int, row: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(row),))))


def build_tracker(sys: PolySystem, x0, seed: int = 0, controls: TrackControls | None = None) -> HomotopyTracker:
    x0 = np.array(x0, dtype=float)
    if x0.shape != (sys.n,):
        raise ValueError(f"start point has shape {x0.shape}, system has {sys.n} variables")
    if not np.all(np.isfinite(x0)):
        raise ValueError("start point must be finite")
    a0, a1 = draw_patch(np.random.default_rng(seed))
    return HomotopyTracker(
        system=sys,
        h=sum_of_squares(sys),
        x0=x0,
        patch=(a0, a1),
        x=x0.copy(),
        lam=np.array([a0, 0.0]),
        t=1.0,
        controls=controls or TrackControls(),
    )


# ---------------------------------------------------------------------------
# numerics


def _h_only(comp: CompiledSystem, X) -> np.ndarray:
    g = comp.evaluate(X)
    return np.einsum("ni,ni->n", g, g)


def _homotopy(comp, Z, X0, h0, A, t, want_jac=False):
    """H^a rows (N, n+2) and optionally dH/dz (N, n+2, n+2), dH/dt (N, n+2)."""
    N = Z.shape[0]
    n = comp.n
    X = Z[:, :n]
    l0 = Z[:, n]
    l1 = Z[:, n + 1]
    if want_jac:
        g, J, H = comp.evaluate(X, want_jac=True, want_hess=True)
    else:
        g, J = comp.evaluate(X, want_jac=True)
    h = np.einsum("ni,ni->n", g, g)
    Jt = np.swapaxes(J, 1, 2)
    gh = 2.0 * (Jt @ g[..., None])[..., 0]
    F = np.empty((N, n + 2))
    F[:, 0] = h - t * h0
    F[:, 1 : n + 1] = l0[:, None] * (X - X0) + l1[:, None] * gh
    F[:, n + 1] = l0 + A[:, 1] * l1 - A[:, 0]
    if not want_jac:
        return F, None, None
    # hess h = 2 (J'J + sum_i g_i hess g_i), hess g_i[j, k] = H[k, i, j]
    Hh = 2.0 * (Jt @ J + (g[:, None, None, :] @ H)[:, :, 0, :])
    DZ = np.zeros((N, n + 2, n + 2))
    DZ[:, 0, :n] = gh
    DZ[:, 1 : n + 1, :n] = l0[:, None, None] * np.eye(n) + l1[:, None, None] * Hh
    DZ[:, 1 : n + 1, n] = X - X0
    DZ[:, 1 : n + 1, n + 1] = gh
    DZ[:, n + 1, n] = 1.0
    DZ[:, n + 1, n + 1] = A[:, 1]
    DT = np.zeros((N, n + 2))
    DT[:, 0] = -h0
    return F, DZ, DT


def _solve(M, b):
    """Batched LU solve; rows with a singular or non-finite system give NaN."""
    out = np.full(b.shape, np.nan)
    fin = np.all(np.isfinite(M), axis=(1, 2)) & np.all(np.isfinite(b), axis=1)
    idx = np.flatnonzero(fin)
    if idx.size == 0:
        return out
    try:
        out[idx] = np.linalg.solve(M[idx], b[idx][..., None])[..., 0]
    except np.linalg.LinAlgError:
        for i in idx:
            try:
                out[i] = np.linalg.solve(M[i], b[i])
            except np.linalg.LinAlgError:
                pass
    return out


def _newton(comp, Z, X0, h0, A, t, ctl: TrackControls):
    """Newton on H^a(., t) = 0 per row; returns (Z, converged mask)."""
    Z = Z.copy()
    conv = np.zeros(Z.shape[0], dtype=bool)
    live = np.ones(Z.shape[0], dtype=bool)
    for _ in range(ctl.newton_max_iter):
        idx = np.flatnonzero(live & ~conv)
        if idx.size == 0:
            break
        F, DZ, _ = _homotopy(comp, Z[idx], X0[idx], h0[idx], A[idx], t[idx], want_jac=True)
        d = _solve(DZ, F)
        ok = np.all(np.isfinite(d), axis=1)
        live[idx[~ok]] = False
        idx, d = idx[ok], d[ok]
        Z[idx] -= d
        small = np.linalg.norm(d, axis=1) <= ctl.newton_tol * (1.0 + np.linalg.norm(Z[idx], axis=1))
        conv[idx[small]] = True
    return Z, conv & live


def _polish(comp, X, X0, iters: int):
    """Gauss-Newton on g(x) = 0, x - x0 - J(x)' mu = 0 from the tracked endpoint."""
    N, n = X.shape
    m = comp.m
    if N == 0:
        return X
    g, J = comp.evaluate(X, want_jac=True)
    Jt = np.swapaxes(J, 1, 2)
    mu = np.einsum("nij,nj->ni", np.linalg.pinv(Jt), X - X0)
    Y = np.concatenate([X, mu], axis=1)
    best = Y.copy()
    best_res = np.linalg.norm(g, axis=1)
    eye = np.eye(n)
    for _ in range(iters):
        x, mu = Y[:, :n], Y[:, n:]
        g, J, H = comp.evaluate(x, want_jac=True, want_hess=True)
        Jt = np.swapaxes(J, 1, 2)
        F = np.concatenate([g, x - X0 - np.einsum("nji,nj->ni", J, mu)], axis=1)
        D = np.zeros((N, m + n, n + m))
        D[:, :m, :n] = J
        # d/dx of J(x)' mu: sum_i mu_i hess g_i
        D[:, m:, :n] = eye - np.einsum("nkij,ni->njk", H, mu)
        D[:, m:, n:] = -Jt
        with np.errstate(invalid="ignore"):
            step = np.einsum("nij,nj->ni", np.linalg.pinv(D), F)
        ok = np.all(np.isfinite(step), axis=1)
        Y[ok] -= step[ok]
        res = np.linalg.norm(comp.evaluate(Y[:, :n]), axis=1)
        better = ok & (res <= best_res)
        best[better] = Y[better]
        best_res[better] = res[better]
    drift = np.linalg.norm(best[:, :n] - X, axis=1)
    # the tracked endpoint is within ~sqrt(t_end) of the target; refuse wild jumps
    keep = drift <= 1e-3 * (1.0 + np.linalg.norm(X, axis=1))
    return np.where(keep[:, None], best[:, :n], X)


def _track_many(comp: CompiledSystem, X0, A, ctl: TrackControls, history: list | None = None):
    """Track every row; returns (X*, lam, t, status array, steps)."""
    N, n = X0.shape
    h0 = _h_only(comp, X0)
    Z = np.concatenate([X0, A[:, :1], np.zeros((N, 1))], axis=1)
    t = np.ones(N)
    dt = np.full(N, ctl.dt_init)
    steps = np.zeros(N, dtype=np.int64)
    done = h0 <= _ON_VARIETY
    stalled = ~np.all(np.isfinite(X0), axis=1) | ~np.isfinite(h0)
    done &= ~stalled
    t[done] = 0.0

    while True:
        act = np.flatnonzero(~done & ~stalled)
        if act.size == 0:
            break
        Za, ta = Z[act], t[act]
        tn = np.maximum(ta - dt[act], ctl.t_end)
        # Euler predictor along dz/dt = -(dH/dz)^-1 dH/dt
        _, DZ, DT = _homotopy(comp, Za, X0[act], h0[act], A[act], ta, want_jac=True)
        dz = -_solve(DZ, DT)
        pred_ok = np.all(np.isfinite(dz), axis=1)
        Zp = Za + (tn - ta)[:, None] * np.where(pred_ok[:, None], dz, 0.0)
        Zc, conv = _newton(comp, Zp, X0[act], h0[act], A[act], tn, ctl)
        good = conv & pred_ok & np.all(np.isfinite(Zc), axis=1)
        gi, bi = act[good], act[~good]
        Z[gi] = Zc[good]
        t[gi] = tn[good]
        dt[gi] *= 1.25
        dt[bi] *= 0.5
        steps[act] += 1
        if history is not None and good.any():
            for k in np.flatnonzero(good):
                patch_res = Zc[k, n] + A[act[k], 1] * Zc[k, n + 1] - A[act[k], 0]
                history.append((float(tn[k]), float(patch_res)))
        done[gi[t[gi] <= ctl.t_end]] = True
        stalled[act[(dt[act] < ctl.dt_min) | (steps[act] >= ctl.max_steps)]] = True
        stalled &= ~done

    X = Z[:, :n].copy()
    fin = done & ~stalled
    X[fin] = _polish(comp, X[fin], X0[fin], ctl.polish_iter)
    status = np.where(fin, CONVERGED, STALLED)
    return X, Z[:, n:], t, status, steps


def track(tracker: HomotopyTracker) -> ProjectionResult:
    comp = tracker.compiled
    A = np.array([tracker.patch])
    X, lam, t, status, steps = _track_many(
        comp, tracker.x0[None], A, tracker.controls, history=tracker.history
    )
    tracker.x, tracker.lam, tracker.t = X[0], lam[0], float(t[0])
    residual = float(_h_only(comp, X)[0])
    return ProjectionResult(X[0], lam[0], float(t[0]), str(status[0]), residual, int(steps[0]))


def project_points(sys: PolySystem, X, seed: int = 0, controls: TrackControls | None = None):
    """Project the rows of X; returns (X*, status, residual) arrays."""
    ctl = controls or TrackControls()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        return np.empty((0, sys.n)), np.empty(0, dtype=object), np.empty(0)
    if X.shape[1] != sys.n:
        raise ValueError(f"points have dimension {X.shape[1]}, system has {sys.n} variables")
    comp = CompiledSystem(sys, order=2)
    A = np.array([draw_patch(row_rng(seed, i)) for i in range(X.shape[0])])
    Xs, _, _, status, _ = _track_many(comp, X, A, ctl)
    with np.errstate(invalid="ignore", over="ignore"):
        residual = _h_only(comp, np.nan_to_num(Xs, nan=0.0))
    residual = np.where(np.all(np.isfinite(Xs), axis=1), residual, np.inf)
    return Xs, status.astype(object), residual


def project_batch(sys: PolySystem, batch: SampleBatch, controls: TrackControls | None = None, seed: int = 0) -> SampleBatch:
    """Replace points by their projections; adds ``status`` and ``residual`` columns."""
    if batch.dim != sys.n:
        raise ValueError(f"batch has {batch.dim} columns, system has {sys.n} variables")
    Xs, status, residual = project_points(sys, batch.points, seed, controls)
    counts = {CONVERGED: int(np.sum(status == CONVERGED)), STALLED: int(np.sum(status == STALLED))}
    out = batch.with_points(Xs if len(batch) else batch.points).with_meta(status=status, residual=residual)
    return out.with_summary(projection=counts)
