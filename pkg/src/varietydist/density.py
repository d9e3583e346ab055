"""Log-pseudodensities concentrated near a real variety.

Four model kinds share one evaluation path:

* ``HVN(sigma2)``   exp(-g^2 / 2 sigma2), raw residual (single equation)
* ``VN(sigma2)``    same with the gradient-normalised residual g / |grad g|
* ``MVN(cov)``      exp(-1/2 gbar' cov^-1 gbar), gbar = pinv(J) g, any m
* ``Induced(base)`` base log-density evaluated at the normalised residual

All public functions take a point ``(n,)`` or a batch ``(N, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .evaluator import CompiledSystem
from .polynomial import PolySystem

RANK_TOL = 1e-12


class RankDeficient(ArithmeticError):
    """The Jacobian Gram matrix is numerically singular at ``x``."""

    def __init__(self, x, smallest_singular_value: float):
        self.x = np.asarray(x, dtype=float)
        self.smallest_singular_value = float(smallest_singular_value)
        super().__init__(
            f"rank-deficient Jacobian at {self.x.tolist()} "
            f"(smallest singular value {self.smallest_singular_value:.3g})"
        )


# ---------------------------------------------------------------------------
# model kinds


@dataclass(frozen=True)
class HVN:
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")


@dataclass(frozen=True)
class VN:
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")


@dataclass(frozen=True, eq=False)
class MVN:
    cov: np.ndarray
    _chol: np.ndarray = field(init=False, repr=False)
    _iso: float | None = field(init=False, repr=False)

    def __post_init__(self):
        cov = np.array(self.cov, dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise ValueError("covariance must be a square matrix")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-14 * max(1.0, np.abs(cov).max())):
            raise ValueError("covariance must be symmetric")
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance must be positive definite") from None
        cov.setflags(write=False)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "_chol", L)
        d = cov[0, 0]
        iso = d if np.array_equal(cov, d * np.eye(len(cov))) else None
        object.__setattr__(self, "_iso", iso)

    @classmethod
    def isotropic(cls, sigma2: float, n: int) -> "MVN":
        if not sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        return cls(sigma2 * np.eye(n))

    def __eq__(self, other):
        return isinstance(other, MVN) and np.array_equal(self.cov, other.cov)

    def __hash__(self):
        return hash(self.cov.tobytes())


# Base log-densities are unnormalized with supremum 0, so every induced
# pseudodensity is bounded by 1 and the rejection envelope stays valid.


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError("Uniform needs lo < hi")

    def logpdf(self, u):
        return np.where((u >= self.lo) & (u <= self.hi), 0.0, -np.inf)

    smooth = False


@dataclass(frozen=True)
class Beta:
    """Beta(a, b) moved to (shift, shift + scale)."""

    a: float
    b: float
    shift: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.scale > 0):
            raise ValueError("Beta needs a, b, scale > 0")

    @classmethod
    def centered(cls, a: float, b: float, scale: float) -> "Beta":
        return cls(a, b, -scale / 2.0, scale)

    @property
    def smooth(self) -> bool:
        return self.a > 1 and self.b > 1

    def logpdf(self, u):
        z = (np.asarray(u, dtype=float) - self.shift) / self.scale
        inside = (z > 0) & (z < 1)
        zc = np.where(inside, z, 0.5)
        val = (self.a - 1) * np.log(zc) + (self.b - 1) * np.log1p(-zc)
        return np.where(inside, val, -np.inf)

    def dlogpdf(self, u):
        z = (np.asarray(u, dtype=float) - self.shift) / self.scale
        inside = (z > 0) & (z < 1)
        zc = np.where(inside, z, 0.5)
        val = ((self.a - 1) / zc - (self.b - 1) / (1 - zc)) / self.scale
        return np.where(inside, val, 0.0)


@dataclass(frozen=True)
class Exponential:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("Exponential needs rate > 0")

    smooth = True

    def logpdf(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u >= 0, -self.rate * u, -np.inf)

    def dlogpdf(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u >= 0, -self.rate, 0.0)


@dataclass(frozen=True)
class Induced:
    base: Uniform | Beta | Exponential


Kind = HVN | VN | MVN | Induced


# ---------------------------------------------------------------------------
# the model


@dataclass(frozen=True, eq=False)
class DensityModel:
    system: PolySystem
    kind: Kind
    truncation: tuple[tuple[float, float], ...] | None = None
    _compiled: CompiledSystem = field(init=False, repr=False)

    def __post_init__(self):
        sys = self.system
        if sys.inequalities:
            raise ValueError("density models take equalities only; lift inequalities first")
        if sys.m < 1:
            raise ValueError("density models need at least one equality")
        if isinstance(self.kind, (HVN, VN, Induced)) and sys.m != 1:
            raise ValueError(f"{type(self.kind).__name__} needs a single equation, got {sys.m}")
        if isinstance(self.kind, MVN) and self.kind.cov.shape != (sys.n, sys.n):
            raise ValueError(f"covariance must be {sys.n}x{sys.n}")
        if self.truncation is not None:
            box = tuple((float(lo), float(hi)) for lo, hi in self.truncation)
            if len(box) != sys.n:
                raise ValueError(f"truncation box has {len(box)} intervals for {sys.n} variables")
            if any(not lo < hi for lo, hi in box):
                raise ValueError("truncation box needs lo < hi in every coordinate")
            object.__setattr__(self, "truncation", box)
        object.__setattr__(self, "_compiled", CompiledSystem(sys, order=2))

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def m(self) -> int:
        return self.system.m

    def in_box(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.truncation is None:
            return np.ones(X.shape[0], dtype=bool)
        lo = np.array([b[0] for b in self.truncation])
        hi = np.array([b[1] for b in self.truncation])
        return np.all((X >= lo) & (X <= hi), axis=1)

    def with_system(self, system: PolySystem) -> "DensityModel":
        return DensityModel(system, self.kind, self.truncation)


def isotropic(system: PolySystem, sigma: float, truncation=None, kind: str | None = None) -> DensityModel:
    """VN for a single equation, isotropic MVN otherwise (``kind`` overrides)."""
    s2 = float(sigma) ** 2
    kind = kind or ("vn" if system.m == 1 else "mvn")
    table = {"hvn": lambda: HVN(s2), "vn": lambda: VN(s2), "mvn": lambda: MVN.isotropic(s2, system.n)}
    try:
        k = table[kind.lower()]()
    except KeyError:
        raise ValueError(f"unknown density kind {kind!r}") from None
    return DensityModel(system, k, truncation)


# ---------------------------------------------------------------------------
# batched core


class Evaluation(NamedTuple):
    log_density: np.ndarray  # (N,)
    grad: np.ndarray | None  # (N, n)
    residual: np.ndarray  # (N, m) raw g
    normalized: np.ndarray | None  # (N, n) MVN or (N, 1) VN/Induced
    ok: np.ndarray  # rows whose Gram matrix passed the rank test
    clamped: np.ndarray  # rows evaluated with the eigenvalue-clamped solve
    smallest_sv: np.ndarray  # sqrt of the smallest Gram eigenvalue


def _gram_inverse(G: np.ndarray, singular: str):
    """Batched inverse of SPD Gram matrices plus rank diagnostics."""
    N, k, _ = G.shape
    evals = np.linalg.eigvalsh(G) if k > 1 else G[:, :, 0].copy()
    emax = evals.max(axis=1)
    emin = evals.min(axis=1)
    bad = ~(emin >= RANK_TOL * emax) | ~(emax > 0) | ~np.isfinite(emax)
    smin = np.sqrt(np.clip(np.nan_to_num(emin, nan=0.0), 0.0, None))
    Ginv = np.full_like(G, np.nan)
    good = ~bad
    if np.any(good):
        L = np.linalg.cholesky(G[good])
        Linv = np.linalg.inv(L)
        Ginv[good] = np.swapaxes(Linv, 1, 2) @ Linv
    clamped = np.zeros(N, dtype=bool)
    if singular == "clamp" and np.any(bad):
        finite = bad & np.all(np.isfinite(G), axis=(1, 2))
        if np.any(finite):
            lam, V = np.linalg.eigh(G[finite])
            top = lam.max(axis=1, keepdims=True)
            floor = np.maximum(RANK_TOL * top, np.finfo(float).tiny)
            lam = np.maximum(lam, floor)
            Ginv[finite] = (V / lam[:, None, :]) @ np.swapaxes(V, 1, 2)
            clamped[finite] = True
    return Ginv, bad, clamped, smin


def evaluate(model: DensityModel, X, grad: bool = False, singular: str = "raise") -> Evaluation:
    """Evaluate residuals, log-density and optionally its gradient.

    ``singular`` decides what happens at rank-deficient rows: ``"raise"``
    raises :class:`RankDeficient`, ``"mask"`` marks them (log-density NaN),
    ``"clamp"`` uses an eigenvalue-clamped Gram inverse and flags the row.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    N, n = X.shape
    if n != model.n:
        raise ValueError(f"point has dimension {n}, model has {model.n} variables")
    kind = model.kind
    comp = model._compiled
    if grad and isinstance(kind, Induced) and not kind.base.smooth:
        raise ValueError(f"no gradient for induced base {kind.base!r}")
    need_jac = not isinstance(kind, HVN) or grad
    out = comp.evaluate(X, want_jac=need_jac, want_hess=grad and need_jac)
    if need_jac and grad:
        g, J, H = out
    elif need_jac:
        (g, J), H = out, None
    else:
        g, J, H = out, None, None

    ok = np.ones(N, dtype=bool)
    clamped = np.zeros(N, dtype=bool)
    smin = np.full(N, np.nan)
    G_out = None
    normalized = None

    if isinstance(kind, HVN):
        g0 = g[:, 0]
        logp = -(g0**2) / (2 * kind.sigma2)
        if grad:
            G_out = -(g0 / kind.sigma2)[:, None] * J[:, 0, :]
    elif isinstance(kind, (VN, Induced)):
        d = J[:, 0, :]
        nd2 = np.einsum("ij,ij->i", d, d)
        bad = ~(nd2 > 0) | ~np.isfinite(nd2)
        smin = np.sqrt(np.where(np.isfinite(nd2), nd2, 0.0))
        if singular == "clamp" and np.any(bad):
            nd2 = np.where(bad, np.finfo(float).tiny, nd2)
            clamped = bad & np.isfinite(nd2)
            bad = bad & ~clamped
        ok = ~bad
        with np.errstate(divide="ignore", invalid="ignore"):
            nd = np.sqrt(nd2)
            gbar = g[:, 0] / nd
            if grad:
                Hm = H[:, :, 0, :]  # (N, k, j) Hessian of the single equation
                Hd = np.einsum("nkj,nj->nk", Hm, d)
                dgbar = d / nd[:, None] - (g[:, 0] / (nd2 * nd))[:, None] * Hd
        normalized = gbar[:, None]
        if isinstance(kind, VN):
            with np.errstate(over="ignore"):
                logp = -(gbar**2) / (2 * kind.sigma2)
            if grad:
                G_out = -(gbar / kind.sigma2)[:, None] * dgbar
        else:
            logp = np.asarray(kind.base.logpdf(gbar), dtype=float)
            if grad:
                G_out = kind.base.dlogpdf(gbar)[:, None] * dgbar
    else:  # MVN
        m = model.m
        under = n >= m
        Jt = np.swapaxes(J, 1, 2)
        Gram = J @ Jt if under else Jt @ J
        Ginv, bad, clamped, smin = _gram_inverse(Gram, singular)
        ok = ~bad | clamped
        with np.errstate(invalid="ignore", over="ignore"):
            if under:
                w = np.einsum("nij,nj->ni", Ginv, g)
                gbar = np.einsum("nji,nj->ni", J, w)
            else:
                Jtg = np.einsum("nji,nj->ni", J, g)
                gbar = np.einsum("nij,nj->ni", Ginv, Jtg)
            normalized = gbar
            iso = kind._iso
            if iso is not None and under:
                logp = -np.einsum("ni,ni->n", g, w) / (2 * iso)
                P = gbar / iso
            else:
                L = kind._chol
                z = np.linalg.solve(L, gbar.T).T
                logp = -0.5 * np.einsum("ni,ni->n", z, z)
                P = np.linalg.solve(L.T, z.T).T
            if grad:
                G_out = -_mvn_dgbar_contract(J, H, g, gbar, Ginv, P, under)

    logp = np.asarray(logp, dtype=float)
    if singular == "mask":
        logp = np.where(ok, logp, np.nan)
    elif singular == "raise" and not np.all(ok):
        i = int(np.flatnonzero(~ok)[0])
        raise RankDeficient(X[i], smin[i])

    inside = model.in_box(X)
    if not np.all(inside):
        logp = np.where(inside, logp, -np.inf)
        if G_out is not None:
            G_out = np.where(inside[:, None], G_out, 0.0)
    return Evaluation(logp, G_out, g, normalized, ok, clamped, smin)


def _mvn_dgbar_contract(J, H, g, gbar, Ginv, P, under: bool) -> np.ndarray:
    """Return sum_j P_j d(gbar_j)/dx_k for every k, i.e. the gradient of
    1/2 gbar' cov^-1 gbar with P = cov^-1 gbar."""
    # H[n, k, i, j] = d J[n, i, j] / dx_k
    if under:
        w = np.einsum("nij,nj->ni", Ginv, g)
        A = np.einsum("nkij,ni->nkj", H, w)  # H_k' w
        rhs = (
            J  # column k of J, laid out (n, i, k)
            - np.einsum("nkij,nj->nik", H, gbar)  # H_k J' w
            - np.einsum("nij,nkj->nik", J, A)  # J H_k' w
        )
        dw = Ginv @ rhs  # (n, i, k)
        dgbar = A + np.einsum("nij,nik->nkj", J, dw)
    else:
        Jg = np.einsum("nij,nj->ni", J, gbar)
        t1 = np.einsum("nkij,ni->nkj", H, g)  # H_k' g
        t2 = np.einsum("nij,nik->nkj", J, J)  # J' J_k
        t3 = np.einsum("nkij,ni->nkj", H, Jg)  # H_k' J gbar
        Hg = np.einsum("nkij,nj->nki", H, gbar)  # H_k gbar
        t4 = np.einsum("nij,nki->nkj", J, Hg)  # J' H_k gbar
        dgbar = np.einsum("nij,nkj->nki", Ginv, t1 + t2 - t3 - t4)
    return np.einsum("nkj,nj->nk", dgbar, P)


# ---------------------------------------------------------------------------
# public point-wise API


def _squeeze(X, arr):
    return arr[0] if np.asarray(X).ndim == 1 else arr


def residual_raw(model: DensityModel, x):
    g = model._compiled.evaluate(x)
    return g


def residual_normalized(model: DensityModel, x):
    """g/|grad g| for single-equation kinds (shape (1,)), pinv(J) g for MVN."""
    ev = _normalized_only(model, x)
    return _squeeze(x, ev)


def _normalized_only(model, x):
    if isinstance(model.kind, HVN):
        proxy = DensityModel(model.system, VN(model.kind.sigma2), model.truncation)
        return evaluate(proxy, x).normalized
    return evaluate(model, x).normalized


def log_density(model: DensityModel, x):
    return _squeeze(x, evaluate(model, x).log_density)


def grad_log_density(model: DensityModel, x):
    return _squeeze(x, evaluate(model, x, grad=True).grad)


def band_statistic(model: DensityModel, X) -> np.ndarray:
    """|g| for HVN, |gbar| for VN / induced; rows at singular points get NaN."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if isinstance(model.kind, HVN):
        return np.abs(model._compiled.evaluate(X)[:, 0])
    if isinstance(model.kind, MVN):
        raise ValueError("band mode needs a single-equation model")
    ev = evaluate(model, X, singular="mask")
    return np.where(ev.ok, np.abs(ev.normalized[:, 0]), np.nan)
