"""Multi-chain Hamiltonian Monte Carlo for variety densities.

Potential U(x) = -log p(x), kinetic K(p) = p'p / (2 mass) with an isotropic
mass matrix. Chains are advanced together as one numpy batch but each owns
its step size, its leapfrog count and its RNG stream (derived from
``(seed, chain_id)``), so a chain's trajectory does not depend on how many
other chains run beside it.

Step sizes are tuned during warmup by dual averaging toward
``target_accept`` and frozen afterwards.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .batch import SampleBatch
from .density import DensityModel, evaluate

log = logging.getLogger(__name__)


class NonFinite(ArithmeticError):
    def __init__(self, step: int):
        self.step = step
        super().__init__(f"non-finite position or gradient at leapfrog step {step}")


class ChainFailed(RuntimeError):
    def __init__(self, chain_id: int, cause: str):
        self.chain_id = chain_id
        self.cause = cause
        super().__init__(f"chain {chain_id} failed: {cause}")


class AllChainsFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class HmcConfig:
    n_chains: int = 4
    n_warmup: int = 1000
    n_samples: int = 1000
    step_size: float = 0.1
    n_leapfrog: int = 32
    mass: float = 1.0  # sigma_m^2, M = mass * I
    init_box: tuple[tuple[float, float], ...] | None = None
    init_points: np.ndarray | None = field(default=None, compare=False)
    seed: int = 0
    target_accept: float = 0.8
    jitter: float = 0.2

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be positive")
        if self.n_warmup < 0 or self.n_samples < 0:
            raise ValueError("n_warmup and n_samples must be nonnegative")
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.n_leapfrog < 1:
            raise ValueError("n_leapfrog must be positive")
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if not 0 <= self.jitter < 1:
            raise ValueError("jitter must lie in [0, 1)")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.init_points is not None:
            pts = np.atleast_2d(np.asarray(self.init_points, dtype=float))
            if pts.shape[0] != self.n_chains:
                raise ValueError(f"{pts.shape[0]} init points for {self.n_chains} chains")
            object.__setattr__(self, "init_points", pts)
        elif self.init_box is None:
            raise ValueError("need init_box (overdispersed start) or init_points")
        if self.init_box is not None:
            box = tuple((float(lo), float(hi)) for lo, hi in self.init_box)
            if any(not lo < hi for lo, hi in box):
                raise ValueError("init_box needs lo < hi")
            object.__setattr__(self, "init_box", box)


@dataclass
class ChainState:
    x: np.ndarray
    log_density: float
    grad: np.ndarray
    iteration: int = 0
    accept_count: int = 0
    clamped_count: int = 0


def chain_rng(seed: int, chain_id: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(chain_id),))
    return np.random.Generator(np.random.Philox(ss))


def _grad_eval(model: DensityModel, X):
    ev = evaluate(model, X, grad=True, singular="clamp")
    return ev.log_density, ev.grad, ev.clamped


# ---------------------------------------------------------------------------
# integrator


def _leapfrog_batch(model, X, P, G, eps, L, mass):
    """Advance every row by its own (eps, L). ``G`` is grad log p at X.

    Returns X', P', log p(X'), grad at X', a bad-row mask (non-finite
    somewhere along the path) and the number of clamped evaluations per row.
    """
    C = X.shape[0]
    X = X.copy()
    P = P + 0.5 * eps[:, None] * G
    bad = ~np.all(np.isfinite(P), axis=1)
    clamped = np.zeros(C, dtype=np.int64)
    logp = np.full(C, np.nan)
    Gn = G.copy()
    Lmax = int(L.max()) if C else 0
    for step in range(1, Lmax + 1):
        act = (step <= L) & ~bad
        if not np.any(act):
            break
        with np.errstate(over="ignore", invalid="ignore"):
            X[act] += eps[act, None] * P[act] / mass
            lp, g, cl = _grad_eval(model, X[act])
        clamped[act] += cl
        rows = np.flatnonzero(act)
        fin = np.all(np.isfinite(X[act]), axis=1) & np.all(np.isfinite(g), axis=1) & ~np.isnan(lp)
        bad[rows[~fin]] = True
        last = step == L[act]
        coef = np.where(last, 0.5, 1.0) * eps[act]
        P[act] += coef[:, None] * g
        Gn[act] = g
        logp[act] = lp
    bad |= ~np.all(np.isfinite(P), axis=1)
    return X, P, logp, Gn, bad, clamped


def leapfrog(model: DensityModel, x, p, eps: float, L: int, mass: float = 1.0):
    """L leapfrog steps of size eps from (x, p); returns (x', p')."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if eps == 0:
        return x.copy(), p.copy()
    _, g0, _ = _grad_eval(model, x[None])
    X, P, _, _, bad, _ = _leapfrog_batch(
        model, x[None], p[None], g0, np.array([float(eps)]), np.array([int(L)]), mass
    )
    if bad[0]:
        raise NonFinite(int(L))
    return X[0], P[0]


def hamiltonian(model: DensityModel, x, p, mass: float = 1.0) -> float:
    lp = evaluate(model, np.asarray(x, dtype=float)[None], singular="clamp").log_density[0]
    p = np.asarray(p, dtype=float)
    return float(-lp + p @ p / (2 * mass))


# ---------------------------------------------------------------------------
# transitions


def _transition_batch(model, states: list[ChainState], eps, L, rngs, mass):
    """One Metropolis-corrected HMC move for each chain; returns accept probs."""
    C = len(states)
    n = model.n
    X = np.array([s.x for s in states])
    G = np.array([s.grad for s in states])
    lp0 = np.array([s.log_density for s in states])
    P0 = np.empty((C, n))
    u = np.empty(C)
    for c, r in enumerate(rngs):
        P0[c] = r.normal(0.0, math.sqrt(mass), n)
    for c, r in enumerate(rngs):
        u[c] = r.random()
    X1, P1, lp1, G1, bad, clamped = _leapfrog_batch(model, X, P0, G, eps, L, mass)
    H0 = -lp0 + np.einsum("ij,ij->i", P0, P0) / (2 * mass)
    H1 = -lp1 + np.einsum("ij,ij->i", P1, P1) / (2 * mass)
    with np.errstate(invalid="ignore", over="ignore"):
        log_ratio = np.where(bad | ~np.isfinite(H1), -np.inf, H0 - H1)
    alpha = np.minimum(1.0, np.exp(np.minimum(log_ratio, 0.0)))
    alpha = np.where(np.isnan(alpha), 0.0, alpha)
    accept = u < alpha  # H1 < H0 gives alpha = 1 > u
    for c, s in enumerate(states):
        s.iteration += 1
        s.clamped_count += int(clamped[c])
        if accept[c]:
            s.x = X1[c].copy()
            s.log_density = float(lp1[c])
            s.grad = G1[c].copy()
            s.accept_count += 1
    return alpha, accept, bad


def hmc_transition(model: DensityModel, state: ChainState, eps: float, L: int, rng, mass: float = 1.0) -> ChainState:
    """Single-chain transition; returns the updated state (mutated in place)."""
    _transition_batch(model, [state], np.array([float(eps)]), np.array([int(L)]), [rng], mass)
    return state


def init_state(model: DensityModel, x) -> ChainState:
    ev = evaluate(model, np.asarray(x, dtype=float)[None], grad=True, singular="clamp")
    return ChainState(np.array(x, dtype=float), float(ev.log_density[0]), ev.grad[0].copy())


# ---------------------------------------------------------------------------
# dual averaging


class DualAveraging:
    """Dual-averaging step-size adaptation (gamma=0.05, t0=10, kappa=0.75).

    Tracks the running mean acceptance shortfall and freezes the averaged
    step size when warmup ends.
    """

    def __init__(self, eps0: float, target: float, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10 * eps0)
        self.target = target
        self.gamma, self.t0, self.kappa = gamma, t0, kappa
        self.hbar = 0.0
        self.log_eps = math.log(eps0)
        self.log_eps_bar = 0.0
        self.m = 0

    def update(self, accept_prob: float) -> float:
        self.m += 1
        m = self.m
        w = 1.0 / (m + self.t0)
        self.hbar = (1 - w) * self.hbar + w * (self.target - accept_prob)
        self.log_eps = self.mu - math.sqrt(m) / self.gamma * self.hbar
        eta = m ** (-self.kappa)
        self.log_eps_bar = eta * self.log_eps + (1 - eta) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def final(self) -> float:
        return math.exp(self.log_eps_bar) if self.m else math.exp(self.log_eps)


# ---------------------------------------------------------------------------
# driver

META_KEYS = ("proposal_index", "chain_id", "log_density", "residual_norm", "accepted")


def _initial_points(model, cfg: HmcConfig, rngs):
    if cfg.init_points is not None:
        pts = cfg.init_points
        if pts.shape[1] != model.n:
            raise ValueError(f"init points have dimension {pts.shape[1]}, model has {model.n}")
        if not np.all(model.in_box(pts)):
            raise ValueError("explicit init points must lie inside the truncation box")
        return [pts[c].copy() for c in range(cfg.n_chains)], [None] * cfg.n_chains
    box = cfg.init_box
    if len(box) != model.n:
        raise ValueError(f"init box has {len(box)} intervals, model has {model.n} variables")
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    pts, errs = [], []
    for c, r in enumerate(rngs):
        for _ in range(100):
            x = lo + (hi - lo) * r.random(model.n)
            ev = evaluate(model, x[None], grad=True, singular="mask")
            if ev.ok[0] and np.isfinite(ev.log_density[0]) and np.all(np.isfinite(ev.grad[0])):
                pts.append(x)
                errs.append(None)
                break
        else:
            pts.append(None)
            errs.append("no finite starting point in 100 overdispersed draws")
    return pts, errs


def run_chains(model: DensityModel, cfg: HmcConfig) -> SampleBatch:
    rngs = [chain_rng(cfg.seed, c) for c in range(cfg.n_chains)]
    starts, errs = _initial_points(model, cfg, rngs)
    failures = {c: e for c, e in enumerate(errs) if e}
    live = [c for c in range(cfg.n_chains) if c not in failures]
    if not live:
        raise AllChainsFailed("; ".join(f"chain {c}: {e}" for c, e in failures.items()))

    states = {c: init_state(model, starts[c]) for c in live}
    adapt = {c: DualAveraging(cfg.step_size, cfg.target_accept) for c in live}
    eps = {c: cfg.step_size for c in live}
    warm_acc = {c: 0.0 for c in live}

    n = model.n
    draws = {c: np.empty((cfg.n_samples, n)) for c in live}
    dlogp = {c: np.empty(cfg.n_samples) for c in live}
    dacc = {c: np.zeros(cfg.n_samples, dtype=bool) for c in live}

    total = cfg.n_warmup + cfg.n_samples
    for it in range(total):
        if not live:
            break
        warm = it < cfg.n_warmup
        if it == cfg.n_warmup:
            for c in live:
                eps[c] = adapt[c].final
                states[c].accept_count = 0
        Ls = np.empty(len(live), dtype=np.int64)
        for k, c in enumerate(live):
            j = rngs[c].uniform(1 - cfg.jitter, 1 + cfg.jitter)
            Ls[k] = max(1, int(round(cfg.n_leapfrog * j)))
        E = np.array([eps[c] for c in live])
        try:
            alpha, accept, _ = _transition_batch(
                model, [states[c] for c in live], E, Ls, [rngs[c] for c in live], cfg.mass
            )
        except Exception as exc:  # a failing evaluation takes down the whole batch
            for c in live:
                failures[c] = f"{type(exc).__name__}: {exc}"
            live = []
            break
        for k, c in enumerate(live):
            if warm:
                eps[c] = adapt[c].update(float(alpha[k]))
                warm_acc[c] += float(alpha[k])
            else:
                j = it - cfg.n_warmup
                draws[c][j] = states[c].x
                dlogp[c][j] = states[c].log_density
                dacc[c][j] = bool(accept[k])

    done = [c for c in range(cfg.n_chains) if c not in failures]
    if not done:
        raise AllChainsFailed("; ".join(f"chain {c}: {e}" for c, e in failures.items()))

    chains = []
    pts, cid, pidx, lps, accs = [], [], [], [], []
    for c in done:
        st = states[c]
        acc = int(dacc[c].sum())
        chains.append(
            {
                "chain_id": c,
                "step_size": eps[c],
                "warmup_mean_accept_prob": warm_acc[c] / cfg.n_warmup if cfg.n_warmup else None,
                "transitions": cfg.n_samples,
                "accepted": acc,
                "acceptance_rate": acc / cfg.n_samples if cfg.n_samples else None,
                "clamped_evaluations": st.clamped_count,
            }
        )
        pts.append(draws[c])
        cid.append(np.full(cfg.n_samples, c, dtype=np.int64))
        pidx.append(np.arange(cfg.n_samples, dtype=np.int64))
        lps.append(dlogp[c])
        accs.append(dacc[c])

    points = np.concatenate(pts) if pts else np.empty((0, n))
    residual = (
        np.linalg.norm(model._compiled.evaluate(points), axis=1) if len(points) else np.empty(0)
    )
    n_trans = cfg.n_samples * len(done)
    n_acc = int(sum(ch["accepted"] for ch in chains))
    summary = {
        "sampler": "hmc",
        "chains": chains,
        "failed_chains": [{"chain_id": c, "cause": e} for c, e in sorted(failures.items())],
        "transitions": n_trans,
        "accepted": n_acc,
        "acceptance_rate": n_acc / n_trans if n_trans else None,
    }
    meta = {
        "proposal_index": np.concatenate(pidx),
        "chain_id": np.concatenate(cid),
        "log_density": np.concatenate(lps),
        "residual_norm": residual,
        "accepted": np.concatenate(accs),
    }
    for f in summary["failed_chains"]:
        log.warning("chain %d failed: %s", f["chain_id"], f["cause"])
    return SampleBatch(points, model.system.context.names, meta, summary)
