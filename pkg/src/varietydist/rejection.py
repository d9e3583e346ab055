"""Uniform-box rejection sampling of variety densities.

Gaussian-kind pseudodensities are bounded by 1 with equality on the variety,
so a uniform proposal over the box with the constant envelope 1 is valid:
draw x uniformly, draw u ~ U(0, 1), keep x when u <= p(x). In band mode the
indicator 1[|gbar(x)| <= eps] is the target and u is not consulted.

Randomness is counter based: proposal ``i`` always uses the same Philox block
for a given seed, independent of how proposals are chunked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .batch import SampleBatch
from .density import HVN, VN, DensityModel, Induced, Uniform, band_statistic, evaluate

_CHUNK = 8192
META_KEYS = ("proposal_index", "chain_id", "log_density", "residual_norm", "accepted")


@dataclass(frozen=True)
class RejectionConfig:
    box: tuple[tuple[float, float], ...]
    n_proposals: int
    seed: int = 0
    mode: str = "density"  # or "band"
    epsilon: float | None = None

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        object.__setattr__(self, "box", box)
        if not box:
            raise ValueError("box must have at least one interval")
        for lo, hi in box:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"box interval ({lo}, {hi}) must be finite with lo < hi")
        if int(self.n_proposals) < 1:
            raise ValueError("n_proposals must be positive")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.mode not in ("density", "band"):
            raise ValueError(f"unknown rejection mode {self.mode!r}")
        if self.mode == "band" and not (self.epsilon is not None and self.epsilon > 0):
            raise ValueError("band mode needs a positive epsilon")


def _key(seed: int) -> np.ndarray:
    return np.random.SeedSequence(int(seed)).generate_state(2, np.uint64)


def proposal_uniforms(seed: int, start: int, stop: int, width: int) -> np.ndarray:
    """Uniforms for proposals ``start..stop-1``; row i depends only on (seed, i)."""
    per = -(-width // 4)  # Philox counter steps per proposal, 4 doubles each
    bg = np.random.Philox(key=_key(seed), counter=[start * per, 0, 0, 0])
    U = np.random.Generator(bg).random((stop - start) * 4 * per)
    return U.reshape(stop - start, 4 * per)[:, :width]


def sample_rejection(model: DensityModel, cfg: RejectionConfig) -> SampleBatch:
    n = model.n
    if len(cfg.box) != n:
        raise ValueError(f"box has {len(cfg.box)} intervals, model has {n} variables")
    if cfg.mode == "band":
        ok_kind = isinstance(model.kind, (HVN, VN)) or (
            isinstance(model.kind, Induced) and isinstance(model.kind.base, Uniform)
        )
        if not ok_kind:
            raise ValueError("band mode needs an HVN, VN or uniform-induced model")
    lo = np.array([b[0] for b in cfg.box])
    hi = np.array([b[1] for b in cfg.box])

    pts, idx, logp, rnorm = [], [], [], []
    n_rank = 0
    for start in range(0, cfg.n_proposals, _CHUNK):
        stop = min(start + _CHUNK, cfg.n_proposals)
        U = proposal_uniforms(cfg.seed, start, stop, n + 1)
        X = lo + (hi - lo) * U[:, :n]
        ev = evaluate(model, X, singular="mask")
        if cfg.mode == "density":
            keep = ev.ok & (U[:, n] <= np.exp(ev.log_density))
        else:
            stat = band_statistic(model, X)
            keep = ev.ok & (stat <= cfg.epsilon) & model.in_box(X)
        n_rank += int(np.count_nonzero(~ev.ok))
        sel = np.flatnonzero(keep)
        pts.append(X[sel])
        idx.append(start + sel)
        logp.append(ev.log_density[sel])
        rnorm.append(np.linalg.norm(ev.residual[sel], axis=1))

    points = np.concatenate(pts) if pts else np.empty((0, n))
    accepted = points.shape[0]
    summary = {
        "sampler": "rejection",
        "mode": cfg.mode,
        "proposed": cfg.n_proposals,
        "accepted": accepted,
        "acceptance_rate": accepted / cfg.n_proposals,
        "rank_deficient": n_rank,
    }
    meta = {
        "proposal_index": np.concatenate(idx).astype(np.int64),
        "chain_id": np.zeros(accepted, dtype=np.int64),
        "log_density": np.concatenate(logp),
        "residual_norm": np.concatenate(rnorm),
        "accepted": np.ones(accepted, dtype=bool),
    }
    return SampleBatch(points, model.system.context.names, meta, summary)
