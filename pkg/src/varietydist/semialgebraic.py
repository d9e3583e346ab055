"""Semi-algebraic sets as projections of varieties.

``h(x) > 0`` holds exactly when ``h(x) - s^2 = 0`` has a real solution with
``s != 0``, so a set {g = 0, h > 0} is the coordinate projection of the
variety of ``g_1..g_m, h_1 - s_1^2, .., h_l - s_l^2``. Sampling near that
variety and dropping the slack columns gives draws concentrated on the set.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .batch import SampleBatch
from .polynomial import PolySystem, Polynomial, VarContext


@dataclass(frozen=True)
class LiftedSystem:
    lifted: PolySystem
    original: PolySystem
    slack_map: Mapping[int, int]  # inequality index -> coordinate of its slack
    identity: bool = False

    @property
    def original_dim(self) -> int:
        return self.original.n

    @property
    def slack_names(self) -> tuple[str, ...]:
        return self.lifted.context.names[self.original.n :]


def lift_with_slacks(sys: PolySystem) -> LiftedSystem:
    n, l = sys.n, len(sys.inequalities)
    if l == 0:
        warnings.warn("system has no inequalities; lift is the identity", stacklevel=2)
        return LiftedSystem(sys, sys, {}, identity=True)
    slacks = tuple(f"_s{i}" for i in range(1, l + 1))
    clash = set(slacks) & set(sys.context.names)
    if clash:
        raise ValueError(f"slack names {sorted(clash)} collide with system variables")
    ctx = sys.context.extend(slacks)
    eqs = [g.embed(ctx) for g in sys.equalities]
    for i, h in enumerate(sys.inequalities):
        s = Polynomial.var(ctx, n + i)
        eqs.append(h.embed(ctx) - s * s)
    return LiftedSystem(PolySystem(ctx, tuple(eqs)), sys, {i: n + i for i in range(l)})


def marginalize(samples: SampleBatch, lift: LiftedSystem) -> SampleBatch:
    """Drop the slack coordinates; rows and metadata are untouched."""
    if samples.dim != lift.lifted.n:
        raise ValueError(f"batch has {samples.dim} columns, lifted system has {lift.lifted.n}")
    n = lift.original_dim
    return samples.with_points(samples.points[:, :n], lift.original.context.names)


def lift_box(box, lift: LiftedSystem, slack_range: tuple[float, float] | None = None):
    """Extend an original-coordinate box with intervals for the slacks.

    Without an explicit range each slack gets [-r, r] with r the largest
    absolute bound of the original box.
    """
    box = tuple(tuple(b) for b in box)
    if slack_range is None:
        r = max(max(abs(lo), abs(hi)) for lo, hi in box)
        slack_range = (-r, r)
    return box + (tuple(slack_range),) * len(lift.slack_map)


def _fresh_name(ctx: VarContext, stem: str) -> str:
    if stem not in ctx:
        return stem
    k = 1
    while f"{stem}{k}" in ctx:
        k += 1
    return f"{stem}{k}"


def square_substitute(sys: PolySystem, var: str, new_name: str = "t") -> tuple[PolySystem, str]:
    """Replace ``var`` by ``t^2`` (``t`` takes var's coordinate slot).

    Returns the new system and the name actually used for ``t``. Recover the
    nonnegative original coordinate as ``t**2``.
    """
    i = sys.context.index(var)
    others = VarContext(tuple(nm for nm in sys.context.names if nm != var))
    t = _fresh_name(others, new_name)
    names = list(sys.context.names)
    names[i] = t
    ctx = VarContext(tuple(names))

    def sub(p: Polynomial) -> Polynomial:
        terms = {}
        for alpha, c in p.terms.items():
            beta = list(alpha)
            beta[i] = 2 * alpha[i]
            terms[tuple(beta)] = c
        return Polynomial(ctx, terms)

    return PolySystem(ctx, tuple(map(sub, sys.equalities)), tuple(map(sub, sys.inequalities))), t


def recover_square(points, index: int) -> np.ndarray:
    pts = np.array(points, dtype=float)
    pts[:, index] = pts[:, index] ** 2
    return pts
