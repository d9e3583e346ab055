"""Named polynomial systems with a recommended window and dispersion.

``catalog("torus", {"R": 3})`` or, from the command line, ``torus:R=3,r=1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .polynomial import PolySystem, Polynomial, VarContext, parse_polynomial


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    params: Mapping[str, float]
    system: PolySystem
    box: tuple[tuple[float, float], ...]
    sigma: float
    witness: tuple[float, ...] | None = None


def _sys(names, eqs=(), ineqs=()) -> PolySystem:
    return PolySystem.from_strings(names, eqs, ineqs)


def _square(n: int, lo: float, hi: float):
    return ((lo, hi),) * n


def _plane_curve(expr: str, box=1.5, sigma=0.1, witness=None):
    def build():
        return _sys(("x", "y"), [expr]), _square(2, -box, box), sigma, witness

    return build


def kuramoto_system(N: int) -> PolySystem:
    """Equilibria of N identical, all-to-all coupled phase oscillators.

    Oscillator N is pinned at angle 0 (c_N = 1, s_N = 0). With
    c_i = cos(theta_i), s_i = sin(theta_i), equation i is
    N * sum_{j != i} sin(theta_j - theta_i) after the sign convention
    that puts ``N*s_i`` first, followed by the unit-circle constraints.
    """
    N = int(N)
    if N < 2:
        raise ValueError("kuramoto needs N >= 2")
    k = N - 1
    names = tuple(f"c{i}" for i in range(1, N)) + tuple(f"s{i}" for i in range(1, N))
    ctx = VarContext(names)
    c = [Polynomial.var(ctx, f"c{i}") for i in range(1, N)]
    s = [Polynomial.var(ctx, f"s{i}") for i in range(1, N)]
    one = Polynomial.constant(ctx, 1.0)
    zero = Polynomial.zero(ctx)
    cc = c + [one]
    ss = s + [zero]
    eqs = []
    for i in range(k):
        # N*(c_j s_i - c_i s_j) summed over the other oscillators, pinned one included
        acc = zero
        for j in range(N):
            if j != i:
                acc = acc + N * (cc[j] * ss[i] - cc[i] * ss[j])
        eqs.append(acc)
    eqs += [c[i] * c[i] + s[i] * s[i] - 1 for i in range(k)]
    return PolySystem(ctx, tuple(eqs))


def _torus(R=2.0, r=1.0):
    R, r = float(R), float(r)
    if not (R > 0 and r > 0):
        raise ValueError("torus needs R > 0 and r > 0")
    ctx = VarContext(("x", "y", "z"))
    x, y, z = (Polynomial.var(ctx, v) for v in "xyz")
    q = x * x + y * y + z * z + (R * R - r * r)
    g = q * q - 4 * R * R * (x * x + y * y)
    ext = R + r + 0.5
    box = ((-ext, ext), (-ext, ext), (-r - 0.5, r + 0.5))
    return PolySystem(ctx, (g,)), box, 0.5, (R + r, 0.0, 0.0)


def _kuramoto(N=5):
    N = int(N)
    sys = kuramoto_system(N)
    witness = (1.0,) * (N - 1) + (0.0,) * (N - 1)
    return sys, _square(2 * (N - 1), -1.5, 1.5), 0.05, witness


_ELLIPSE_PINCH = ("x^2 + (4*y)^2 - 1", "(y - x)*(y + x)", "(x^2 + y^2)^3 - 4*x^2*y^2", "(x^2 + y^2 - 1)^3 - x^2*y^3")
_ZERO_DIM = (("x", "y"), ("y - x", "y + x"), ("y - x^2", "y + x^2"), ("x*y^3 - x^3*y", "x^2 + y^2 - 1"))

_BUILDERS: dict[str, Callable] = {
    "circle": _plane_curve("x^2 + y^2 - 1", witness=(1.0, 0.0)),
    "alpha_minus": _plane_curve("y^2 - (x^3 - x^2)", witness=(1.0, 0.0)),
    "alpha_plus": _plane_curve("y^2 - (x^3 + x^2)", witness=(-1.0, 0.0)),
    "lemniscate": _plane_curve("(x^2 + y^2)^2 - 2*(x^2 - y^2)", box=2.0, witness=(math.sqrt(2.0), 0.0)),
    "lissajous6": _plane_curve(
        "9*x^2 - 24*x^4 + 16*x^6 + 9*y^2 - 24*y^4 + 16*y^6 - 1", box=1.2, sigma=0.05, witness=(1.0, 0.0)
    ),
    "ellipse": _plane_curve(_ELLIPSE_PINCH[0], witness=(1.0, 0.0)),
    "cross": _plane_curve(_ELLIPSE_PINCH[1], witness=(1.0, 1.0)),
    "rose4": _plane_curve(_ELLIPSE_PINCH[2], witness=(0.0, 0.0)),
    "heart": _plane_curve(_ELLIPSE_PINCH[3], witness=(1.0, 0.0)),
    "whitney": lambda: (_sys(("x", "y", "z"), ["x^2 - y^2*z"]), _square(3, -2.0, 2.0), 0.1, (0.0, 0.0, 1.0)),
    "torus": _torus,
    "sphere_plane": lambda: (
        _sys(("x", "y", "z"), ["x^2 + y^2 + z^2 - 1", "z - x - y"]),
        _square(3, -1.5, 1.5),
        0.1,
        (1 / math.sqrt(2), -1 / math.sqrt(2), 0.0),
    ),
    "circle_plane": lambda: (
        _sys(("x", "y", "z"), ["x^2 + y^2 - 1", "z"]),
        _square(3, -1.5, 1.5),
        0.1,
        (1.0, 0.0, 0.0),
    ),
    "independence2x2": lambda: (
        _sys(("p00", "p01", "p10", "p11"), ["p00*p11 - p01*p10", "p00 + p01 + p10 + p11 - 1"]),
        _square(4, 0.0, 1.0),
        0.025,
        (0.25, 0.25, 0.25, 0.25),
    ),
    "disc": lambda: (_sys(("x", "y"), [], ["1 - x^2 - y^2"]), _square(2, -1.5, 1.5), 0.05, (0.0, 0.0)),
    "kuramoto": _kuramoto,
}
for _k, _eqs in enumerate(_ZERO_DIM, start=1):
    _w = (1.0, 0.0) if _k == 4 else (0.0, 0.0)
    _BUILDERS[f"zero_dim{_k}"] = (
        lambda eqs=_eqs, w=_w: (_sys(("x", "y"), list(eqs)), _square(2, -1.5, 1.5), 0.2, w)
    )

# grouped names; ``k`` picks the member (1-based)
_GROUPS = {
    "ellipse_pinch": ("ellipse", "cross", "rose4", "heart"),
    "zero_dim": tuple(f"zero_dim{k}" for k in range(1, 5)),
}


def names() -> list[str]:
    return sorted(_BUILDERS) + sorted(_GROUPS)


def catalog(name: str, params: Mapping[str, float] | None = None) -> CatalogEntry:
    params = dict(params or {})
    if name in _GROUPS:
        members = _GROUPS[name]
        k = int(params.pop("k", 1))
        if not 1 <= k <= len(members):
            raise ValueError(f"{name}: k must be in 1..{len(members)}")
        if params:
            raise ValueError(f"{name}: unexpected parameters {sorted(params)}")
        entry = catalog(members[k - 1])
        return CatalogEntry(name, {"k": k}, entry.system, entry.box, entry.sigma, entry.witness)
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise KeyError(f"unknown catalog system {name!r}; known: {', '.join(names())}") from None
    try:
        sys, box, sigma, witness = builder(**params)
    except TypeError as exc:
        raise ValueError(f"{name}: bad parameters {params}: {exc}") from None
    return CatalogEntry(name, params, sys, box, sigma, witness)


def parse_system_ref(ref: str) -> CatalogEntry:
    """``name`` or ``name:key=value,key=value``."""
    name, _, rest = ref.partition(":")
    params: dict[str, float] = {}
    if rest:
        for item in rest.split(","):
            key, eq, val = item.partition("=")
            if not eq or not key.strip():
                raise ValueError(f"bad catalog parameter {item!r} in {ref!r}")
            v = float(val)
            params[key.strip()] = int(v) if v.is_integer() else v
    return catalog(name.strip(), params)


def log_likelihood_multinomial(p, counts) -> float:
    """sum counts_i * log p_i; -inf if some p_i <= 0 carries a positive count."""
    p = np.asarray(p, dtype=float)
    counts = np.asarray(counts, dtype=float)
    if p.shape != counts.shape:
        raise ValueError(f"p has {p.size} cells, counts has {counts.size}")
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    total = 0.0
    for pi, ci in zip(p, counts):
        if ci == 0:
            continue
        if not pi > 0:
            return -math.inf
        total += ci * math.log(pi)
    return total
