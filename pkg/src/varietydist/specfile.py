"""Plain-text system descriptions.

::

    # unit circle, thickened
    vars: x, y
    poly: x^2 + y^2 - 1
    sigma: 0.1
    box: -1.5, 1.5

Keys: ``vars`` (exactly once), ``poly`` and ``ineq`` (any number, at least
one overall; ``ineq: h`` means h > 0), and optional ``sigma``, ``box`` and
``truncate``. A box is ``lo,hi`` (applied to every variable) or one pair per
variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .polynomial import ParseError, PolySystem, VarContext, parse_polynomial


class SpecError(ValueError):
    def __init__(self, message: str, line: int, col: int, source: str = "<spec>"):
        super().__init__(f"{source}:{line}:{col}: {message}")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class SystemSpec:
    system: PolySystem
    sigma: float | None = None
    box: tuple[tuple[float, float], ...] | None = None
    truncate: tuple[tuple[float, float], ...] | None = None


_KEYS = ("vars", "poly", "ineq", "sigma", "box", "truncate")


def parse_box(text: str, n: int) -> tuple[tuple[float, float], ...]:
    """``lo,hi`` broadcast to n dimensions, or n explicit pairs."""
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ValueError(f"box {text!r} must be comma-separated numbers") from None
    if len(vals) == 2:
        vals = vals * n
    if len(vals) != 2 * n:
        raise ValueError(f"box needs 2 or {2 * n} numbers, got {len(vals)}")
    box = tuple(zip(vals[::2], vals[1::2]))
    for lo, hi in box:
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ValueError(f"box interval ({lo}, {hi}) must be finite with lo < hi")
    return box


def parse_spec(text: str, source: str = "<spec>") -> SystemSpec:
    entries: dict[str, list[tuple[int, int, str]]] = {k: [] for k in _KEYS}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        key, colon, value = line.partition(":")
        key_col = len(key) - len(key.lstrip()) + 1
        if not colon:
            raise SpecError("expected 'key: value'", lineno, key_col, source)
        key = key.strip()
        if key not in entries:
            raise SpecError(f"unknown key {key!r} (expected one of {', '.join(_KEYS)})", lineno, key_col, source)
        vcol = len(line) - len(value) + 1  # 1-based column where value text starts
        entries[key].append((lineno, vcol, value))

    if len(entries["vars"]) != 1:
        where = entries["vars"][1] if entries["vars"] else (1, 1, "")
        raise SpecError("exactly one 'vars' line is required", where[0], where[1], source)
    lineno, vcol, value = entries["vars"][0]
    names = [v.strip() for v in value.split(",")]
    for nm in names:
        if nm.startswith("_"):
            raise SpecError(f"variable names may not start with '_' ({nm!r})", lineno, vcol, source)
    try:
        ctx = VarContext(tuple(names))
    except ValueError as exc:
        raise SpecError(str(exc), lineno, vcol, source) from None

    def polys(key):
        out = []
        for lineno, vcol, value in entries[key]:
            try:
                out.append(parse_polynomial(value, ctx))
            except ParseError as exc:
                raise SpecError(exc.message, lineno, vcol + exc.pos, source) from None
        return tuple(out)

    eqs, ineqs = polys("poly"), polys("ineq")
    if not eqs and not ineqs:
        raise SpecError("need at least one 'poly' or 'ineq' line", lineno, 1, source)

    def single(key):
        if len(entries[key]) > 1:
            lineno, vcol, _ = entries[key][1]
            raise SpecError(f"'{key}' given more than once", lineno, vcol, source)
        return entries[key][0] if entries[key] else None

    sigma = box = trunc = None
    if (e := single("sigma")) is not None:
        try:
            sigma = float(e[2])
        except ValueError:
            raise SpecError(f"sigma {e[2].strip()!r} is not a number", e[0], e[1], source) from None
        if not (math.isfinite(sigma) and sigma > 0):
            raise SpecError("sigma must be positive", e[0], e[1], source)
    for key in ("box", "truncate"):
        if (e := single(key)) is not None:
            try:
                val = parse_box(e[2], len(ctx))
            except ValueError as exc:
                raise SpecError(str(exc), e[0], e[1], source) from None
            if key == "box":
                box = val
            else:
                trunc = val
    return SystemSpec(PolySystem(ctx, eqs, ineqs), sigma, box, trunc)
