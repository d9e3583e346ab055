"""Sparse multivariate polynomials with real coefficients.

A polynomial is a map from exponent tuples to nonzero float coefficients over
an ordered variable context. Everything here is immutable; arithmetic returns
new objects in canonical form (zero coefficients pruned).

The text form accepted by :func:`parse_polynomial` is also what ``str()``
prints, so printing and re-parsing round-trips the term map exactly::

    >>> ctx = VarContext(("x", "y"))
    >>> p = parse_polynomial("(x + y)*(x - y)", ctx)
    >>> str(p)
    'x^2 - y^2'
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "VarContext",
    "Polynomial",
    "PolySystem",
    "ParseError",
    "ContextMismatch",
    "parse_polynomial",
    "evaluate",
    "add",
    "mul",
    "scale",
    "differentiate",
    "gradient",
    "jacobian",
    "hessian_stack",
    "sum_of_squares",
]

_IDENT = re.compile(r"[A-Za-z][A-Za-z0-9_]*\Z")
# slack variables use a leading underscore; they are generated, never typed by users
_INTERNAL_IDENT = re.compile(r"_?[A-Za-z][A-Za-z0-9_]*\Z")


class ParseError(ValueError):
    """Malformed polynomial text. ``pos`` is the 0-based character offset."""

    def __init__(self, message: str, pos: int, src: str = ""):
        self.message = message
        self.pos = pos
        self.src = src
        super().__init__(f"{message} at position {pos}")


class ContextMismatch(ValueError):
    pass


@dataclass(frozen=True)
class VarContext:
    """Ordered, distinct variable names; position is the coordinate index."""

    names: tuple[str, ...]
    _index: Mapping[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise ValueError("a variable context needs at least one variable")
        for nm in names:
            if not isinstance(nm, str) or not _INTERNAL_IDENT.match(nm):
                raise ValueError(f"invalid variable name {nm!r}")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        object.__setattr__(
            self, "_index", MappingProxyType({nm: i for i, nm in enumerate(names)})
        )

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown variable {name!r}") from None

    def extend(self, extra: Sequence[str]) -> "VarContext":
        return VarContext(self.names + tuple(extra))


def _grlex_key(alpha: tuple[int, ...]):
    return (sum(alpha), alpha)


class Polynomial:
    """Immutable sparse polynomial over a :class:`VarContext`."""

    __slots__ = ("_ctx", "_terms", "_hash")

    def __init__(self, ctx: VarContext, terms: Mapping[Sequence[int], float] | None = None):
        self._ctx = ctx
        n = len(ctx)
        clean: dict[tuple[int, ...], float] = {}
        for alpha, c in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != n:
                raise ValueError(f"exponent {alpha} does not match {n} variables")
            if any(a < 0 for a in alpha):
                raise ValueError(f"negative exponent in {alpha}")
            c = float(c)
            if c != 0.0:
                clean[alpha] = clean.get(alpha, 0.0) + c
        # canonical order: descending graded lex
        self._terms = {
            a: clean[a]
            for a in sorted(clean, key=_grlex_key, reverse=True)
            if clean[a] != 0.0
        }
        self._hash = None

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls, ctx: VarContext) -> "Polynomial":
        return cls(ctx, {})

    @classmethod
    def constant(cls, ctx: VarContext, c: float) -> "Polynomial":
        return cls(ctx, {(0,) * len(ctx): c})

    @classmethod
    def var(cls, ctx: VarContext, name: str | int) -> "Polynomial":
        i = name if isinstance(name, int) else ctx.index(name)
        alpha = [0] * len(ctx)
        alpha[i] = 1
        return cls(ctx, {tuple(alpha): 1.0})

    # basic properties -----------------------------------------------------
    @property
    def context(self) -> VarContext:
        return self._ctx

    @property
    def terms(self) -> Mapping[tuple[int, ...], float]:
        return MappingProxyType(self._terms)

    @property
    def nvars(self) -> int:
        return len(self._ctx)

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        """Total degree; -1 for the zero polynomial."""
        return max((sum(a) for a in self._terms), default=-1)

    def degree_in(self, var: str | int) -> int:
        i = var if isinstance(var, int) else self._ctx.index(var)
        return max((a[i] for a in self._terms), default=-1)

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self._ctx, other)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self._ctx == other._ctx and self._terms == other._terms

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self._ctx.names, tuple(self._terms.items())))
        return self._hash

    def __repr__(self) -> str:
        return f"Polynomial({str(self)!r}, vars={self._ctx.names})"

    def __str__(self) -> str:
        return format_polynomial(self)

    # arithmetic -----------------------------------------------------------
    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            if other._ctx != self._ctx:
                raise ContextMismatch(
                    f"contexts differ: {self._ctx.names} vs {other._ctx.names}"
                )
            return other
        if isinstance(other, (int, float, np.integer, np.floating)):
            return Polynomial.constant(self._ctx, float(other))
        raise TypeError(f"cannot combine Polynomial with {type(other).__name__}")

    def __add__(self, other):
        return add(self, self._coerce(other))

    __radd__ = __add__

    def __neg__(self):
        return scale(self, -1.0)

    def __sub__(self, other):
        return add(self, scale(self._coerce(other), -1.0))

    def __rsub__(self, other):
        return add(self._coerce(other), scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, (int, float, np.integer, np.floating)):
            return scale(self, float(other))
        return mul(self, self._coerce(other))

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("polynomial powers must be nonnegative integers")
        out = Polynomial.constant(self._ctx, 1.0)
        base = self
        k = int(k)
        while k:
            if k & 1:
                out = mul(out, base)
            k >>= 1
            if k:
                base = mul(base, base)
        return out

    def __call__(self, x):
        return evaluate(self, x)

    def rename(self, ctx: VarContext) -> "Polynomial":
        """Same term map under a context with the same length."""
        if len(ctx) != len(self._ctx):
            raise ContextMismatch("rename needs a context of equal length")
        return Polynomial(ctx, self._terms)

    def embed(self, ctx: VarContext) -> "Polynomial":
        """Re-express over a larger context whose names include ours."""
        idx = [ctx.index(nm) for nm in self._ctx.names]
        terms = {}
        for alpha, c in self._terms.items():
            beta = [0] * len(ctx)
            for i, a in zip(idx, alpha):
                beta[i] = a
            terms[tuple(beta)] = c
        return Polynomial(ctx, terms)


@dataclass(frozen=True)
class PolySystem:
    """Equalities g_i(x) = 0 plus optional strict inequalities h_j(x) > 0."""

    context: VarContext
    equalities: tuple[Polynomial, ...] = ()
    inequalities: tuple[Polynomial, ...] = ()

    def __post_init__(self):
        eqs = tuple(self.equalities)
        ineqs = tuple(self.inequalities)
        object.__setattr__(self, "equalities", eqs)
        object.__setattr__(self, "inequalities", ineqs)
        for p in eqs + ineqs:
            if p.context != self.context:
                raise ContextMismatch("all polynomials of a system must share its context")

    @classmethod
    def from_strings(
        cls,
        names: Sequence[str],
        equalities: Iterable[str] = (),
        inequalities: Iterable[str] = (),
    ) -> "PolySystem":
        ctx = VarContext(tuple(names))
        return cls(
            ctx,
            tuple(parse_polynomial(s, ctx) for s in equalities),
            tuple(parse_polynomial(s, ctx) for s in inequalities),
        )

    @property
    def n(self) -> int:
        return len(self.context)

    @property
    def m(self) -> int:
        return len(self.equalities)

    def __str__(self) -> str:
        lines = ["vars: " + ", ".join(self.context.names)]
        lines += [f"poly: {p}" for p in self.equalities]
        lines += [f"ineq: {p}" for p in self.inequalities]
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# printing


def _format_coef(c: float) -> str:
    if c.is_integer() and abs(c) < 1e15:
        return str(int(c))
    return repr(c)


def format_polynomial(p: Polynomial) -> str:
    if p.is_zero():
        return "0"
    names = p.context.names
    parts = []
    for alpha, c in p.terms.items():
        factors = []
        for nm, a in zip(names, alpha):
            if a == 1:
                factors.append(nm)
            elif a > 1:
                factors.append(f"{nm}^{a}")
        mag = abs(c)
        if not factors:
            body = _format_coef(mag)
        elif mag == 1.0:
            body = "*".join(factors)
        else:
            body = _format_coef(mag) + "*" + "*".join(factors)
        sign = "-" if c < 0 else "+"
        if not parts:
            parts.append(body if sign == "+" else "-" + body)
        else:
            parts.append(f" {sign} {body}")
    return "".join(parts)


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*^()])
    """,
    re.VERBOSE,
)


def _tokenize(src: str):
    pos = 0
    toks = []
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ParseError(f"unexpected character {src[pos]!r}", pos, src)
        kind = m.lastgroup
        if kind != "ws":
            toks.append((kind, m.group(), pos))
        pos = m.end()
    toks.append(("end", "", len(src)))
    return toks


class _Parser:
    def __init__(self, src: str, ctx: VarContext):
        self.src = src
        self.ctx = ctx
        self.toks = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def fail(self, msg, pos=None):
        if pos is None:
            pos = self.peek()[2]
        raise ParseError(msg, pos, self.src)

    def parse(self) -> Polynomial:
        if self.peek()[0] == "end":
            self.fail("empty expression")
        p = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            if kind in ("num", "ident") or text == "(":
                self.fail(f"expected operator before {text!r} (use '*' for products)")
            self.fail(f"unexpected {text!r}")
        return p

    def expr(self) -> Polynomial:
        p = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self) -> Polynomial:
        p = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            p = p * self.unary()
        return p

    def unary(self) -> Polynomial:
        kind, text, _ = self.peek()
        if kind == "op" and text in ("+", "-"):
            self.take()
            p = self.unary()
            return -p if text == "-" else p
        return self.power()

    def power(self) -> Polynomial:
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            kind, text, pos = self.peek()
            if kind == "op" and text == "-":
                self.fail("negative exponent", pos)
            if kind != "num":
                self.fail("exponent must be a nonnegative integer literal", pos)
            if not text.isdigit():
                self.fail(f"non-integer exponent {text!r}", pos)
            self.take()
            return base ** int(text)
        return base

    def atom(self) -> Polynomial:
        kind, text, pos = self.take()
        if kind == "num":
            return Polynomial.constant(self.ctx, float(text))
        if kind == "ident":
            if text not in self.ctx:
                self.fail(f"unknown variable {text!r}", pos)
            return Polynomial.var(self.ctx, text)
        if kind == "op" and text == "(":
            p = self.expr()
            k2, t2, p2 = self.peek()
            if not (k2 == "op" and t2 == ")"):
                self.fail("expected ')'", p2)
            self.take()
            return p
        if kind == "end":
            self.fail("unexpected end of input", pos)
        self.fail(f"unexpected {text!r}", pos)


def parse_polynomial(src: str, ctx: VarContext) -> Polynomial:
    """Parse ``src`` into a canonical polynomial over ``ctx``.

    Terms are joined by ``+``/``-``; factors need an explicit ``*``; powers
    are ``base^k`` with ``k`` a nonnegative integer literal. Parentheses are
    expanded on the spot. Raises :class:`ParseError` with the offending
    character offset.
    """
    return _Parser(src, ctx).parse()


# ---------------------------------------------------------------------------
# ring operations and calculus


def _check_ctx(p: Polynomial, q: Polynomial):
    if p.context != q.context:
        raise ContextMismatch(f"contexts differ: {p.context.names} vs {q.context.names}")


def add(p: Polynomial, q: Polynomial) -> Polynomial:
    _check_ctx(p, q)
    terms = dict(p.terms)
    for a, c in q.terms.items():
        terms[a] = terms.get(a, 0.0) + c
    return Polynomial(p.context, terms)


def mul(p: Polynomial, q: Polynomial) -> Polynomial:
    _check_ctx(p, q)
    terms: dict[tuple[int, ...], float] = {}
    for a, c in p.terms.items():
        for b, d in q.terms.items():
            k = tuple(i + j for i, j in zip(a, b))
            terms[k] = terms.get(k, 0.0) + c * d
    return Polynomial(p.context, terms)


def scale(p: Polynomial, c: float) -> Polynomial:
    c = float(c)
    return Polynomial(p.context, {a: c * v for a, v in p.terms.items()})


def differentiate(p: Polynomial, var_index: int) -> Polynomial:
    if not 0 <= var_index < p.nvars:
        raise IndexError(f"variable index {var_index} out of range for {p.nvars} variables")
    terms = {}
    for a, c in p.terms.items():
        k = a[var_index]
        if k:
            b = list(a)
            b[var_index] = k - 1
            terms[tuple(b)] = c * k
    return Polynomial(p.context, terms)


def gradient(p: Polynomial) -> list[Polynomial]:
    return [differentiate(p, i) for i in range(p.nvars)]


def jacobian(sys: PolySystem) -> list[list[Polynomial]]:
    """m x n nested list, row i is the gradient of equality i."""
    if sys.m < 1:
        raise ValueError("jacobian needs at least one equality")
    return [gradient(g) for g in sys.equalities]


def hessian_stack(sys: PolySystem) -> list[list[list[Polynomial]]]:
    """n matrices H_k (m x n) with H_k[i][j] = d^2 g_i / dx_j dx_k."""
    J = jacobian(sys)
    return [[[differentiate(row[j], k) for j in range(sys.n)] for row in J] for k in range(sys.n)]


def sum_of_squares(sys: PolySystem) -> Polynomial:
    if sys.m < 1:
        raise ValueError("sum_of_squares needs at least one equality")
    h = Polynomial.zero(sys.context)
    for g in sys.equalities:
        h = h + g * g
    return h


def evaluate(p: Polynomial, x) -> float | np.ndarray:
    """Evaluate by summing terms; ``x`` is a point (n,) or a batch (N, n)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[-1] != p.nvars:
        raise ValueError(f"point has dimension {X.shape[-1]}, polynomial has {p.nvars} variables")
    out = np.zeros(X.shape[0])
    for alpha, c in p.terms.items():
        mono = np.full(X.shape[0], c)
        for i, a in enumerate(alpha):
            if a:
                mono = mono * X[:, i] ** a
        out = out + mono
    return float(out[0]) if single else out
