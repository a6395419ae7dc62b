"""Polynomial vector fields on R^n with exact Lie-bracket algebra.

The bracket convention is fixed throughout the package as

    [f, g](x) = Dg(x) f(x) - Df(x) g(x),

which makes the drift directions computed downstream point the way the
simulated trajectories actually move (see ``obstruction.drift_direction``).
All coefficients are Fractions; floats only enter through the compiled
evaluators used by the integrators.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, Sequence, Tuple

import numpy as np

from . import poly
from .poly import Poly


class VectorFieldError(ValueError):
    pass


class NotAnEquilibriumError(VectorFieldError):
    """Raised when a construction requires f0(0) = 0 and it does not hold."""


@dataclass(frozen=True)
class PolyVectorField:
    """A vector field whose components are exact rational polynomials."""

    dim: int
    components: Tuple[Poly, ...]

    def __post_init__(self):
        if self.dim <= 0:
            raise VectorFieldError("dimension must be positive")
        if len(self.components) != self.dim:
            raise VectorFieldError("component count must equal dim")
        comps = tuple(poly.normalize(c) for c in self.components)
        for c in comps:
            for m in c:
                if len(m) != self.dim:
                    raise VectorFieldError("monomial arity does not match dim")
        object.__setattr__(self, "components", comps)

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def from_strings(exprs: Sequence[str], dim: int | None = None) -> "PolyVectorField":
        dim = len(exprs) if dim is None else dim
        return PolyVectorField(dim, tuple(parse_polynomial(e, dim) for e in exprs))

    @staticmethod
    def constant(vec: Sequence) -> "PolyVectorField":
        n = len(vec)
        return PolyVectorField(n, tuple(poly.const(n, v) for v in vec))

    @staticmethod
    def unit(dim: int, idx: int) -> "PolyVectorField":
        """The constant coordinate field e_idx (0-based)."""
        return PolyVectorField.constant([1 if i == idx else 0 for i in range(dim)])

    @staticmethod
    def zero(dim: int) -> "PolyVectorField":
        return PolyVectorField(dim, tuple(poly.zero() for _ in range(dim)))

    # -- algebra ---------------------------------------------------------------

    def __add__(self, other: "PolyVectorField") -> "PolyVectorField":
        _check_dims(self, other)
        return PolyVectorField(self.dim, tuple(poly.add(a, b) for a, b in zip(self.components, other.components)))

    def __sub__(self, other: "PolyVectorField") -> "PolyVectorField":
        _check_dims(self, other)
        return PolyVectorField(self.dim, tuple(poly.sub(a, b) for a, b in zip(self.components, other.components)))

    def __neg__(self) -> "PolyVectorField":
        return PolyVectorField(self.dim, tuple(poly.neg(c) for c in self.components))

    def scale(self, s) -> "PolyVectorField":
        return PolyVectorField(self.dim, tuple(poly.scale(c, s) for c in self.components))

    def is_zero(self) -> bool:
        return all(not c for c in self.components)

    def evaluate(self, x: Sequence) -> list:
        return [poly.evaluate(c, x) for c in self.components]

    def value_at_zero(self) -> Tuple[Fraction, ...]:
        origin = [Fraction(0)] * self.dim
        return tuple(poly.evaluate(c, origin) for c in self.components)

    def jacobian(self) -> List[List[Poly]]:
        return [[poly.diff(c, j) for j in range(self.dim)] for c in self.components]

    def jacobian_at_zero(self) -> List[List[Fraction]]:
        """Exact Jacobian matrix at the origin (linear-term coefficients)."""
        out = []
        for c in self.components:
            row = []
            for j in range(self.dim):
                e = tuple(1 if k == j else 0 for k in range(self.dim))
                row.append(c.get(e, Fraction(0)))
            out.append(row)
        return out

    def max_degree(self) -> int:
        return max((poly.degree(c) for c in self.components), default=-1)

    def conjugate(self, q: Sequence[Sequence[Fraction]]) -> "PolyVectorField":
        """Field in y-coordinates after the linear change x = Q y.

        Components are g_i(y) = sum_j Q^T[i][j] f_j(Q y); exact rationals.
        """
        n = self.dim
        subbed = [poly.substitute_linear(c, q) for c in self.components]
        comps = []
        for i in range(n):
            acc = poly.zero()
            for j in range(n):
                acc = poly.add(acc, poly.scale(subbed[j], Fraction(q[j][i])))
            comps.append(acc)
        return PolyVectorField(n, tuple(comps))

    def __str__(self) -> str:
        return "(" + ", ".join(poly.to_string(c) for c in self.components) + ")"


@dataclass(frozen=True)
class LinearPair:
    """Linearization (A, b) of a control-affine system at the origin."""

    a: Tuple[Tuple[Fraction, ...], ...]
    b: Tuple[Fraction, ...]

    @property
    def dim(self) -> int:
        return len(self.b)

    def a_float(self) -> np.ndarray:
        return np.array([[float(v) for v in row] for row in self.a])

    def b_float(self) -> np.ndarray:
        return np.array([float(v) for v in self.b])


def _check_dims(f: PolyVectorField, g: PolyVectorField) -> None:
    if f.dim != g.dim:
        raise VectorFieldError(f"dimension mismatch: {f.dim} vs {g.dim}")


def lie_bracket(f: PolyVectorField, g: PolyVectorField) -> PolyVectorField:
    """[f, g] = Dg . f - Df . g, exact."""
    _check_dims(f, g)
    n = f.dim
    comps = []
    for i in range(n):
        acc = poly.zero()
        for j in range(n):
            acc = poly.add(acc, poly.mul(poly.diff(g.components[i], j), f.components[j]))
            acc = poly.sub(acc, poly.mul(poly.diff(f.components[i], j), g.components[j]))
        comps.append(acc)
    return PolyVectorField(n, tuple(comps))


def ad_iterate(f0: PolyVectorField, f1: PolyVectorField, k: int) -> PolyVectorField:
    """Left-iterated bracket: ad^0 = f1, ad^k = [f0, ad^(k-1)]."""
    if k < 0:
        raise ValueError("k must be >= 0")
    _check_dims(f0, f1)
    g = f1
    for _ in range(k):
        g = lie_bracket(f0, g)
    return g


def linearize(f0: PolyVectorField, f1: PolyVectorField) -> LinearPair:
    """A = Jacobian of f0 at 0, b = f1(0); requires f0(0) = 0."""
    _check_dims(f0, f1)
    if any(v != 0 for v in f0.value_at_zero()):
        raise NotAnEquilibriumError("f0(0) != 0: the origin is not an equilibrium")
    a = tuple(tuple(row) for row in f0.jacobian_at_zero())
    b = f1.value_at_zero()
    return LinearPair(a=a, b=b)


# -- fast float evaluation ----------------------------------------------------


def compile_field(f: PolyVectorField) -> Callable[[np.ndarray], np.ndarray]:
    """Compile to a batched evaluator: (B, n) states -> (B, n) field values."""
    n = f.dim
    comp_data = []
    for c in f.components:
        if c:
            exps = np.array(list(c.keys()), dtype=np.int64)
            coeffs = np.array([float(v) for v in c.values()])
        else:
            exps = np.zeros((0, n), dtype=np.int64)
            coeffs = np.zeros(0)
        comp_data.append((exps, coeffs))

    def evaluate(x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((x.shape[0], n))
        with np.errstate(over="ignore", invalid="ignore"):
            for i, (exps, coeffs) in enumerate(comp_data):
                if len(coeffs) == 0:
                    continue
                monos = np.prod(x[:, None, :] ** exps[None, :, :], axis=2)
                out[:, i] = monos @ coeffs
        return out

    return evaluate


# -- text parser ---------------------------------------------------------------
#
# Grammar for one component (variables x1..xn, rational literals, + - * / ^):
#   expr   := ['-'] term (('+'|'-') term)*
#   term   := factor (('*'|'/') factor)*      division only by constants
#   factor := base ['^' integer]
#   base   := integer | variable | '(' expr ')'

_TOKEN_RE = re.compile(r"\s*(x\d+|\d+|\^|\+|-|\*|/|\(|\))")


class ParseError(VectorFieldError):
    pass


def _tokenize(text: str) -> List[str]:
    pos, tokens = 0, []
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r} in {text!r}")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, tokens: List[str], dim: int):
        self.tokens = tokens
        self.pos = 0
        self.dim = dim

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of expression")
        self.pos += 1
        return tok

    def parse_expr(self) -> Poly:
        sign = 1
        if self.peek() == "-":
            self.take()
            sign = -1
        p = poly.scale(self.parse_term(), sign)
        while self.peek() in ("+", "-"):
            op = self.take()
            q = self.parse_term()
            p = poly.add(p, q) if op == "+" else poly.sub(p, q)
        return p

    def parse_term(self) -> Poly:
        p = self.parse_factor()
        while self.peek() in ("*", "/"):
            op = self.take()
            q = self.parse_factor()
            if op == "*":
                p = poly.mul(p, q)
            else:
                if poly.degree(q) > 0:
                    raise ParseError("division by a non-constant polynomial")
                c = poly.evaluate(q, [Fraction(0)] * self.dim)
                if c == 0:
                    raise ParseError("division by zero")
                p = poly.scale(p, Fraction(1, 1) / c)
        return p

    def parse_factor(self) -> Poly:
        p = self.parse_base()
        if self.peek() == "^":
            self.take()
            tok = self.take()
            if not tok.isdigit():
                raise ParseError(f"exponent must be a nonnegative integer, got {tok!r}")
            e = int(tok)
            out = poly.const(self.dim, 1)
            for _ in range(e):
                out = poly.mul(out, p)
            p = out
        return p

    def parse_base(self) -> Poly:
        tok = self.take()
        if tok == "(":
            p = self.parse_expr()
            if self.take() != ")":
                raise ParseError("missing closing parenthesis")
            return p
        if tok.isdigit():
            return poly.const(self.dim, int(tok))
        if tok.startswith("x"):
            idx = int(tok[1:])
            if not 1 <= idx <= self.dim:
                raise ParseError(f"variable {tok} out of range for dimension {self.dim}")
            return poly.var(self.dim, idx - 1)
        raise ParseError(f"unexpected token {tok!r}")


def parse_polynomial(text: str, dim: int) -> Poly:
    parser = _Parser(_tokenize(text), dim)
    p = parser.parse_expr()
    if parser.peek() is not None:
        raise ParseError(f"trailing input at token {parser.peek()!r}")
    return p


def parse_vector_field(text: str, dim: int) -> PolyVectorField:
    """Parse comma-separated component expressions into a field."""
    parts = [s.strip() for s in text.split(",")]
    if len(parts) != dim:
        raise ParseError(f"expected {dim} components, got {len(parts)}")
    return PolyVectorField.from_strings(parts, dim)
