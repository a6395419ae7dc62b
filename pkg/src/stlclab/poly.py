"""Exact sparse multivariate polynomial arithmetic over the rationals.

A polynomial in n variables is a dict mapping exponent tuples (one int per
variable) to Fraction coefficients.  Zero coefficients are never stored, so
dict equality is polynomial equality.  The zero polynomial is the empty dict.

Example (2 variables x1, x2):  x1^2*x2 + 3  ->  {(2, 1): Fraction(1), (0, 0): Fraction(3)}
"""

from __future__ import annotations

from fractions import Fraction
from typing import Dict, Sequence, Tuple

Exponent = Tuple[int, ...]
Poly = Dict[Exponent, Fraction]


def zero() -> Poly:
    return {}


def const(n_vars: int, value) -> Poly:
    c = Fraction(value)
    if c == 0:
        return {}
    return {(0,) * n_vars: c}


def var(n_vars: int, idx: int) -> Poly:
    """Polynomial for the single variable with 0-based index ``idx``."""
    if not 0 <= idx < n_vars:
        raise ValueError(f"variable index {idx} out of range for {n_vars} variables")
    e = [0] * n_vars
    e[idx] = 1
    return {tuple(e): Fraction(1)}


def normalize(p: Poly) -> Poly:
    """Drop zero-coefficient monomials (canonical form)."""
    return {m: c for m, c in p.items() if c != 0}


def add(a: Poly, b: Poly) -> Poly:
    if not a:
        return dict(b)
    if not b:
        return dict(a)
    out = dict(a)
    for m, c in b.items():
        s = out.get(m, 0) + c
        if s:
            out[m] = s
        else:
            out.pop(m, None)
    return out


def neg(a: Poly) -> Poly:
    return {m: -c for m, c in a.items()}


def sub(a: Poly, b: Poly) -> Poly:
    return add(a, neg(b))


def scale(a: Poly, s) -> Poly:
    s = Fraction(s)
    if s == 0:
        return {}
    return {m: c * s for m, c in a.items()}


def mul(a: Poly, b: Poly) -> Poly:
    if not a or not b:
        return {}
    out: Poly = {}
    for ma, ca in a.items():
        for mb, cb in b.items():
            m = tuple(x + y for x, y in zip(ma, mb))
            s = out.get(m, 0) + ca * cb
            if s:
                out[m] = s
            else:
                out.pop(m, None)
    return out


def diff(a: Poly, idx: int) -> Poly:
    """Partial derivative with respect to variable ``idx`` (0-based)."""
    out: Poly = {}
    for m, c in a.items():
        e = m[idx]
        if e == 0:
            continue
        me = list(m)
        me[idx] = e - 1
        out[tuple(me)] = c * e
    return out


def degree(a: Poly) -> int:
    """Total degree; -1 for the zero polynomial."""
    if not a:
        return -1
    return max(sum(m) for m in a)


def evaluate(a: Poly, x: Sequence) -> Fraction:
    """Evaluate at a point; exact when the coordinates are Fractions/ints."""
    total = Fraction(0) if all(isinstance(v, (int, Fraction)) for v in x) else 0.0
    for m, c in a.items():
        term = c
        for e, v in zip(m, x):
            if e:
                term = term * v**e
        total = total + term
    return total


def substitute_linear(a: Poly, mat: Sequence[Sequence[Fraction]]) -> Poly:
    """Substitute x_i = sum_j mat[i][j] * y_j into the polynomial.

    ``mat`` is n x n with rational entries; the result is a polynomial in the
    y variables with exact coefficients.
    """
    n = len(mat)
    forms = [
        normalize({tuple(1 if k == j else 0 for k in range(n)): Fraction(mat[i][j]) for j in range(n)})
        for i in range(n)
    ]
    # cache powers of each linear form as they are needed
    powers: Dict[Tuple[int, int], Poly] = {}

    def form_pow(i: int, e: int) -> Poly:
        if e == 0:
            return const(n, 1)
        key = (i, e)
        if key not in powers:
            powers[key] = mul(form_pow(i, e - 1), forms[i])
        return powers[key]

    out: Poly = {}
    for m, c in a.items():
        term = const(n, c)
        for i, e in enumerate(m):
            if e:
                term = mul(term, form_pow(i, e))
        out = add(out, term)
    return out


def to_string(a: Poly, names: Sequence[str] | None = None) -> str:
    """Human-readable form, monomials in graded-lexicographic order."""
    if not a:
        return "0"
    n = len(next(iter(a)))
    if names is None:
        names = [f"x{i + 1}" for i in range(n)]
    parts = []
    for m in sorted(a, key=lambda m: (sum(m), m), reverse=True):
        c = a[m]
        factors = [f"{names[i]}^{e}" if e > 1 else names[i] for i, e in enumerate(m) if e]
        body = "*".join(factors)
        if not body:
            parts.append(str(c))
        elif c == 1:
            parts.append(body)
        elif c == -1:
            parts.append(f"-{body}")
        else:
            parts.append(f"{c}*{body}")
    s = " + ".join(parts).replace("+ -", "- ")
    return s
