"""Exact linear algebra over the rationals (small dense matrices).

Rank decisions on bracket data must be exact; these routines run Gaussian
elimination on Fractions so no threshold ever enters.  Matrices are lists of
lists of Fractions, vectors are lists of Fractions.
"""

from __future__ import annotations

from fractions import Fraction
from typing import List, Sequence

import numpy as np

Mat = List[List[Fraction]]
Vec = List[Fraction]


def to_fraction_vec(v: Sequence) -> Vec:
    return [Fraction(x) for x in v]


def mat_identity(n: int) -> Mat:
    return [[Fraction(1 if i == j else 0) for j in range(n)] for i in range(n)]


def mat_mul(a: Mat, b: Mat) -> Mat:
    return [[sum((ra[k] * b[k][j] for k in range(len(b))), Fraction(0)) for j in range(len(b[0]))] for ra in a]


def mat_vec(a: Mat, v: Sequence) -> Vec:
    return [sum((row[k] * Fraction(v[k]) for k in range(len(v))), Fraction(0)) for row in a]


def transpose(a: Mat) -> Mat:
    return [list(col) for col in zip(*a)]


def mat_float(a: Mat) -> np.ndarray:
    return np.array([[float(x) for x in row] for row in a])


def rref(rows: Sequence[Sequence[Fraction]]) -> tuple[Mat, List[int]]:
    """Reduced row echelon form; returns (rref rows, pivot column indices)."""
    m = [list(map(Fraction, row)) for row in rows]
    if not m:
        return [], []
    ncols = len(m[0])
    pivots: List[int] = []
    r = 0
    for c in range(ncols):
        pivot = next((i for i in range(r, len(m)) if m[i][c] != 0), None)
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        inv = Fraction(1) / m[r][c]
        m[r] = [x * inv for x in m[r]]
        for i in range(len(m)):
            if i != r and m[i][c] != 0:
                f = m[i][c]
                m[i] = [x - f * y for x, y in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == len(m):
            break
    return m, pivots


def rank(rows: Sequence[Sequence[Fraction]]) -> int:
    return len(rref(rows)[1])


def in_span(basis: Sequence[Sequence[Fraction]], v: Sequence[Fraction]) -> bool:
    """Exact membership of v in the row span of ``basis``."""
    base = [list(row) for row in basis]
    return rank(base + [list(v)]) == rank(base)


def independent_subset(vectors: Sequence[Sequence[Fraction]]) -> List[int]:
    """Indices of a maximal independent subset, scanning in order."""
    chosen: List[List[Fraction]] = []
    idx: List[int] = []
    r = 0
    for i, v in enumerate(vectors):
        if rank(chosen + [list(v)]) > r:
            chosen.append(list(v))
            idx.append(i)
            r += 1
    return idx


def solve(a: Mat, b: Vec) -> Vec:
    """Solve a square exact system by Gauss-Jordan; raises if singular."""
    n = len(a)
    aug = [list(map(Fraction, a[i])) + [Fraction(b[i])] for i in range(n)]
    reduced, pivots = rref(aug)
    if pivots != list(range(n)):
        raise ZeroDivisionError("singular matrix")
    return [reduced[i][n] for i in range(n)]


def inverse(a: Mat) -> Mat:
    n = len(a)
    aug = [list(map(Fraction, a[i])) + list(mat_identity(n)[i]) for i in range(n)]
    reduced, pivots = rref(aug)
    if len(pivots) < n or pivots[:n] != list(range(n)):
        raise ZeroDivisionError("singular matrix")
    return [row[n:] for row in reduced[:n]]


def projector_onto(basis: Sequence[Sequence[Fraction]], n: int) -> tuple[Mat, Mat]:
    """Orthogonal projectors (P, I-P) onto span(basis), exact.

    ``basis`` holds the spanning vectors as rows; the standard Euclidean
    inner product is used.  P = B^T (B B^T)^{-1} B with B the basis matrix.
    """
    if not basis:
        p = [[Fraction(0)] * n for _ in range(n)]
        return p, mat_identity(n)
    b = [list(map(Fraction, row)) for row in basis]
    bt = transpose(b)
    gram = mat_mul(b, bt)
    gram_inv = inverse(gram)
    p = mat_mul(mat_mul(bt, gram_inv), b)
    identity = mat_identity(n)
    p_perp = [[identity[i][j] - p[i][j] for j in range(n)] for i in range(n)]
    return p, p_perp


def float_rank(mat: np.ndarray, rel_tol: float = 1e-10) -> int:
    """Float rank with threshold rel_tol * largest singular value."""
    if mat.size == 0:
        return 0
    svals = np.linalg.svd(mat, compute_uv=False)
    if svals.size == 0 or svals[0] == 0.0:
        return 0
    return int(np.sum(svals > rel_tol * svals[0]))
