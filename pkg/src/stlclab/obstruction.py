"""Controllability filtrations, bracket tests and steering controls.

Everything rank-related runs on exact rationals: the controllable space
S1(0), the depth-bounded S2(0) enumeration, the first bad bracket index and
the drift direction.  Floats appear only in the Gramian steering synthesis
and its re-simulation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from . import rational
from .rational import Mat, Vec
from .vectorfield import (
    LinearPair,
    PolyVectorField,
    ad_iterate,
    compile_field,
    lie_bracket,
    linearize,
)

DEFAULT_DEPTH = 6


class ObstructionError(RuntimeError):
    pass


class DriftDirectionError(ObstructionError):
    """The candidate bad bracket projects to zero off the controllable space."""


class SteeringDivergenceError(ObstructionError):
    def __init__(self, message: str, history: List[float]):
        super().__init__(message)
        self.history = history


class SingularGramianError(ObstructionError):
    def __init__(self, message: str, condition: float):
        super().__init__(message)
        self.condition = condition


# ---------------------------------------------------------------------------
# filtration data


@dataclass
class S2Witness:
    expr: str
    value: Tuple[Fraction, ...]
    in_s1: bool


@dataclass
class BracketFiltration:
    dim: int
    s1_basis: List[Vec]
    d: int
    projector_p: Mat
    projector_perp: Mat
    depth: int
    s2_witnesses: List[S2Witness] = field(default_factory=list)
    s2_in_s1: Optional[bool] = None
    bad_index: Optional[int] = None
    drift_dir: Optional[Tuple[Fraction, ...]] = None

    def project(self, x: np.ndarray) -> np.ndarray:
        return rational.mat_float(self.projector_p) @ np.asarray(x, dtype=float)

    def project_perp(self, x: np.ndarray) -> np.ndarray:
        return rational.mat_float(self.projector_perp) @ np.asarray(x, dtype=float)

    def drift_dir_float(self) -> np.ndarray:
        if self.drift_dir is None:
            raise ObstructionError("no drift direction on this filtration")
        return np.array([float(v) for v in self.drift_dir])


@dataclass
class ParityLevel:
    k: int
    dim_odd: int   # dim S_{2k+1}(0) within depth
    dim_even: int  # dim S_{2k+2}(0) within depth
    equal: bool


@dataclass
class ParityReport:
    depth: int
    levels: List[ParityLevel]

    @property
    def violations(self) -> List[int]:
        return [lv.k for lv in self.levels if not lv.equal]


@dataclass
class SteeringControl:
    times: np.ndarray
    values: np.ndarray
    residual: float
    residual_history: List[float] = field(default_factory=list)
    u_callable: Optional[Callable[[float], float]] = None


# ---------------------------------------------------------------------------
# linear-order objects


def kalman_matrix(pair: LinearPair) -> Mat:
    """Columns b, Ab, ..., A^(n-1) b as rational column vectors."""
    n = pair.dim
    a = [list(row) for row in pair.a]
    cols = [list(pair.b)]
    for _ in range(n - 1):
        cols.append(rational.mat_vec(a, cols[-1]))
    return rational.transpose(cols)  # n x n with the iterates as columns


def kalman_rank(pair: LinearPair) -> int:
    cols = rational.transpose(kalman_matrix(pair))
    return rational.rank(cols)


def s1_vectors(f0: PolyVectorField, f1: PolyVectorField) -> List[Vec]:
    """ad^j(f1)(0) for j = 0..n-1 (these equal (-A)^j b)."""
    n = f0.dim
    vals = []
    g = f1
    for j in range(n):
        vals.append(list(g.value_at_zero()))
        if j < n - 1:
            g = lie_bracket(f0, g)
    return vals


def s1_basis(f0: PolyVectorField, f1: PolyVectorField) -> List[Vec]:
    """Basis of S1(0) drawn from the ad-iterate values, in depth order.

    Cross-checked against the Kalman column span; the two must agree exactly.
    """
    pair = linearize(f0, f1)
    vals = s1_vectors(f0, f1)
    idx = rational.independent_subset(vals)
    basis = [vals[i] for i in idx]
    kal_cols = rational.transpose(kalman_matrix(pair))
    if rational.rank(kal_cols) != len(basis) or any(not rational.in_span(kal_cols, v) for v in basis):
        raise ObstructionError("internal check failed: S1 span differs from Kalman span")
    return basis


def make_filtration(f0: PolyVectorField, f1: PolyVectorField, depth: int = DEFAULT_DEPTH) -> BracketFiltration:
    basis = s1_basis(f0, f1)
    n = f0.dim
    p, p_perp = rational.projector_onto(basis, n)
    return BracketFiltration(
        dim=n, s1_basis=basis, d=len(basis), projector_p=p, projector_perp=p_perp, depth=depth
    )


# ---------------------------------------------------------------------------
# bracket enumeration (depth-bounded)


@dataclass
class BracketWord:
    expr: str
    length: int
    f1_count: int
    fld: PolyVectorField
    value: Tuple[Fraction, ...]


def _field_key(f: PolyVectorField):
    return tuple(tuple(sorted(c.items())) for c in f.components)


def enumerate_brackets(
    f0: PolyVectorField,
    f1: PolyVectorField,
    depth: int,
    max_f1: Optional[int] = None,
    max_words: int = 20000,
) -> List[BracketWord]:
    """All distinct iterated brackets of length <= depth (one per unordered pair).

    Only one orientation of each pair is kept; the other is its negative and
    spans the same directions.  Identically-zero fields are dropped.
    """
    if depth < 1:
        return []
    by_length: List[List[BracketWord]] = [[] for _ in range(depth + 1)]
    seen = set()

    def register(expr: str, length: int, count: int, fld: PolyVectorField) -> None:
        if fld.is_zero():
            return
        key = _field_key(fld)
        if key in seen:
            return
        seen.add(key)
        by_length[length].append(BracketWord(expr, length, count, fld, fld.value_at_zero()))

    register("f0", 1, 0, f0)
    register("f1", 1, 1, f1)
    total = 2
    for length in range(2, depth + 1):
        for l1 in range(1, length // 2 + 1):
            l2 = length - l1
            for i, w1 in enumerate(by_length[l1]):
                starts = i + 1 if l1 == l2 else 0
                for w2 in by_length[l2][starts:]:
                    count = w1.f1_count + w2.f1_count
                    if max_f1 is not None and count > max_f1:
                        continue
                    register(f"[{w1.expr}, {w2.expr}]", length, count, lie_bracket(w1.fld, w2.fld))
                    total += 1
                    if total > max_words:
                        raise ObstructionError(f"bracket enumeration exceeded {max_words} words at depth {depth}")
    return [w for bucket in by_length for w in bucket]


def s2_span(f0: PolyVectorField, f1: PolyVectorField, depth: int = DEFAULT_DEPTH) -> BracketFiltration:
    """Depth-bounded S2(0) with witnesses; verdict is only valid up to ``depth``."""
    if depth < 2:
        raise ValueError("depth must be >= 2")
    filt = make_filtration(f0, f1, depth)
    words = enumerate_brackets(f0, f1, depth, max_f1=2)
    two_f1 = [w for w in words if w.f1_count == 2 and any(v != 0 for v in w.value)]
    witnesses = [S2Witness(w.expr, w.value, rational.in_span(filt.s1_basis, list(w.value))) for w in two_f1]
    filt.s2_witnesses = witnesses
    filt.s2_in_s1 = all(w.in_s1 for w in witnesses)
    return filt


def first_bad_index(f0: PolyVectorField, f1: PolyVectorField) -> Optional[int]:
    """Smallest k <= d with [ad^(k-1) f1, ad^k f1](0) outside S1(0)."""
    basis = s1_basis(f0, f1)
    d = len(basis)
    ads = [f1]
    for _ in range(d):
        ads.append(lie_bracket(f0, ads[-1]))
    for j in range(1, d + 1):
        v = lie_bracket(ads[j - 1], ads[j]).value_at_zero()
        if not rational.in_span(basis, list(v)):
            return j
    return None


def drift_direction(f0: PolyVectorField, f1: PolyVectorField, k: int) -> Tuple[Fraction, ...]:
    """d_k = -P_perp [ad^(k-1) f1, ad^k f1](0); exact and nonzero."""
    filt = make_filtration(f0, f1)
    v = lie_bracket(ad_iterate(f0, f1, k - 1), ad_iterate(f0, f1, k)).value_at_zero()
    proj = rational.mat_vec(filt.projector_perp, list(v))
    d = tuple(-x for x in proj)
    if all(x == 0 for x in d):
        raise DriftDirectionError(f"bracket at k={k} projects to zero off S1(0)")
    return d


def attach_drift_data(filt: BracketFiltration, f0: PolyVectorField, f1: PolyVectorField) -> BracketFiltration:
    """Fill bad_index / drift_dir on an existing filtration (no-op if none)."""
    k = first_bad_index(f0, f1)
    filt.bad_index = k
    if k is not None:
        filt.drift_dir = drift_direction(f0, f1, k)
    return filt


def analyze_system(f0: PolyVectorField, f1: PolyVectorField, depth: int = DEFAULT_DEPTH) -> BracketFiltration:
    """Full filtration: S1 basis, S2 witnesses, bad index and drift direction."""
    return attach_drift_data(s2_span(f0, f1, depth), f0, f1)


def lie_rank_check(f0: PolyVectorField, f1: PolyVectorField, depth: int = DEFAULT_DEPTH) -> Tuple[bool, int]:
    """Dimension at 0 of all brackets up to ``depth``; one-sided answer."""
    words = enumerate_brackets(f0, f1, depth)
    vectors = [list(w.value) for w in words if any(v != 0 for v in w.value)]
    dim = rational.rank(vectors) if vectors else 0
    return dim == f0.dim, dim


def parity_check(
    f0: PolyVectorField,
    f1: PolyVectorField,
    depth: int = 5,
    kmax: int = 1,
) -> ParityReport:
    """Compare dim S_{2k+1}(0) and dim S_{2k+2}(0) within bracket depth."""
    words = enumerate_brackets(f0, f1, depth)

    def dim_upto(m: int) -> int:
        vecs = [list(w.value) for w in words if w.f1_count <= m and any(v != 0 for v in w.value)]
        return rational.rank(vecs) if vecs else 0

    levels = []
    for k in range(kmax + 1):
        dim_odd = dim_upto(2 * k + 1)
        dim_even = dim_upto(2 * k + 2)
        levels.append(ParityLevel(k=k, dim_odd=dim_odd, dim_even=dim_even, equal=dim_odd == dim_even))
    return ParityReport(depth=depth, levels=levels)


# ---------------------------------------------------------------------------
# steering


def _is_nilpotent(a: Mat, n: int) -> bool:
    power = [row[:] for row in a]
    for _ in range(n - 1):
        if all(x == 0 for row in power for x in row):
            return True
        power = rational.mat_mul(power, a)
    return all(x == 0 for row in power for x in row)


def _gramian_exact_nilpotent(pair: LinearPair, horizon: Fraction) -> np.ndarray:
    """W_T for nilpotent A via exact polynomial integration."""
    n = pair.dim
    a = [list(row) for row in pair.a]
    iterates = [list(pair.b)]
    for _ in range(n - 1):
        iterates.append(rational.mat_vec(a, iterates[-1]))
    w = [[Fraction(0)] * n for _ in range(n)]
    for j in range(n):
        for k in range(n):
            scale = horizon ** (j + k + 1) / (
                Fraction(math.factorial(j)) * math.factorial(k) * (j + k + 1)
            )
            for r in range(n):
                for c in range(n):
                    w[r][c] += iterates[j][r] * iterates[k][c] * scale
    return rational.mat_float(w)


def _gramian_quadrature(a: np.ndarray, b: np.ndarray, horizon: float, order: int = 96) -> np.ndarray:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    s = 0.5 * horizon * (nodes + 1.0)
    w = 0.5 * horizon * weights
    g = np.zeros((len(b), len(b)))
    for si, wi in zip(s, w):
        m = scipy.linalg.expm(a * (horizon - si)) @ b
        g += wi * np.outer(m, m)
    return g


def _expm_ab(a: np.ndarray, tau: float, b: np.ndarray) -> np.ndarray:
    return scipy.linalg.expm(a * tau) @ b


def _rk4_linear(a: np.ndarray, b: np.ndarray, u: Callable[[float], float], x0: np.ndarray, horizon: float, steps: int):
    h = horizon / steps
    x = np.array(x0, dtype=float)
    times = [0.0]
    states = [x.copy()]
    for i in range(steps):
        t = i * h
        k1 = a @ x + u(t) * b
        k2 = a @ (x + 0.5 * h * k1) + u(t + 0.5 * h) * b
        k3 = a @ (x + 0.5 * h * k2) + u(t + 0.5 * h) * b
        k4 = a @ (x + h * k3) + u(t + h) * b
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        times.append((i + 1) * h)
        states.append(x.copy())
    return np.array(times), np.array(states)


def gramian_steer(
    pair: LinearPair,
    x0: Sequence[float],
    horizon: float,
    steps: int = 2000,
) -> SteeringControl:
    """Minimum-energy control u(t) = -b^T e^(A^T (T-t)) W_T^{-1} e^(AT) x0.

    The Gramian is integrated exactly when A is nilpotent, otherwise by
    Gauss-Legendre quadrature on the matrix exponential.  The reported
    residual |y(T)| comes from re-simulating the closed-form control.
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    n = pair.dim
    a_f = pair.a_float()
    b_f = pair.b_float()
    x0 = np.asarray(x0, dtype=float)
    nilpotent = _is_nilpotent([list(r) for r in pair.a], n)
    if nilpotent:
        w = _gramian_exact_nilpotent(pair, Fraction(horizon))
    else:
        w = _gramian_quadrature(a_f, b_f, horizon)
    rank_w = rational.float_rank(w)
    if rank_w < n:
        svals = np.linalg.svd(w, compute_uv=False)
        cond = float("inf") if svals[-1] == 0 else float(svals[0] / svals[-1])
        raise SingularGramianError(
            f"controllability Gramian is singular (rank {rank_w} < {n}); "
            f"Kalman rank is {kalman_rank(pair)}, singular values {svals}",
            cond,
        )
    m_vec = np.linalg.solve(w, scipy.linalg.expm(a_f * horizon) @ x0)

    def u(t: float) -> float:
        return float(-np.dot(_expm_ab(a_f, horizon - t, b_f), m_vec))

    times, states = _rk4_linear(a_f, b_f, u, x0, horizon, steps)
    residual = float(np.linalg.norm(states[-1]))
    return SteeringControl(
        times=times,
        values=np.array([u(t) for t in times]),
        residual=residual,
        residual_history=[residual],
        u_callable=u,
    )


def nonlinear_steer(
    f0: PolyVectorField,
    f1: PolyVectorField,
    x0: Sequence[float],
    horizon: float,
    iters: int = 10,
    steps: int = 2000,
    tol: float = 1e-10,
) -> SteeringControl:
    """Picard iteration on the Gramian steering with the remainder frozen.

    Each pass solves the linear steering problem with the nonlinear remainder
    of the previous trajectory treated as a known source, then re-simulates
    the true dynamics.  Divergence (three consecutive growing residuals)
    raises with the residual history attached.
    """
    pair = linearize(f0, f1)
    n = pair.dim
    if kalman_rank(pair) < n:
        raise ObstructionError("Kalman rank deficient: linear test does not apply")
    a_f, b_f = pair.a_float(), pair.b_float()
    eval0, eval1 = compile_field(f0), compile_field(f1)
    x0 = np.asarray(x0, dtype=float)
    horizon = float(horizon)
    nilpotent = _is_nilpotent([list(r) for r in pair.a], n)
    w = _gramian_exact_nilpotent(pair, Fraction(horizon)) if nilpotent else _gramian_quadrature(a_f, b_f, horizon)
    if rational.float_rank(w) < n:
        raise SingularGramianError("controllability Gramian is singular", float("inf"))

    h = horizon / steps
    grid = np.linspace(0.0, horizon, steps + 1)
    # e^{A (T - t_i)} precomputed on the grid for the frozen-source integral
    expm_grid = np.stack([scipy.linalg.expm(a_f * (horizon - t)) for t in grid])

    def rk4_nonlinear(u_grid: np.ndarray) -> np.ndarray:
        # u_grid holds u at t_i and midpoints: length 2*steps + 1
        x = x0.copy()
        path = [x.copy()]
        for i in range(steps):
            t0v, tmv, t1v = u_grid[2 * i], u_grid[2 * i + 1], u_grid[2 * i + 2]

            def f(xv, uv):
                return eval0(xv[None, :])[0] + uv * eval1(xv[None, :])[0]

            k1 = f(x, t0v)
            k2 = f(x + 0.5 * h * k1, tmv)
            k3 = f(x + 0.5 * h * k2, tmv)
            k4 = f(x + h * k3, t1v)
            x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            path.append(x.copy())
        return np.array(path)

    stage_times = np.empty(2 * steps + 1)
    stage_times[0::2] = grid
    stage_times[1::2] = 0.5 * (grid[:-1] + grid[1:])

    u_stage = np.zeros(2 * steps + 1)
    path = rk4_nonlinear(u_stage)
    residual_history: List[float] = []
    best: Optional[Tuple[float, np.ndarray, np.ndarray]] = None
    grow = 0
    for _ in range(iters):
        # frozen remainder r(t) = f0(x) - A x + u (f1(x) - b) on the grid
        u_nodes = u_stage[0::2]
        r = eval0(path) - path @ a_f.T + u_nodes[:, None] * (eval1(path) - b_f[None, :])
        integrand = np.einsum("tij,tj->ti", expm_grid, r)
        weights = np.full(steps + 1, h)
        weights[0] = weights[-1] = 0.5 * h
        xi = -expm_grid[0] @ x0 - weights @ integrand
        m_vec = np.linalg.solve(w, -xi)  # so that u = -b^T e^{A^T(T-t)} m

        def u(t: float, m=m_vec) -> float:
            return float(-np.dot(_expm_ab(a_f, horizon - t, b_f), m))

        u_stage = np.array([u(t) for t in stage_times])
        path = rk4_nonlinear(u_stage)
        residual = float(np.linalg.norm(path[-1]))
        residual_history.append(residual)
        if best is None or residual < best[0]:
            best = (residual, u_stage.copy(), path.copy())
        if len(residual_history) >= 2 and residual > residual_history[-2]:
            grow += 1
            if grow >= 3:
                raise SteeringDivergenceError(
                    f"steering residual grew for 3 consecutive iterations: {residual_history}",
                    residual_history,
                )
        else:
            grow = 0
        if residual <= tol:
            break
    assert best is not None
    return SteeringControl(
        times=grid,
        values=best[1][0::2],
        residual=best[0],
        residual_history=residual_history,
    )


# ---------------------------------------------------------------------------
# reporting


def format_filtration(filt: BracketFiltration) -> str:
    lines = [f"S1(0): dimension {filt.d} of {filt.dim}"]
    for v in filt.s1_basis:
        lines.append("  basis " + _fmt_vec(v))
    lines.append(f"S2(0) within depth {filt.depth}: " + ("S2 = S1" if filt.s2_in_s1 else "S2 not contained in S1"
                                                          if filt.s2_in_s1 is not None else "not computed"))
    for w in filt.s2_witnesses:
        tag = "in S1" if w.in_s1 else "NOT in S1"
        lines.append(f"  witness {w.expr}(0) = {_fmt_vec(w.value)}  [{tag}]")
    if filt.bad_index is None:
        lines.append("bad index: none (all tested bracket pairs stay in S1)")
    else:
        lines.append(f"bad index k = {filt.bad_index}")
        lines.append(f"drift direction d_k = {_fmt_vec(filt.drift_dir)}")
    return "\n".join(lines)


def _fmt_vec(v) -> str:
    return "(" + ", ".join(str(x) for x in v) + ")"
