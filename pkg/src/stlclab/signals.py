"""Scalar control signals on [0, T] with the norms the drift hypotheses use.

Two representations are supported.  Piecewise polynomials on a uniform
partition carry exact Fraction coefficients in local cell coordinates, so
primitives, derivatives and L2-type energies are computed without any
resampling loss.  Trigonometric signals carry polynomial envelopes times
sin/cos terms (closed under differentiation, antidifferentiation and
polynomial windowing) and are evaluated in floats.

Negative-order quantities follow the iterated-primitive convention:
W^{-1,infty} is the sup of the primitive vanishing at 0, W^{-1,3} its L3
norm, and the squared H^{-1/4} norm of U is the double integral of
|s1-s2|^{-1/2} U(s1) U(s2), computed by closed-form cell-pair integrals
(never by sampling across the singularity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np


class SignalError(ValueError):
    pass


class SmoothnessError(SignalError):
    """The stored representation is not differentiable at the requested order."""


# ---------------------------------------------------------------------------
# piecewise polynomial representation


@dataclass(frozen=True)
class PiecewisePolySignal:
    """Polynomial per cell in the local variable tau = t - cell_start."""

    horizon: Fraction
    coeffs: Tuple[Tuple[Fraction, ...], ...]  # one coefficient tuple per cell

    def __post_init__(self):
        if self.horizon <= 0:
            raise SignalError("horizon must be positive")
        if not self.coeffs:
            raise SignalError("need at least one cell")

    # -- structure ---------------------------------------------------------

    @property
    def n_cells(self) -> int:
        return len(self.coeffs)

    @property
    def cell_width(self) -> Fraction:
        return self.horizon / self.n_cells

    def degree(self) -> int:
        return max((len(c) - 1 for c in self.coeffs), default=0)

    # -- evaluation ---------------------------------------------------------

    def _float_data(self):
        deg = self.degree()
        mat = np.zeros((self.n_cells, deg + 1))
        for i, c in enumerate(self.coeffs):
            for k, v in enumerate(c):
                mat[i, k] = float(v)
        return mat, float(self.cell_width), float(self.horizon)

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        mat, hc, tf = self._float_data()
        idx = np.clip((t / hc).astype(int), 0, self.n_cells - 1)
        tau = t - idx * hc
        out = np.zeros_like(t, dtype=float)
        for k in range(mat.shape[1] - 1, -1, -1):
            out = out * tau + mat[idx, k]
        return out

    def eval_exact(self, t: Fraction) -> Fraction:
        t = Fraction(t)
        hc = self.cell_width
        idx = min(int(t / hc), self.n_cells - 1)
        tau = t - idx * hc
        acc = Fraction(0)
        for c in reversed(self.coeffs[idx]):
            acc = acc * tau + c
        return acc

    # -- calculus (exact) ----------------------------------------------------

    def derivative(self) -> "PiecewisePolySignal":
        cells = []
        for c in self.coeffs:
            cells.append(tuple(c[k] * k for k in range(1, len(c))) or (Fraction(0),))
        return PiecewisePolySignal(self.horizon, tuple(cells))

    def primitive(self) -> "PiecewisePolySignal":
        """Antiderivative vanishing at t = 0, exact cell by cell."""
        hc = self.cell_width
        cells = []
        running = Fraction(0)
        for c in self.coeffs:
            anti = [running] + [c[k] / (k + 1) for k in range(len(c))]
            cells.append(tuple(anti))
            running = sum(a * hc**k for k, a in enumerate(anti))
        return PiecewisePolySignal(self.horizon, tuple(cells))

    def integral(self) -> Fraction:
        hc = self.cell_width
        total = Fraction(0)
        for c in self.coeffs:
            total += sum(v * hc ** (k + 1) / (k + 1) for k, v in enumerate(c))
        return total

    def squared(self) -> "PiecewisePolySignal":
        cells = []
        for c in self.coeffs:
            d = len(c)
            out = [Fraction(0)] * (2 * d - 1)
            for i, a in enumerate(c):
                if a == 0:
                    continue
                for j, b in enumerate(c):
                    out[i + j] += a * b
            cells.append(tuple(out))
        return PiecewisePolySignal(self.horizon, tuple(cells))

    def scaled(self, s) -> "PiecewisePolySignal":
        s = Fraction(s)
        return PiecewisePolySignal(self.horizon, tuple(tuple(v * s for v in c) for c in self.coeffs))

    def plus(self, other: "PiecewisePolySignal") -> "PiecewisePolySignal":
        if other.horizon != self.horizon or other.n_cells != self.n_cells:
            raise SignalError("incompatible partitions")
        cells = []
        for a, b in zip(self.coeffs, other.coeffs):
            d = max(len(a), len(b))
            cells.append(tuple((a[k] if k < len(a) else 0) + (b[k] if k < len(b) else 0) for k in range(d)))
        return PiecewisePolySignal(self.horizon, tuple(cells))

    def times_global_poly(self, coeffs: Sequence) -> "PiecewisePolySignal":
        """Multiply by a polynomial in the global variable t, exactly."""
        g = [Fraction(v) for v in coeffs]
        hc = self.cell_width
        cells = []
        for i, c in enumerate(self.coeffs):
            t0 = hc * i
            # shift g(t) = g(t0 + tau) to local coordinates
            local = [Fraction(0)] * len(g)
            for k, gv in enumerate(g):
                if gv == 0:
                    continue
                for j in range(k + 1):
                    local[j] += gv * math.comb(k, j) * t0 ** (k - j)
            out = [Fraction(0)] * (len(c) + len(local) - 1)
            for a_i, a in enumerate(c):
                if a == 0:
                    continue
                for b_i, b in enumerate(local):
                    out[a_i + b_i] += a * b
            cells.append(tuple(out))
        return PiecewisePolySignal(self.horizon, tuple(cells))

    def reversed(self) -> "PiecewisePolySignal":
        """The signal t -> u(T - t), exact."""
        hc = self.cell_width
        cells = []
        for c in reversed(self.coeffs):
            out = [Fraction(0)] * len(c)
            for k, v in enumerate(c):
                if v == 0:
                    continue
                for j in range(k + 1):
                    out[j] += v * math.comb(k, j) * hc ** (k - j) * (-1) ** j
            cells.append(tuple(out))
        return PiecewisePolySignal(self.horizon, tuple(cells))

    # -- regularity metadata ---------------------------------------------------

    def vanishing_order(self, max_order: int = 12) -> int:
        """Number of derivatives (value included) that vanish exactly at t=0."""
        first = self.coeffs[0]
        order = 0
        while order <= max_order:
            c = first[order] if order < len(first) else Fraction(0)
            if c != 0:
                break
            order += 1
        return order

    def continuity_order(self) -> int:
        """Largest r with derivatives 0..r continuous at every interior knot."""
        hc = self.cell_width
        max_deg = self.degree()
        sig = self
        for r in range(max_deg + 2):
            for i in range(self.n_cells - 1):
                left = sum(c * hc**k for k, c in enumerate(sig.coeffs[i]))
                right = sig.coeffs[i + 1][0] if sig.coeffs[i + 1] else Fraction(0)
                if left != right:
                    return r - 1
            sig = sig.derivative()
        return max_deg + 1

    # -- norms -------------------------------------------------------------------

    def sup_norm(self) -> float:
        mat, hc, _ = self._float_data()
        best = 0.0
        for row in mat:
            cand = [0.0, hc]
            if len(row) > 2:
                deriv = np.polynomial.polynomial.polyder(row)
                if np.any(deriv != 0):
                    roots = np.polynomial.polynomial.polyroots(deriv)
                    cand += [r.real for r in np.atleast_1d(roots) if abs(r.imag) < 1e-9 and -1e-12 <= r.real <= hc + 1e-12]
            vals = np.polynomial.polynomial.polyval(np.array(cand), row)
            best = max(best, float(np.max(np.abs(vals))))
        return best

    def l2_norm_sq(self) -> float:
        return float(self.squared().integral())

    def to_piecewise(self, n_cells: int = 64, degree: int = 6) -> "PiecewisePolySignal":
        return self


# ---------------------------------------------------------------------------
# trigonometric representation: poly(t) + sum_j [p_j(t) sin(w_j t) + q_j(t) cos(w_j t)]


@dataclass(frozen=True)
class TrigSignal:
    horizon: Fraction
    poly: Tuple[float, ...]
    terms: Tuple[Tuple[float, Tuple[float, ...], Tuple[float, ...]], ...]  # (omega, sin env, cos env)

    def evaluate(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        out = np.polynomial.polynomial.polyval(t, np.array(self.poly if self.poly else [0.0]))
        for omega, p, q in self.terms:
            if p:
                out = out + np.polynomial.polynomial.polyval(t, np.array(p)) * np.sin(omega * t)
            if q:
                out = out + np.polynomial.polynomial.polyval(t, np.array(q)) * np.cos(omega * t)
        return out

    def derivative(self) -> "TrigSignal":
        dp = tuple(np.polynomial.polynomial.polyder(np.array(self.poly)).tolist()) if len(self.poly) > 1 else (0.0,)
        terms = []
        for omega, p, q in self.terms:
            p_arr, q_arr = np.array(p if p else [0.0]), np.array(q if q else [0.0])
            dp_env = np.polynomial.polynomial.polyder(p_arr) if len(p_arr) > 1 else np.array([0.0])
            dq_env = np.polynomial.polynomial.polyder(q_arr) if len(q_arr) > 1 else np.array([0.0])
            sin_env = np.polynomial.polynomial.polyadd(dp_env, -omega * q_arr)
            cos_env = np.polynomial.polynomial.polyadd(dq_env, omega * p_arr)
            terms.append((omega, tuple(sin_env.tolist()), tuple(cos_env.tolist())))
        return TrigSignal(self.horizon, dp, tuple(terms))

    def primitive(self) -> "TrigSignal":
        poly_arr = np.array(self.poly if self.poly else [0.0])
        int_poly = np.polynomial.polynomial.polyint(poly_arr)
        terms = []
        extra_const = 0.0
        for omega, p, q in self.terms:
            sin_env, cos_env = _integrate_trig_term(np.array(p if p else [0.0]), np.array(q if q else [0.0]), omega)
            terms.append((omega, tuple(sin_env.tolist()), tuple(cos_env.tolist())))
            extra_const += cos_env[0] if len(cos_env) else 0.0
        # enforce primitive(0) = 0
        int_poly = int_poly.copy()
        int_poly[0] -= extra_const
        return TrigSignal(self.horizon, tuple(int_poly.tolist()), tuple(terms))

    def times_global_poly(self, coeffs: Sequence) -> "TrigSignal":
        g = np.array([float(v) for v in coeffs])
        poly = np.polynomial.polynomial.polymul(np.array(self.poly if self.poly else [0.0]), g)
        terms = []
        for omega, p, q in self.terms:
            terms.append(
                (
                    omega,
                    tuple(np.polynomial.polynomial.polymul(np.array(p if p else [0.0]), g).tolist()),
                    tuple(np.polynomial.polynomial.polymul(np.array(q if q else [0.0]), g).tolist()),
                )
            )
        return TrigSignal(self.horizon, tuple(poly.tolist()), tuple(terms))

    def scaled(self, s) -> "TrigSignal":
        s = float(s)
        return TrigSignal(
            self.horizon,
            tuple(s * v for v in self.poly),
            tuple((w, tuple(s * v for v in p), tuple(s * v for v in q)) for w, p, q in self.terms),
        )

    def vanishing_order(self, max_order: int = 12) -> int:
        scale = max(self.sup_norm(), 1e-300)
        sig, order = self, 0
        while order <= max_order:
            if abs(float(sig.evaluate(0.0))) > 1e-10 * scale:
                break
            sig = sig.derivative()
            order += 1
            scale = max(scale, 1.0)
        return order

    def sup_norm(self, samples: int = 4001) -> float:
        ts = np.linspace(0.0, float(self.horizon), samples)
        return float(np.max(np.abs(self.evaluate(ts))))

    def l2_norm_sq(self) -> float:
        return _gl_integral(lambda t: self.evaluate(t) ** 2, 0.0, float(self.horizon))

    def to_piecewise(self, n_cells: int = 64, degree: int = 6) -> PiecewisePolySignal:
        """Chebyshev interpolation per cell; exact-representation handoff."""
        hc = float(self.horizon) / n_cells
        nodes = 0.5 * hc * (1.0 + np.cos(np.pi * (2 * np.arange(degree + 1) + 1) / (2 * (degree + 1))))
        cells = []
        for i in range(n_cells):
            ts = i * hc + nodes
            vals = self.evaluate(ts)
            # local power-basis coefficients from the Chebyshev sample
            v = np.vander(nodes, degree + 1, increasing=True)
            local = np.linalg.solve(v, vals)
            cells.append(tuple(Fraction(float(c)) for c in local))
        return PiecewisePolySignal(Fraction(self.horizon), tuple(cells))


def _integrate_trig_term(p: np.ndarray, q: np.ndarray, omega: float) -> Tuple[np.ndarray, np.ndarray]:
    """Antiderivative of p(t) sin(wt) + q(t) cos(wt), as (sin env, cos env).

    int p sin = -(p/w) cos + (1/w) int p' cos and int q cos = (q/w) sin
    - (1/w) int q' sin, so the remainder is again of the same shape with the
    envelope degree reduced by one.
    """
    if np.all(p == 0) and np.all(q == 0):
        return np.array([0.0]), np.array([0.0])
    sin_env = q / omega
    cos_env = -p / omega
    dp = np.polynomial.polynomial.polyder(p) if len(p) > 1 else np.array([0.0])
    dq = np.polynomial.polynomial.polyder(q) if len(q) > 1 else np.array([0.0])
    if np.any(dp != 0) or np.any(dq != 0):
        s2, c2 = _integrate_trig_term(-dq / omega, dp / omega, omega)
        sin_env = np.polynomial.polynomial.polyadd(sin_env, s2)
        cos_env = np.polynomial.polynomial.polyadd(cos_env, c2)
    return sin_env, cos_env


ControlSignal = Union[PiecewisePolySignal, TrigSignal]


# ---------------------------------------------------------------------------
# constructors


def const_signal(value, horizon, n_cells: int = 1) -> PiecewisePolySignal:
    return PiecewisePolySignal(Fraction(horizon), tuple((Fraction(value),) for _ in range(n_cells)))


def poly_signal(coeffs: Sequence, horizon, n_cells: int = 1) -> PiecewisePolySignal:
    """Signal equal to the global polynomial sum c_k t^k on [0, horizon]."""
    base = const_signal(1, horizon, n_cells)
    return base.times_global_poly(coeffs)


def sin_signal(amplitude: float, omega: float, horizon) -> TrigSignal:
    return TrigSignal(Fraction(horizon), (0.0,), ((float(omega), (float(amplitude),), ()),))


def trig_sum_signal(horizon, sin_amps: Sequence[float], cos_amps: Sequence[float], base_omega: float) -> TrigSignal:
    terms = [
        (base_omega * j, (float(a),), (float(b),))
        for j, (a, b) in enumerate(zip(sin_amps, cos_amps), start=1)
    ]
    return TrigSignal(Fraction(horizon), (0.0,), tuple(terms))


def parse_signal_literal(text: str, horizon, n_cells: int = 16) -> ControlSignal:
    """Scenario-file literals: const(c) | sin(a, omega) | poly[c0,c1,...]."""
    text = text.strip()
    if text.startswith("const(") and text.endswith(")"):
        return const_signal(Fraction(text[6:-1].strip()), horizon, n_cells)
    if text.startswith("sin(") and text.endswith(")"):
        parts = [p.strip() for p in text[4:-1].split(",")]
        if len(parts) != 2:
            raise SignalError(f"sin literal needs two arguments: {text!r}")
        return sin_signal(float(Fraction(parts[0])), float(Fraction(parts[1])), horizon)
    if text.startswith("poly[") and text.endswith("]"):
        coeffs = [Fraction(p.strip()) for p in text[5:-1].split(",") if p.strip()]
        if not coeffs:
            raise SignalError("poly literal needs coefficients")
        return poly_signal(coeffs, horizon, n_cells)
    raise SignalError(f"unknown signal literal {text!r}")


# ---------------------------------------------------------------------------
# spec operations


def iterated_primitive(u: ControlSignal, k: int) -> ControlSignal:
    if k < 0:
        raise ValueError("k must be >= 0")
    out = u
    for _ in range(k):
        out = out.primitive()
    return out


def sobolev_sup_norm(u: ControlSignal, m: int) -> float:
    """W^{m,infty} norm; m = -1 means sup of the primitive vanishing at 0."""
    if m == -1:
        return iterated_primitive(u, 1).sup_norm()
    if m < -1:
        raise ValueError("only m >= -1 is defined")
    if isinstance(u, PiecewisePolySignal) and m >= 1 and u.continuity_order() < m - 1:
        raise SmoothnessError(f"representation is not W^{m},infty: derivatives jump at the knots")
    best = 0.0
    sig = u
    for _ in range(m + 1):
        best = max(best, sig.sup_norm())
        sig = sig.derivative()
    return best


def hk_energy(u: ControlSignal, k: int) -> float:
    """Integral of u_k^2 over [0, T]; exact for piecewise polynomials."""
    if k < 1:
        raise ValueError("k must be >= 1")
    uk = iterated_primitive(u, k)
    return uk.l2_norm_sq()


def w_neg13_norm(u: ControlSignal, panels_per_cell: int = 4) -> float:
    """W^{-1,3} norm: L3 norm of the primitive vanishing at 0."""
    big_u = iterated_primitive(u, 1)
    horizon = float(u.horizon)
    val = _gl_integral(lambda t: np.abs(big_u.evaluate(t)) ** 3, 0.0, horizon,
                       panels=max(16, getattr(u, "n_cells", 1) * panels_per_cell))
    return float(val ** (1.0 / 3.0))


def frac_neg_quarter_norm_sq(big_u: ControlSignal, n_cells: int = 64, degree: int = 6) -> float:
    """|U|^2 in H^{-1/4}: double integral of |s1-s2|^{-1/2} U(s1) U(s2)."""
    pw = big_u.to_piecewise(n_cells=n_cells, degree=degree)
    cells = signal_cells(pw)
    return singular_quadratic_form(cells, cells)


def h_minus_54_norm_sq(u: ControlSignal, **kw) -> float:
    """|u|^2 in H^{-5/4} via the primitive's H^{-1/4} energy."""
    return frac_neg_quarter_norm_sq(iterated_primitive(u, 1), **kw)


# ---------------------------------------------------------------------------
# closed-form weakly singular cell-pair integrals
#
# Everything reduces to int_0^h s^M (c+s)^(q+1/2) ds (and the c-s variant).
# Two branches keep the evaluation well conditioned: a geometric series in
# h/c for separated cells, and the sqrt substitution when c is comparable
# to the cell width.


@dataclass(frozen=True)
class Cell:
    start: float
    width: float
    coeffs: Tuple[float, ...]  # local polynomial, tau in [0, width]


def signal_cells(u: PiecewisePolySignal) -> List[Cell]:
    hc = float(u.cell_width)
    return [
        Cell(start=i * hc, width=hc, coeffs=tuple(float(v) for v in c))
        for i, c in enumerate(u.coeffs)
    ]


def reflected_cells(cells: Sequence[Cell], pivot: float = 2.0) -> List[Cell]:
    """Cells of t' -> U(pivot - t') on [pivot - T, pivot]."""
    out = []
    for c in cells:
        out.append(
            Cell(
                start=pivot - c.start - c.width,
                width=c.width,
                coeffs=_flip_local(c.coeffs, c.width),
            )
        )
    return out


def _flip_local(coeffs: Sequence[float], h: float) -> Tuple[float, ...]:
    """Coefficients of p(h - tau) given those of p(tau)."""
    n = len(coeffs)
    out = [0.0] * n
    for k, c in enumerate(coeffs):
        if c == 0.0:
            continue
        for j in range(k + 1):
            out[j] += c * math.comb(k, j) * h ** (k - j) * (-1.0) ** j
    return tuple(out)


@lru_cache(maxsize=None)
def _beta_even(n: int) -> float:
    # int_0^1 (1 - x^2)^n dx
    val = 1.0
    for i in range(1, n + 1):
        val *= 2.0 * i / (2.0 * i + 1.0)
    return val


def _binom_half(q: int, r: int) -> float:
    # binomial(q + 1/2, r)
    val = 1.0
    for i in range(r):
        val *= (q + 0.5 - i) / (i + 1)
    return val


def _hplus(m: int, q2: float, c: float, h: float) -> float:
    """int_0^h s^m (c + s)^(q2/2) ds for half-integer power q2/2, c >= 0."""
    if h <= 0.0:
        return 0.0
    if c >= 2.0 * h:
        # series in (s/c); ratio <= 1/2
        total, r = 0.0, 0
        pref = c ** (q2 / 2.0)
        coeff = 1.0
        while r < 200:
            term = pref * coeff * h ** (m + r + 1) / ((m + r + 1) * c**r)
            total += term
            if abs(term) < 1e-17 * abs(total) + 1e-300:
                break
            coeff *= (q2 / 2.0 - r) / (r + 1)
            r += 1
        return total
    # sqrt substitution: w = sqrt(c + s)
    w1, w2 = math.sqrt(c), math.sqrt(c + h)
    total = 0.0
    for j in range(m + 1):
        p = 2 * j + q2 + 2
        total += math.comb(m, j) * (-c) ** (m - j) * (w2**p - w1**p) / (p / 2.0)
    return total


def _hminus(m: int, q2: float, c: float, h: float) -> float:
    """int_0^h s^m (c - s)^(q2/2) ds, requires c >= h."""
    if h <= 0.0:
        return 0.0
    if c >= 2.0 * h:
        total, r = 0.0, 0
        pref = c ** (q2 / 2.0)
        coeff = 1.0
        while r < 200:
            term = pref * coeff * (-1.0) ** r * h ** (m + r + 1) / ((m + r + 1) * c**r)
            total += term
            if abs(term) < 1e-17 * abs(total) + 1e-300:
                break
            coeff *= (q2 / 2.0 - r) / (r + 1)
            r += 1
        return total
    w1, w2 = math.sqrt(max(c - h, 0.0)), math.sqrt(c)
    total = 0.0
    for j in range(m + 1):
        p = 2 * j + q2 + 2
        total += math.comb(m, j) * c ** (m - j) * (-1.0) ** j * (w2**p - w1**p) / (p / 2.0)
    return total


def _pair_identical(p: Sequence[float], q: Sequence[float], h: float) -> float:
    total = 0.0
    for m, pm in enumerate(p):
        if pm == 0.0:
            continue
        for n, qn in enumerate(q):
            if qn == 0.0:
                continue
            # tau < sigma half: inner integral is 2 beta_n sigma^(n+1/2)
            i1 = 2.0 * _beta_even(n) * h ** (m + n + 1.5) / (m + n + 1.5)
            # tau > sigma half
            i2 = 0.0
            for k in range(n + 1):
                i2 += 2.0 * math.comb(n, k) / (2 * k + 1) * _hminus(m + n - k, 2 * k + 1, h, h)
            total += pm * qn * (i1 + i2)
    return total


def _pair_separated(p: Sequence[float], h1: float, q: Sequence[float], h2: float, gap: float) -> float:
    """s-cell right of t-cell: kernel (gap + sigma + mu)^{-1/2}, mu = flip of tau."""
    q_flip = _flip_local(q, h2)
    total = 0.0
    for n, qn in enumerate(q_flip):
        if qn == 0.0:
            continue
        for k in range(n + 1):
            w_nk = 2.0 * math.comb(n, k) * (-1.0) ** (n - k) / (2 * k + 1)
            for m, pm in enumerate(p):
                if pm == 0.0:
                    continue
                # (gap+sigma)^(n-k) expanded in sigma
                acc = 0.0
                for i in range(n - k + 1):
                    acc += math.comb(n - k, i) * gap ** (n - k - i) * _hplus(m + i, 2 * k + 1, gap + h2, h1)
                acc -= _hplus(m, 2 * n + 1, gap, h1)
                total += pm * qn * w_nk * acc
    return total


def singular_quadratic_form(
    cells_a: Sequence[Cell],
    cells_b: Sequence[Cell],
    weight: Optional[Callable[[float, float], float]] = None,
) -> float:
    """Sum over cell pairs of int int P(s) Q(t) |s-t|^{-1/2}, optionally weighted.

    ``weight`` is evaluated at the cell-center pair and multiplies that
    pair's exact integral (used by the weakly-singular-operator harness).
    """
    total = 0.0
    for ca in cells_a:
        a0, a1 = ca.start, ca.start + ca.width
        for cb in cells_b:
            b0, b1 = cb.start, cb.start + cb.width
            if abs(a0 - b0) < 1e-16 and abs(ca.width - cb.width) < 1e-16:
                val = _pair_identical(ca.coeffs, cb.coeffs, ca.width)
            elif a0 >= b1 - 1e-16:
                val = _pair_separated(ca.coeffs, ca.width, cb.coeffs, cb.width, max(a0 - b1, 0.0))
            elif b0 >= a1 - 1e-16:
                val = _pair_separated(cb.coeffs, cb.width, ca.coeffs, ca.width, max(b0 - a1, 0.0))
            else:
                raise SignalError("cell families overlap without being identical")
            if weight is not None:
                val *= weight(a0 + 0.5 * ca.width, b0 + 0.5 * cb.width)
            total += val
    return total


# ---------------------------------------------------------------------------
# quadrature helper


def _gl_integral(f: Callable[[np.ndarray], np.ndarray], a: float, b: float, panels: int = 16, order: int = 16) -> float:
    nodes, weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, panels + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
        total += half * float(np.dot(weights, f(mid + half * nodes)))
    return total
