"""Trajectory integration and the drift / invariant-manifold experiments.

The integrator is classical RK4 on a uniform grid with the control evaluated
exactly at the stage times.  Ensembles are integrated in one batched sweep
(states stacked along the leading axis), which is what makes thousand-sample
drift studies cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from . import obstruction, rational, signals
from .obstruction import BracketFiltration
from .signals import ControlSignal, PiecewisePolySignal, TrigSignal
from .vectorfield import PolyVectorField, compile_field


class SimulationError(RuntimeError):
    pass


class BlowUpError(SimulationError):
    def __init__(self, time: float):
        super().__init__(f"state became nonfinite at t = {time:.6g}")
        self.time = time


class GraphCaseError(SimulationError):
    """fit_invariant_graph called outside the S2 = S1 case without override."""


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray  # (len(times), n)
    control: ControlSignal
    step: float

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]


# ---------------------------------------------------------------------------
# integration


def _grid(horizon: float, step: float) -> Tuple[np.ndarray, np.ndarray, float, int]:
    nsteps = max(1, int(round(horizon / step)))
    h = horizon / nsteps
    times = np.linspace(0.0, horizon, nsteps + 1)
    stage = np.empty(2 * nsteps + 1)
    stage[0::2] = times
    stage[1::2] = 0.5 * (times[:-1] + times[1:])
    return times, stage, h, nsteps


def integrate_ensemble(
    f0: PolyVectorField,
    f1: PolyVectorField,
    controls: Sequence[ControlSignal],
    x0: Sequence[float],
    step: float,
    horizon: Optional[float] = None,
) -> Tuple[np.ndarray, np.ndarray, float]:
    """Batched RK4; returns (times, states with shape (B, T, n), actual step)."""
    if horizon is None:
        horizon = float(controls[0].horizon)
    times, stage, h, nsteps = _grid(horizon, step)
    u_all = np.stack([np.asarray(u.evaluate(stage), dtype=float) for u in controls])
    ev0, ev1 = compile_field(f0), compile_field(f1)
    b = len(controls)
    x = np.tile(np.asarray(x0, dtype=float), (b, 1))
    out = np.empty((b, nsteps + 1, f0.dim))
    out[:, 0] = x

    def rhs(xv, uv):
        return ev0(xv) + uv[:, None] * ev1(xv)

    for i in range(nsteps):
        u0, um, u1 = u_all[:, 2 * i], u_all[:, 2 * i + 1], u_all[:, 2 * i + 2]
        k1 = rhs(x, u0)
        k2 = rhs(x + 0.5 * h * k1, um)
        k3 = rhs(x + 0.5 * h * k2, um)
        k4 = rhs(x + h * k3, u1)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise BlowUpError(times[i + 1])
        out[:, i + 1] = x
    return times, out, h


def integrate_affine(
    f0: PolyVectorField,
    f1: PolyVectorField,
    u: ControlSignal,
    x0: Sequence[float],
    step: float,
    horizon: Optional[float] = None,
) -> TrajectoryRecord:
    """Single-trajectory RK4 for x' = f0(x) + u f1(x)."""
    if step <= 0:
        raise ValueError("step must be positive")
    times, states, h = integrate_ensemble(f0, f1, [u], x0, step, horizon)
    return TrajectoryRecord(times=times, states=states[0], control=u, step=h)


# ---------------------------------------------------------------------------
# control ensembles


@dataclass(frozen=True)
class EnsembleSpec:
    count: int
    amplitude: float
    horizon: float
    norm: str = "sup"          # "sup" | "W1inf" | "L2"
    vanishing: int = 0          # derivatives (value included) forced to 0 at t=0
    families: Tuple[str, ...] = ("poly", "trig")
    cells: int = 6
    degree: int = 5
    modes: int = 3


def _measure(u: ControlSignal, norm: str) -> float:
    if norm == "sup":
        return signals.sobolev_sup_norm(u, 0)
    if norm == "W1inf":
        return signals.sobolev_sup_norm(u, 1)
    if norm == "L2":
        return math.sqrt(u.l2_norm_sq())
    raise ValueError(f"unknown norm {norm!r}")


def _hermite_cell(h: Fraction, left, right) -> Tuple[Fraction, ...]:
    """Quintic matching (value, d1, d2) at both cell ends; exact."""
    v0, d10, d20 = left
    v1, d11, d21 = right
    c0, c1, c2 = v0, d10, d20 / 2
    rhs = [
        v1 - (c0 + c1 * h + c2 * h**2),
        d11 - (c1 + 2 * c2 * h),
        d21 - 2 * c2,
    ]
    mat = [
        [h**3, h**4, h**5],
        [3 * h**2, 4 * h**3, 5 * h**4],
        [6 * h, 12 * h**2, 20 * h**3],
    ]
    c3, c4, c5 = rational.solve(mat, rhs)
    return (c0, c1, c2, c3, c4, c5)


def _snap(x: float, denom: int = 4096) -> Fraction:
    return Fraction(round(x * denom), denom)


def _random_smooth_piecewise(rng, spec: EnsembleSpec) -> PiecewisePolySignal:
    """C^2 piecewise quintic from random knot data, exact coefficients."""
    horizon = Fraction(spec.horizon)
    n = spec.cells
    h = horizon / n
    inv_t = 1.0 / float(horizon)
    knots = []
    for i in range(n + 1):
        knots.append(
            (
                _snap(rng.normal()),
                _snap(rng.normal() * inv_t),
                _snap(rng.normal() * inv_t * inv_t),
            )
        )
    if spec.vanishing >= 1:
        v, d1, d2 = knots[0]
        knots[0] = (
            Fraction(0),
            Fraction(0) if spec.vanishing >= 2 else d1,
            Fraction(0) if spec.vanishing >= 3 else d2,
        )
    cells = tuple(_hermite_cell(h, knots[i], knots[i + 1]) for i in range(n))
    return PiecewisePolySignal(horizon, cells)


def _random_trig(rng, spec: EnsembleSpec) -> TrigSignal:
    base = 2.0 * math.pi / spec.horizon
    sin_amps = rng.normal(size=spec.modes)
    cos_amps = rng.normal(size=spec.modes)
    u = signals.trig_sum_signal(spec.horizon, sin_amps, cos_amps, base)
    if spec.vanishing >= 1:
        # window by (t/T)^vanishing: keeps the representation closed and
        # zeroes the first `vanishing` derivatives exactly
        coeffs = [0.0] * spec.vanishing + [spec.horizon ** (-spec.vanishing)]
        u = u.times_global_poly(coeffs)
    return u


def sample_controls(spec: EnsembleSpec, rng: np.random.Generator) -> List[ControlSignal]:
    out: List[ControlSignal] = []
    fams = spec.families
    for i in range(spec.count):
        fam = fams[i % len(fams)]
        u = _random_smooth_piecewise(rng, spec) if fam == "poly" else _random_trig(rng, spec)
        size = _measure(u, spec.norm)
        if size == 0.0:
            u = signals.const_signal(0, spec.horizon) if fam == "poly" else u
            out.append(u)
            continue
        target = spec.amplitude * rng.uniform(0.3, 1.0)
        factor = target / size
        out.append(u.scaled(_snap(factor, 1 << 20)) if isinstance(u, PiecewisePolySignal) else u.scaled(factor))
    return out


# ---------------------------------------------------------------------------
# invariant-graph fit


@dataclass
class QuadraticGraphFit:
    s1_basis: np.ndarray    # (d, n) orthonormal rows
    perp_basis: np.ndarray  # (n-d, n) orthonormal rows
    coeffs: np.ndarray      # (n-d, d, d) symmetric quadratic forms
    rms_residual: float
    max_residual: float
    residual_by_amplitude: List[Tuple[float, float, float]]  # (amplitude, rms, rms/target)
    residual_vanishes: bool

    def predict_perp(self, states: np.ndarray) -> np.ndarray:
        """Graph value G(P x) as a vector in R^n, batched over rows."""
        x = np.atleast_2d(np.asarray(states, dtype=float))
        p = x @ self.s1_basis.T
        vals = np.einsum("bi,rij,bj->br", p, self.coeffs, p)
        return vals @ self.perp_basis

    def state_form_along(self, direction: Sequence[float]) -> np.ndarray:
        """n x n matrix Q with <G(Px), dir> = x^T Q x."""
        w = self.perp_basis @ np.asarray(direction, dtype=float)
        c = np.einsum("r,rij->ij", w, self.coeffs)
        return self.s1_basis.T @ c @ self.s1_basis


def zero_graph_fit(filt: BracketFiltration) -> QuadraticGraphFit:
    s1, perp = _orthobases(filt)
    d, nperp = s1.shape[0], perp.shape[0]
    return QuadraticGraphFit(s1, perp, np.zeros((nperp, d, d)), 0.0, 0.0, [], True)


def _orthobases(filt: BracketFiltration) -> Tuple[np.ndarray, np.ndarray]:
    basis = np.array([[float(v) for v in row] for row in filt.s1_basis])
    q, _ = np.linalg.qr(basis.T)
    s1 = q[:, : filt.d].T
    perp = scipy.linalg.null_space(basis).T if filt.d < filt.dim else np.zeros((0, filt.dim))
    return s1, perp


def fit_invariant_graph(
    f0: PolyVectorField,
    f1: PolyVectorField,
    controls: Optional[Sequence[ControlSignal]] = None,
    *,
    filtration: Optional[BracketFiltration] = None,
    amplitudes: Sequence[float] = (0.1, 0.05, 0.025),
    count_per_amplitude: int = 10,
    horizon: float = 0.5,
    step: float = 1e-3,
    subsample: int = 5,
    depth: int = 4,
    force: bool = False,
    seed: int = 0,
) -> QuadraticGraphFit:
    """Least-squares fit of P_perp x against quadratic monomials in P x.

    Constant and linear parts are identically zero by construction (the
    regression only sees quadratic monomials).  In the drift case the
    residual does not vanish with the control amplitude; that is reported
    via ``residual_vanishes`` and requires ``force=True`` to fit at all.
    """
    if filtration is None:
        filtration = obstruction.s2_span(f0, f1, depth)
    if filtration.s2_in_s1 is False and not force:
        raise GraphCaseError("S2(0) not contained in S1(0) within depth; pass force=True to fit anyway")
    s1, perp = _orthobases(filtration)
    d, nperp = s1.shape[0], perp.shape[0]
    if nperp == 0:
        return QuadraticGraphFit(s1, perp, np.zeros((0, d, d)), 0.0, 0.0, [], True)

    rng = np.random.default_rng(seed)
    groups: List[Tuple[float, List[ControlSignal]]] = []
    if controls is not None:
        groups.append((float("nan"), list(controls)))
    else:
        for amp in amplitudes:
            spec = EnsembleSpec(count=count_per_amplitude, amplitude=amp, horizon=horizon, norm="sup", vanishing=0)
            groups.append((amp, sample_controls(spec, rng)))

    rows_p: List[np.ndarray] = []
    rows_y: List[np.ndarray] = []
    group_slices = []
    n0 = 0
    x0 = [0.0] * f0.dim
    for amp, ctrls in groups:
        _, states, _ = integrate_ensemble(f0, f1, ctrls, x0, step, horizon)
        samples = states[:, ::subsample, :].reshape(-1, f0.dim)
        rows_p.append(samples @ s1.T)
        rows_y.append(samples @ perp.T)
        group_slices.append((amp, n0, n0 + len(samples)))
        n0 += len(samples)
    p = np.vstack(rows_p)
    y = np.vstack(rows_y)
    iu = np.triu_indices(d)
    design = p[:, iu[0]] * p[:, iu[1]]
    sol, _, rank, _ = np.linalg.lstsq(design, y, rcond=1e-10)
    if rank < design.shape[1]:
        raise SimulationError(
            f"rank-deficient graph regression (rank {rank} < {design.shape[1]}); enrich the ensemble"
        )
    coeffs = np.zeros((nperp, d, d))
    for r in range(nperp):
        m = np.zeros((d, d))
        m[iu] = sol[:, r]
        coeffs[r] = 0.5 * (m + m.T)
    resid = design @ sol - y
    resid_norm = np.linalg.norm(resid, axis=1)
    target_norm = np.linalg.norm(y, axis=1)
    by_amp = []
    relative = []
    for amp, lo, hi in group_slices:
        rms = float(np.sqrt(np.mean(resid_norm[lo:hi] ** 2)))
        rms_target = float(np.sqrt(np.mean(target_norm[lo:hi] ** 2)))
        rel = rms / rms_target if rms_target > 0 else 0.0
        by_amp.append((amp, rms, rel))
        relative.append(rel)
    # a true graph leaves only integrator noise; a drift term keeps the
    # relative residual bounded away from zero as the amplitude shrinks
    residual_vanishes = bool(max(relative, default=0.0) <= 1e-3)
    return QuadraticGraphFit(
        s1_basis=s1,
        perp_basis=perp,
        coeffs=coeffs,
        rms_residual=float(np.sqrt(np.mean(resid_norm**2))),
        max_residual=float(np.max(resid_norm)),
        residual_by_amplitude=by_amp,
        residual_vanishes=residual_vanishes,
    )


@dataclass
class ManifoldResidual:
    times: np.ndarray
    residual: np.ndarray
    control_w13_cubed: float
    ratio: np.ndarray  # residual / ||u||^3 in W^{-1,3}


def manifold_residual(traj: TrajectoryRecord, fit: QuadraticGraphFit) -> ManifoldResidual:
    """|P_perp x(t) - G(P x(t))| along a trajectory, and its cubic ratio."""
    perp_x = traj.states @ fit.perp_basis.T
    g_vals = (fit.predict_perp(traj.states) @ fit.perp_basis.T) if fit.perp_basis.size else perp_x * 0
    resid = np.linalg.norm(perp_x - g_vals, axis=1)
    w13 = signals.w_neg13_norm(traj.control)
    cubed = w13**3
    ratio = resid / cubed if cubed > 0 else np.full_like(resid, np.nan)
    return ManifoldResidual(times=traj.times, residual=resid, control_w13_cubed=cubed, ratio=ratio)


# ---------------------------------------------------------------------------
# drift experiments


@dataclass
class DriftReport:
    times: np.ndarray
    pairing: np.ndarray          # (B, T) drift pairing time series
    hk_final: np.ndarray         # (B,) exact int of u_k^2 over [0, T]
    rhs_running: np.ndarray      # (B, T) cumulative int of u_k^2
    min_pairing: float
    min_final_pairing: float
    final_ratio_min: float       # min over nonzero controls of pairing(T)/hk
    k: int
    meta: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return self.pairing.shape[0]

    def violations(self, tol: float = 1e-10) -> int:
        return int(np.sum(np.min(self.pairing, axis=1) < -tol))


def drift_experiment(
    f0: PolyVectorField,
    f1: PolyVectorField,
    filtration: BracketFiltration,
    controls: Sequence[ControlSignal],
    fit: Optional[QuadraticGraphFit] = None,
    step: float = 1e-3,
    horizon: Optional[float] = None,
) -> DriftReport:
    """Evaluate the drift pairing <P_perp x - G(P x), d_k> over an ensemble.

    ``fit=None`` takes G = 0, which is the exact graph for the canonical
    drift systems; violations are recorded as data, never raised.
    """
    if filtration.bad_index is None or filtration.drift_dir is None:
        raise SimulationError("filtration carries no bad index / drift direction")
    k = filtration.bad_index
    dk = filtration.drift_dir_float()
    times, states, _ = integrate_ensemble(f0, f1, controls, [0.0] * f0.dim, step, horizon)
    perp = rational.mat_float(filtration.projector_perp)
    perp_x = states @ perp.T
    if fit is not None:
        g_flat = fit.predict_perp(states.reshape(-1, f0.dim)).reshape(states.shape)
        pairing = (perp_x - g_flat) @ dk
    else:
        pairing = perp_x @ dk
    hk_final = np.array([signals.hk_energy(u, k) for u in controls])
    uk_sq = np.stack([np.asarray(signals.iterated_primitive(u, k).evaluate(times)) ** 2 for u in controls])
    dt = np.diff(times)
    rhs_running = np.zeros_like(uk_sq)
    rhs_running[:, 1:] = np.cumsum(0.5 * (uk_sq[:, 1:] + uk_sq[:, :-1]) * dt, axis=1)
    final = pairing[:, -1]
    nonzero = hk_final > 0
    ratios = final[nonzero] / hk_final[nonzero]
    return DriftReport(
        times=times,
        pairing=pairing,
        hk_final=hk_final,
        rhs_running=rhs_running,
        min_pairing=float(np.min(pairing)),
        min_final_pairing=float(np.min(final)),
        final_ratio_min=float(np.min(ratios)) if ratios.size else float("nan"),
        k=k,
        meta={"count": len(controls)},
    )
