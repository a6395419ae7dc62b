"""Canonical single-input test systems used across tests, docs and the CLI."""

from __future__ import annotations

from .vectorfield import PolyVectorField


def _sys(f0_exprs, f1_exprs):
    dim = len(f0_exprs)
    return (
        PolyVectorField.from_strings(f0_exprs, dim),
        PolyVectorField.from_strings(f1_exprs, dim),
    )


def double_integrator():
    """x1' = u, x2' = x1; controllable linear benchmark."""
    return _sys(["0", "x1"], ["1", "0"])


def quadratic_drift():
    """x1' = u, x2' = x1^2; first quadratic obstruction (bad index 1)."""
    return _sys(["0", "x1^2"], ["1", "0"])


def cubic_drift():
    """x1' = u, x2' = x1, x3' = x2^2 + x1^3; bad index 2."""
    return _sys(["0", "x1", "x2^2 + x1^3"], ["1", "0", "0"])


def invariant_graph():
    """x1' = u, x2' = x1, x3' = x1*x2; exact graph x3 = x2^2/2."""
    return _sys(["0", "x1", "x1*x2"], ["1", "0", "0"])


def pure_cubic():
    """x1' = u, x2' = x1, x3' = x1^3; cubic-only transverse motion."""
    return _sys(["0", "x1", "x1^3"], ["1", "0", "0"])


def stuck_line():
    """x1' = u, x2' = 0; Lie rank 1 < 2, state confined to a line."""
    return _sys(["0", "0"], ["1", "0"])


REGISTRY = {
    "double-integrator": (double_integrator, "controllable linear system (Kalman rank 2)"),
    "quadratic-drift": (quadratic_drift, "x2' = x1^2, signed drift with bad index k=1"),
    "cubic-drift": (cubic_drift, "x3' = x2^2 + x1^3, signed drift with bad index k=2"),
    "invariant-graph": (invariant_graph, "x3' = x1*x2, trajectories live on x3 = x2^2/2"),
    "pure-cubic": (pure_cubic, "x3' = x1^3, cubic-scale transverse motion"),
    "stuck-line": (stuck_line, "Lie rank deficient, motion confined to a line"),
}


def get(name: str):
    if name not in REGISTRY:
        raise KeyError(f"unknown system {name!r}; known: {', '.join(sorted(REGISTRY))}")
    return REGISTRY[name][0]()
