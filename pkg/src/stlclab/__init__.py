"""stlclab: quadratic obstructions to small-time local controllability.

Exact Lie-bracket filtrations and drift directions for single-input systems,
drift/invariant-manifold experiments, the scalar-controlled viscous Burgers
kernel analysis, and dipole-moment classification for the bilinear
Schrodinger system.
"""

__version__ = "0.1.0"
