"""
heatobs Core Package

This package provides the discretization layer for heatobs:
- mesh: space/time grids, observation masks, time sets and density sequences
- potential: potential families and their norm bundle
- pde: forward/adjoint time stepping and energy diagnostics
- linalg: matrix-free conjugate gradient and pencil power iteration
"""

__all__ = []
