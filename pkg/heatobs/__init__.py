"""
heatobs: a numerical laboratory for observability and null controllability
of 1D heat equations with potentials

heatobs provides adjoint-consistent solvers, HUM control synthesis, measured
observability constants, Carleman weight evaluation and a spectral-inequality
workbench, driven by a JSON-configured command line.

Main Components:
- core: grids, observation sets, potentials, time stepping and linear algebra
- analysis: Carleman, observability, control and spectral experiments
- cli: experiment configuration, task commands, sweeps and exponent fits
"""

__version__ = "1.0.0"

__all__ = []
