"""
heatobs Mesh Package

This package provides the discretization of space and time:
- SpaceGrid / TimeGrid: uniform interior-node and time-level grids
- SpaceMask / TimeSet / ObservationRegion: interval-union observation sets
- DensitySequence: the telescoping time sequence anchored at a density point
"""

__all__ = []
