from typing import Any, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss
from pydantic import BaseModel, ConfigDict, model_validator

from heatobs.core.mesh.base import SpaceGrid


def smoothstep(z: Any) -> np.ndarray:
    '''
    35z^4 - 84z^5 + 70z^6 - 20z^7 on [0, 1], clamped outside; C^3 at both ends.
    '''
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    return z ** 4 * (35.0 + z * (-84.0 + z * (70.0 - 20.0 * z)))


def smoothstep_d1(z: Any) -> np.ndarray:
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    return 140.0 * z ** 3 * (1.0 - z) ** 3


def smoothstep_d2(z: Any) -> np.ndarray:
    z = np.clip(np.asarray(z, dtype=float), 0.0, 1.0)
    return 420.0 * z ** 2 * (1.0 - z) ** 2 * (1.0 - 2.0 * z)


class TimeCutoff(BaseModel):
    '''
    Description
    -----------
    chi = 1 on [0, rT], 0 on [(1 - r)T, T], joined by the smoothstep.
    '''
    model_config = ConfigDict(frozen=True, extra='forbid')

    T: float
    ramp_fraction: float = 0.25

    @model_validator(mode='after')
    def validate_cutoff(self) -> 'TimeCutoff':
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not 0 < self.ramp_fraction < 0.5:
            raise ValueError(f"ramp_fraction must lie in (0, 1/2), got {self.ramp_fraction}")
        return self

    @property
    def ramp(self) -> Tuple[float, float]:
        return (self.ramp_fraction * self.T, (1.0 - self.ramp_fraction) * self.T)

    @property
    def _width(self) -> float:
        return (1.0 - 2.0 * self.ramp_fraction) * self.T

    def _z(self, t: Any) -> np.ndarray:
        return (np.asarray(t, dtype=float) - self.ramp_fraction * self.T) / self._width

    def value(self, t: Any) -> np.ndarray:
        return 1.0 - smoothstep(self._z(t))

    def derivative(self, t: Any) -> np.ndarray:
        return -smoothstep_d1(self._z(t)) / self._width

    def integral_check(self, points: int = 8) -> float:
        '''
        Gauss-Legendre integral of chi' over the ramp; exact for the
        degree-6 derivative, so it returns -1 to round-off.
        '''
        nodes, weights_ = leggauss(points)
        lo, hi = self.ramp
        t = 0.5 * (hi - lo) * nodes + 0.5 * (hi + lo)
        return float(0.5 * (hi - lo) * np.sum(weights_ * self.derivative(t)))


class SpaceCutoff(BaseModel):
    '''
    Description
    -----------
    phi = 1 on the inner interval, 0 outside the outer one, smoothstep on
    the two collars; first and second derivatives are analytic.
    '''
    model_config = ConfigDict(frozen=True, extra='forbid')

    grid: SpaceGrid
    inner: Tuple[float, float]
    outer: Tuple[float, float]

    @model_validator(mode='after')
    def validate_cutoff(self) -> 'SpaceCutoff':
        lo, hi = self.outer
        lo4, hi4 = self.inner
        if not (self.grid.a <= lo < lo4 < hi4 < hi <= self.grid.b):
            raise ValueError(
                f"Expected a <= lo < lo4 < hi4 < hi <= b, got inner={self.inner}, outer={self.outer} "
                f"on ({self.grid.a}, {self.grid.b})")
        return self

    def _pieces(self, x: Any):
        x = np.asarray(x, dtype=float)
        lo, hi = self.outer
        lo4, hi4 = self.inner
        left, right = lo4 - lo, hi - hi4
        rising = (x > lo) & (x < lo4)
        falling = (x > hi4) & (x < hi)
        plateau = (x >= lo4) & (x <= hi4)
        return x, (x - lo) / left, (hi - x) / right, left, right, rising, falling, plateau

    def value(self, x: Any) -> np.ndarray:
        x, zl, zr, _, _, rising, falling, plateau = self._pieces(x)
        out = np.zeros_like(x)
        out = np.where(rising, smoothstep(zl), out)
        out = np.where(falling, smoothstep(zr), out)
        return np.where(plateau, 1.0, out)

    def d1(self, x: Any) -> np.ndarray:
        x, zl, zr, left, right, rising, falling, _ = self._pieces(x)
        out = np.where(rising, smoothstep_d1(zl) / left, 0.0)
        return np.where(falling, -smoothstep_d1(zr) / right, out)

    def d2(self, x: Any) -> np.ndarray:
        x, zl, zr, left, right, rising, falling, _ = self._pieces(x)
        out = np.where(rising, smoothstep_d2(zl) / left ** 2, 0.0)
        return np.where(falling, smoothstep_d2(zr) / right ** 2, out)


def build_chi(T: float, ramp_fraction: float = 0.25) -> TimeCutoff:
    return TimeCutoff(T=T, ramp_fraction=ramp_fraction)


def build_phi(grid: SpaceGrid, omega4: Tuple[float, float], omega: Tuple[float, float]) -> SpaceCutoff:
    return SpaceCutoff(grid=grid, inner=tuple(omega4), outer=tuple(omega))
