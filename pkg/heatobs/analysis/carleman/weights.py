import logging
import math
from typing import Any, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import brentq

from heatobs.core.mesh.base import SpaceGrid, TimeGrid
from heatobs.core.potential.norms import PotentialNorms

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA0 = 2.0


class XiVerification(BaseModel):
    model_config = ConfigDict(frozen=True)

    positive: bool
    boundary_zero: bool
    unique_critical: bool
    critical_point: float
    delta_xi: float
    passed: bool


class XiFunction(BaseModel):
    '''
    Description
    -----------
    Auxiliary function xi(x) = z(1 - z) exp(mu (z - c')) with z = (x - a)/(b - a)
    and mu = (2c' - 1)/(c'(1 - c')). It is positive inside (a, b), vanishes at
    both ends and has a single critical point, the maximum at x = c.

    Attributes
    ----------
    ```
    grid : SpaceGrid
    ```
    Grid whose domain (a, b) xi lives on
    ```
    center : float
    ```
    The critical point c, strictly inside (a, b)

    Methods
    -------
    ```
    def value(x) -> np.ndarray
    def d1(x) -> np.ndarray
    def d2(x) -> np.ndarray
    ```
    xi and its first two derivatives in x
    ```
    def verify(oversample=16, rho=None) -> XiVerification
    ```
    Checks positivity, boundary zeros and the unique critical point
    '''
    model_config = ConfigDict(frozen=True, extra='forbid')

    grid: SpaceGrid
    center: float

    @model_validator(mode='after')
    def validate_center(self) -> 'XiFunction':
        if not self.grid.a < self.center < self.grid.b:
            raise ValueError(f"The center {self.center} must lie strictly inside ({self.grid.a}, {self.grid.b})")
        return self

    @property
    def c_hat(self) -> float:
        return (self.center - self.grid.a) / self.grid.length

    @property
    def mu(self) -> float:
        c = self.c_hat
        return (2.0 * c - 1.0) / (c * (1.0 - c))

    def _z(self, x: Any) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.grid.a) / self.grid.length

    def value(self, x: Any) -> np.ndarray:
        z = self._z(x)
        return z * (1.0 - z) * np.exp(self.mu * (z - self.c_hat))

    def d1(self, x: Any) -> np.ndarray:
        z, mu = self._z(x), self.mu
        return np.exp(mu * (z - self.c_hat)) * ((1.0 - 2.0 * z) + mu * z * (1.0 - z)) / self.grid.length

    def d2(self, x: Any) -> np.ndarray:
        z, mu = self._z(x), self.mu
        bracket = -2.0 + 2.0 * mu * (1.0 - 2.0 * z) + mu * mu * z * (1.0 - z)
        return np.exp(mu * (z - self.c_hat)) * bracket / self.grid.length ** 2

    @property
    def sup(self) -> float:
        return float(self.value(self.center))

    @property
    def second_root(self) -> Optional[float]:
        '''
        The other zero of xi', at z = (1 - c')/(1 - 2c'); None when mu = 0
        '''
        c = self.c_hat
        if c == 0.5:
            return None
        return self.grid.a + self.grid.length * (1.0 - c) / (1.0 - 2.0 * c)

    def verify(self, oversample: int = 16, rho: Optional[float] = None) -> XiVerification:
        a, b = self.grid.a, self.grid.b
        rho = 0.05 * self.grid.length if rho is None else rho
        xs = np.linspace(a, b, (self.grid.n + 1) * oversample + 1)
        values, slopes = self.value(xs), self.d1(xs)

        scale = self.sup
        positive = bool(np.all(values[1:-1] > 0))
        boundary_zero = abs(values[0]) <= 1e-14 * scale and abs(values[-1]) <= 1e-14 * scale

        signs = np.sign(slopes)
        changes = np.flatnonzero(signs[:-1] * signs[1:] < 0)
        exact = np.flatnonzero(signs == 0)
        critical = math.nan
        if len(changes) == 1 and len(exact) == 0:
            k = changes[0]
            critical = brentq(lambda x: float(self.d1(x)), xs[k], xs[k + 1], xtol=1e-15)
        elif len(changes) == 0 and len(exact) == 1:
            critical = float(xs[exact[0]])
        unique = math.isfinite(critical) and abs(critical - self.center) <= 1e-10 * self.grid.length

        away = np.abs(xs - self.center) >= rho
        delta_xi = float(np.abs(slopes[away]).min()) if np.any(away) else 0.0

        return XiVerification(
            positive=positive,
            boundary_zero=boundary_zero,
            unique_critical=unique,
            critical_point=critical,
            delta_xi=delta_xi,
            passed=positive and boundary_zero and unique and delta_xi > 0,
        )


def build_xi(grid: SpaceGrid, omega_prime_center: float) -> XiFunction:
    return XiFunction(grid=grid, center=omega_prime_center)


class CarlemanParams(BaseModel):
    '''
    Description
    -----------
    Weight and inequality parameters. `lam` is accepted as `lambda` in
    configuration files.
    '''
    model_config = ConfigDict(frozen=True, extra='forbid', populate_by_name=True)

    s: float = Field(default=2.0, ge=1.0)
    lam: float = Field(default=DEFAULT_LAMBDA0, alias='lambda', gt=0.0)
    tau: float = Field(default=1.0, gt=0.0)
    C1: float = Field(default=1.0, gt=0.0)
    lambda0: float = Field(default=DEFAULT_LAMBDA0, gt=0.0)

    @model_validator(mode='after')
    def validate_params(self) -> 'CarlemanParams':
        if self.lam < self.lambda0:
            raise ValueError(f"lambda={self.lam} must be at least lambda0={self.lambda0}")
        return self


def _theta(t: np.ndarray, T: float) -> np.ndarray:
    return 1.0 / (t * (T - t))


class WeightField(BaseModel):
    '''
    Description
    -----------
    Carleman weights on interior nodes x half-steps, arrays of shape (N, n):

        eta  = exp(lam (S + xi)) / (t (T - t)),      S = s ||xi||_inf
        beta = (exp(2 lam S) - exp(lam (S + xi))) / (t (T - t))
             = eta * expm1(lam (S - xi))

    with grad eta = lam eta xi', grad beta = -lam eta xi',
    lap beta = -lam^2 eta xi'^2 - lam eta xi'' and
    dt beta = -beta (T - 2t) / (t (T - t)).
    '''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    xi: XiFunction
    params: CarlemanParams
    tg: TimeGrid
    log_eta: np.ndarray
    beta: np.ndarray
    dt_beta: np.ndarray
    grad_eta: np.ndarray
    grad_beta: np.ndarray
    lap_beta: np.ndarray

    @property
    def eta(self) -> np.ndarray:
        return np.exp(self.log_eta)

    def dt_beta_constant(self) -> float:
        '''
        Empirical constant C in |dt beta| <= C T eta^2
        '''
        return float(np.max(np.abs(self.dt_beta) * np.exp(-2.0 * self.log_eta)) / self.tg.T)

    def log_weight(self, tau: float, power: float = 0.0) -> np.ndarray:
        '''
        log(exp(-2 tau beta) eta^power)
        '''
        return -2.0 * tau * self.beta + power * self.log_eta


def _weight_arrays(xi: XiFunction, params: CarlemanParams, x: np.ndarray, t: np.ndarray, T: float) -> dict:
    lam, S = params.lam, params.s * xi.sup
    xv, d1, d2 = xi.value(x)[None, :], xi.d1(x)[None, :], xi.d2(x)[None, :]
    theta = _theta(t, T)[:, None]
    log_eta = lam * (S + xv) + np.log(theta)
    eta = np.exp(log_eta)
    beta = eta * np.expm1(lam * (S - xv))
    return dict(
        log_eta=log_eta,
        beta=beta,
        dt_beta=-beta * (T - 2.0 * t)[:, None] * theta,
        grad_eta=lam * eta * d1,
        grad_beta=-lam * eta * d1,
        lap_beta=-lam * lam * eta * d1 * d1 - lam * eta * d2,
    )


def weights(xi: XiFunction, params: CarlemanParams, grid: SpaceGrid, tg: TimeGrid) -> WeightField:
    arrays = _weight_arrays(xi, params, grid.nodes, tg.half_times, tg.T)
    return WeightField(xi=xi, params=params, tg=tg, **arrays)


def endpoint_weight(xi: XiFunction, params: CarlemanParams, grid: SpaceGrid, tg: TimeGrid) -> np.ndarray:
    '''
    exp(-2 tau beta) on time levels, shape (N + 1, n), with the limit value
    0 at t = 0 and t = T.
    '''
    out = np.zeros((tg.N + 1, grid.n))
    if tg.N > 1:
        inner = _weight_arrays(xi, params, grid.nodes, tg.times[1:-1], tg.T)
        out[1:-1] = np.exp(-2.0 * params.tau * inner['beta'])
    return out


def tau0(T: float, norms: PotentialNorms, C: float = 1.0) -> float:
    '''
    C (T + T^2 + T^2 (sup^{1/2} + grad_sup^{1/2} + dt_sup^{1/3}))
    '''
    if not C > 0:
        raise ValueError(f"C must be positive, got {C}")
    return C * (T + T * T + T * T * norms.triple)
