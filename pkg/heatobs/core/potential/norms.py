import logging
import math
from typing import Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from heatobs.core.mesh.base import SpaceGrid, TimeGrid
from heatobs.core.potential.base import BasePotential

logger = logging.getLogger(__name__)

# Potentials below this sup norm are outside the large-norm regime of the bounds
LARGE_NORM_THRESHOLD = 10.0


def triple_norm(sup: float, grad_sup: float, dt_sup: float) -> float:
    '''
    Combined norm sup^{1/2} + grad_sup^{1/2} + dt_sup^{1/3}
    '''
    return math.sqrt(sup) + math.sqrt(grad_sup) + dt_sup ** (1.0 / 3.0)


class PotentialNorms(BaseModel):
    '''
    Description
    -----------
    Norm bundle of a potential over the closed cylinder [a, b] x [0, T].

    Attributes
    ----------
    ```
    sup : float
    ```
    ||V||_inf
    ```
    grad_sup : float
    ```
    ||grad V||_inf
    ```
    dt_sup : float
    ```
    ||dV/dt||_inf
    ```
    neg_sup : float
    ```
    ||V_-||_inf with V_- = min(V, 0)
    ```
    triple : float
    ```
    sup^{1/2} + grad_sup^{1/2} + dt_sup^{1/3}
    ```
    approximate : bool
    ```
    True when any component came from sampling rather than a closed form
    ```
    large_norm : bool
    ```
    True when sup >= 10; smaller potentials are flagged, never rejected
    '''
    model_config = ConfigDict(frozen=True, extra='forbid')

    sup: float = Field(ge=0.0)
    grad_sup: float = Field(ge=0.0)
    dt_sup: float = Field(ge=0.0)
    neg_sup: float = Field(ge=0.0)
    triple: float = Field(ge=0.0)
    approximate: bool = False
    large_norm: bool = False

    @model_validator(mode='after')
    def validate_norms(self) -> 'PotentialNorms':
        if self.neg_sup > self.sup * (1 + 1e-12):
            raise ValueError(f"neg_sup={self.neg_sup} cannot exceed sup={self.sup}")
        expected = triple_norm(self.sup, self.grad_sup, self.dt_sup)
        if abs(self.triple - expected) > 1e-12 * max(1.0, expected):
            raise ValueError(f"triple={self.triple} inconsistent with its components (expected {expected})")
        return self

    @classmethod
    def from_components(
        cls,
        sup: float,
        grad_sup: float = 0.0,
        dt_sup: float = 0.0,
        neg_sup: float = 0.0,
        approximate: bool = False,
    ) -> 'PotentialNorms':
        return cls(
            sup=sup,
            grad_sup=grad_sup,
            dt_sup=dt_sup,
            neg_sup=neg_sup,
            triple=triple_norm(sup, grad_sup, dt_sup),
            approximate=approximate,
            large_norm=sup >= LARGE_NORM_THRESHOLD,
        )


def norms(V: BasePotential, grid: SpaceGrid, tg: TimeGrid, oversample: int = 8) -> PotentialNorms:
    '''
    Description
    -----------
    Computes the norm bundle of V on [a, b] x [0, T]. Closed forms are used
    whenever the family provides them; everything else is maximized over the
    closed tensor grid refined `oversample` times, with derivatives taken by
    finite differences and the result flagged approximate.
    '''
    if oversample < 1:
        raise ValueError(f"oversample must be at least 1, got {oversample}")

    a, b, T = grid.a, grid.b, tg.T
    value_range = V.value_range(a, b, 0.0, T)
    grad_sup = V.grad_sup(a, b, 0.0, T)
    dt_sup = V.dt_sup(a, b, 0.0, T)
    approximate = False

    if value_range is None or grad_sup is None or dt_sup is None:
        xs = np.linspace(a, b, (grid.n + 1) * oversample + 1)
        ts = np.linspace(0.0, T, tg.N * oversample + 1)
        X, Ts = xs[None, :], ts[:, None]
        values: Optional[np.ndarray] = None

        def sampled() -> np.ndarray:
            nonlocal values
            if values is None:
                values = np.asarray(V(X, Ts), dtype=float)
            return values

        if value_range is None:
            v = sampled()
            value_range = (float(v.min()), float(v.max()))
        if grad_sup is None:
            g = V.grad(X, Ts)
            if g is None:
                grad_sup = float(np.abs(np.diff(sampled(), axis=1)).max() / (xs[1] - xs[0]))
                approximate = True
            else:
                grad_sup = float(np.abs(g).max())
        if dt_sup is None:
            d = V.time_derivative(X, Ts)
            if d is None:
                dt_sup = float(np.abs(np.diff(sampled(), axis=0)).max() / (ts[1] - ts[0]))
                approximate = True
            else:
                dt_sup = float(np.abs(d).max())

    lo, hi = value_range
    result = PotentialNorms.from_components(
        sup=max(abs(lo), abs(hi)),
        grad_sup=grad_sup,
        dt_sup=dt_sup,
        neg_sup=max(0.0, -lo),
        approximate=approximate,
    )
    if not result.large_norm:
        logger.warning(
            f"Potential sup norm {result.sup:.4g} is below {LARGE_NORM_THRESHOLD}; "
            f"the bound comparison is outside its large-norm regime")
    return result


def evaluate_midstep(V: BasePotential, grid: SpaceGrid, tg: TimeGrid) -> np.ndarray:
    '''
    (n, N) array of V(x_i, t_{n+1/2})
    '''
    return V.midstep_values(grid.nodes, tg.half_times)


def evaluate_nodes(V: BasePotential, grid: SpaceGrid, t: float) -> np.ndarray:
    return np.asarray(V(grid.nodes, t), dtype=float)
