import logging
import math
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

from heatobs.core.pde.base import HalfStepSource, HeatSolver, SpaceTimeField
from heatobs.core.potential.norms import PotentialNorms

logger = logging.getLogger(__name__)


class DualityGap(BaseModel):
    '''
    Description
    -----------
    gap = <y^N, q^N> - <y^0, q^0> - dt sum_n <f^{n+1/2}, (q^n + q^{n+1})/2>,
    and `scale`, the sum of the magnitudes of the three terms.
    '''
    model_config = ConfigDict(frozen=True)

    gap: float
    scale: float

    @property
    def relative(self) -> float:
        return abs(self.gap) / self.scale if self.scale > 0 else 0.0


def duality_gap(
    solver: HeatSolver,
    y0: np.ndarray,
    qT: np.ndarray,
    source: Optional[HalfStepSource] = None,
) -> DualityGap:
    grid = solver.grid
    y = solver.forward(y0, source)
    q = solver.adjoint(qT)

    terminal = grid.inner(y.terminal, q.terminal)
    initial = grid.inner(y.initial, q.initial)
    if source is None:
        pairing = 0.0
    else:
        pairing = float(solver.tg.dt * grid.h * np.sum(source.values * q.midpoints()))
    return DualityGap(
        gap=terminal - initial - pairing,
        scale=abs(terminal) + abs(initial) + abs(pairing),
    )


class DissipativityReport(BaseModel):
    '''
    Description
    -----------
    Outcome of testing ||q(t1)|| <= exp(c (t2 - t1) ||V_-||) ||q(t2)|| over
    every pair of levels t1 <= t2.

    Attributes
    ----------
    ```
    holds : bool
    ```
    The inequality holds with the requested c
    ```
    holds_at_zero : bool
    ```
    ||q(t1)|| <= ||q(t2)|| for every pair, i.e. the c = 0 form
    ```
    c_min : float
    ```
    Smallest admissible c, inf when no finite c works (V_- = 0 with growth)
    ```
    max_log_ratio : float
    ```
    max over pairs of log ||q(t1)|| - log ||q(t2)||, clipped at 0
    '''
    model_config = ConfigDict(frozen=True, ser_json_inf_nan='strings')

    holds: bool
    holds_at_zero: bool
    c: float
    c_min: float
    max_log_ratio: float
    neg_sup: float


def dissipativity_check(
    q: SpaceTimeField,
    norms: PotentialNorms,
    c: float = 1.0,
    tol: float = 1e-12,
) -> DissipativityReport:
    level_norms = q.level_norms()
    neg = norms.neg_sup

    if not np.any(level_norms > 0):
        return DissipativityReport(holds=True, holds_at_zero=True, c=c, c_min=0.0, max_log_ratio=0.0, neg_sup=neg)

    with np.errstate(divide='ignore'):
        logs = np.log(level_norms)
    times = q.tg.times
    # Pair (i, j) with i < j, i.e. t1 = times[i] <= t2 = times[j]
    i, j = np.triu_indices(len(times), k=1)
    with np.errstate(invalid='ignore'):
        log_ratio = logs[i] - logs[j]
    log_ratio = np.where(np.isnan(log_ratio), -np.inf, log_ratio)
    max_log_ratio = max(0.0, float(log_ratio.max()))

    holds_at_zero = max_log_ratio <= tol
    if holds_at_zero:
        c_min = 0.0
    elif neg > 0 and math.isfinite(max_log_ratio):
        c_min = max(0.0, float(np.max(log_ratio / ((times[j] - times[i]) * neg))))
    else:
        c_min = math.inf

    report = DissipativityReport(
        holds=c_min <= c * (1 + tol) or holds_at_zero,
        holds_at_zero=holds_at_zero,
        c=c,
        c_min=c_min,
        max_log_ratio=max_log_ratio,
        neg_sup=neg,
    )
    if not report.holds:
        logger.warning(f"Dissipativity fails with c={c}: smallest admissible c is {c_min:.4g}")
    return report


def stiff_damping(solver: HeatSolver) -> float:
    '''
    |r|^N for the highest discrete Dirichlet mode, r = (1 - dt mu/2)/(1 + dt mu/2)
    the trapezoidal step factor at mu = 4/h^2 sin^2(n pi h / 2L). Values near 1
    mean the scheme carries the stiff modes through the whole horizon almost
    undamped.
    '''
    grid, tg = solver.grid, solver.tg
    mu = 4.0 / grid.h ** 2 * math.sin(0.5 * math.pi * grid.n * grid.h / grid.length) ** 2
    x = 0.5 * tg.dt * mu
    return abs((1.0 - x) / (1.0 + x)) ** tg.N


class EnergyReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_energy: float
    gradient_energy: float


def _gradient_energy(values: np.ndarray, h: float) -> np.ndarray:
    padded = np.pad(values, ((0, 0), (1, 1)))
    differences = np.diff(padded, axis=1) / h
    return h * np.sum(differences ** 2, axis=1)


def energy_report(y: SpaceTimeField) -> EnergyReport:
    '''
    max_n ||y^n||_h^2 and sum_{n<N} dt ||grad_h y^n||^2, the gradient taken
    by forward differences including the two boundary gaps.
    '''
    h = y.grid.h
    energies = h * np.sum(y.values ** 2, axis=1)
    gradient = _gradient_energy(y.values[:-1], h)
    return EnergyReport(
        max_energy=float(energies.max()),
        gradient_energy=float(y.tg.dt * gradient.sum()),
    )


class EnergyRatio(BaseModel):
    '''
    (max ||y||^2 + sum dt ||grad y||^2) / (||y0||^2 + ||f||^2) next to the
    growth factor exp(T ||V_-||) it is bounded by up to a domain constant.
    '''
    model_config = ConfigDict(frozen=True, ser_json_inf_nan='strings')

    ratio: float
    growth_factor: float


def energy_ratio(
    y: SpaceTimeField,
    norms: PotentialNorms,
    source: Optional[HalfStepSource] = None,
) -> EnergyRatio:
    report = energy_report(y)
    data = y.grid.inner(y.initial, y.initial)
    if source is not None:
        data += source.l2_norm() ** 2
    ratio = (report.max_energy + report.gradient_energy) / data if data > 0 else 0.0
    return EnergyRatio(ratio=ratio, growth_factor=math.exp(y.tg.T * norms.neg_sup))


def field_frame(field: Union[SpaceTimeField, HalfStepSource], column: str = "value") -> pd.DataFrame:
    '''
    Long-format table (t, x, value), row-major over time then space.
    Half-step sources are reported at t_{n+1/2}.
    '''
    times = field.tg.times if isinstance(field, SpaceTimeField) else field.tg.half_times
    nodes = field.grid.nodes
    return pd.DataFrame({
        "t": np.repeat(times, len(nodes)),
        "x": np.tile(nodes, len(times)),
        column: field.values.ravel(),
    })


def write_field_csv(field: Union[SpaceTimeField, HalfStepSource], path: Union[str, Path], column: str = "value") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    field_frame(field, column).to_csv(path, index=False, float_format='%.17g')
    logger.debug(f"Wrote field with {field.values.size} rows to {path}")
    return path
