import logging
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from heatobs.analysis.carleman.weights import CarlemanParams, XiFunction, weights
from heatobs.core.mesh.base import DensitySequence, SpaceGrid, SpaceMask, TimeGrid, TimeSet
from heatobs.core.pde.base import HeatSolver, SpaceTimeField
from heatobs.core.potential.norms import norms as potential_norms

logger = logging.getLogger(__name__)


def _snap(tg: TimeGrid, t: float) -> int:
    index = int(round(t / tg.dt))
    return min(max(index, 0), tg.N)


def _free_evolution(solver: HeatSolver, f: np.ndarray) -> SpaceTimeField:
    f = np.asarray(f, dtype=float)
    if not np.any(f != 0):
        raise ValueError("The initial datum f vanishes; the interpolation ratio is undefined")
    potential = solver.potential
    if not potential.is_time_independent:
        raise ValueError("The interpolation check needs a time-independent potential")
    if potential_norms(potential, solver.grid, solver.tg).neg_sup > 0:
        raise ValueError("The interpolation check needs a nonnegative potential")
    return solver.forward(f, role='free')


def _interpolation_ratio(y: SpaceTimeField, omega: SpaceMask, n1: int, n: int, n2: int, delta: float) -> float:
    top = y.grid.norm(y.values[n2])
    local = omega.norm(y.values[n])
    early = y.grid.norm(y.values[n1])
    if local == 0.0 or early == 0.0:
        raise ValueError(f"Zero denominator in the interpolation ratio at levels ({n1}, {n})")
    return top / (local ** (1.0 - delta) * early ** delta)


def interpolation_check(
    solver: HeatSolver,
    f: np.ndarray,
    t1: float,
    t: float,
    t2: float,
    omega: SpaceMask,
    delta: float,
) -> float:
    '''
    Description
    -----------
    ||e^{t2 A} f|| / (||e^{t A} f||_omega^{1 - delta} ||e^{t1 A} f||^delta) for
    the discrete semigroup of a nonnegative time-independent potential.
    Times are snapped to the nearest time level.
    '''
    tg = solver.tg
    if not 0 <= t1 < t < t2 <= tg.T:
        raise ValueError(f"Expected 0 <= t1 < t < t2 <= T, got ({t1}, {t}, {t2}) with T={tg.T}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    n1, n, n2 = _snap(tg, t1), _snap(tg, t), _snap(tg, t2)
    if not n1 < n < n2:
        raise ValueError(f"Times ({t1}, {t}, {t2}) collapse onto levels ({n1}, {n}, {n2})")
    y = _free_evolution(solver, f)
    return _interpolation_ratio(y, omega, n1, n, n2, delta)


class TelescopingRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    m: int
    t1: float
    t2: float
    E_measure: float
    samples: int
    max_constant: Optional[float] = None


class TelescopingReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    rows: List[TelescopingRow]

    @property
    def max_constant(self) -> Optional[float]:
        values = [row.max_constant for row in self.rows if row.max_constant is not None]
        return max(values) if values else None


def telescoping_report(
    solver: HeatSolver,
    f: np.ndarray,
    E: TimeSet,
    sequence: DensitySequence,
    omega: SpaceMask,
    delta: float,
) -> TelescopingReport:
    '''
    Interpolation constants along a density sequence: for each interval
    (t1, t2) = (k_{m+1}, k_m), the largest ratio over time levels of
    E intersected with (t1 + (t2 - t1)/4, t2).
    '''
    tg = solver.tg
    y = _free_evolution(solver, f)
    terms = sequence.terms
    rows = []
    for m in range(len(terms) - 1):
        t2, t1 = float(terms[m]), float(terms[m + 1])
        lo = t1 + 0.25 * (t2 - t1)
        n1, n2 = _snap(tg, t1), _snap(tg, t2)
        levels = [
            n for n in range(n1 + 1, n2)
            if lo < tg.times[n] < t2 and E.contains(float(tg.times[n]))
        ]
        best = None
        for n in levels:
            ratio = _interpolation_ratio(y, omega, n1, n, n2, delta)
            best = ratio if best is None else max(best, ratio)
        rows.append(TelescopingRow(
            m=m + 1, t1=t1, t2=t2, E_measure=E.measure_between(lo, t2), samples=len(levels), max_constant=best))
        if not levels:
            logger.debug(f"Density interval {m + 1} ({t1:.4g}, {t2:.4g}) holds no time level")
    return TelescopingReport(rows=rows)


class WeightBoundReport(BaseModel):
    '''
    log min of exp(-2 tau beta) eta^3 over Omega x (T/3, 2T/3) and its log max
    over the whole cylinder, on half-steps
    '''
    model_config = ConfigDict(frozen=True)

    log_min_middle: float
    log_max_global: float

    @property
    def log_gap(self) -> float:
        return self.log_max_global - self.log_min_middle


def weight_bound_diagnostics(
    xi: XiFunction,
    params: CarlemanParams,
    grid: SpaceGrid,
    tg: TimeGrid,
) -> WeightBoundReport:
    field = weights(xi, params, grid, tg)
    log_weight = field.log_weight(params.tau, 3.0)
    half = tg.half_times
    middle = (half > tg.T / 3.0) & (half < 2.0 * tg.T / 3.0)
    if not np.any(middle):
        raise ValueError(f"No half-step falls inside (T/3, 2T/3) with N={tg.N}")
    return WeightBoundReport(
        log_min_middle=float(log_weight[middle].min()),
        log_max_global=float(log_weight.max()),
    )
