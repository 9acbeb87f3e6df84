import logging
import math
from typing import Any, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from heatobs.analysis.observability.base import GramianOperator
from heatobs.analysis.observability.bounds import bound_new_full
from heatobs.core.linalg.base import conjugate_gradient
from heatobs.core.mesh.base import ObservationRegion
from heatobs.core.pde.base import HalfStepSource, HeatSolver, SpaceTimeField, inject, observation_trace
from heatobs.core.potential.norms import PotentialNorms

logger = logging.getLogger(__name__)


class HUMSolution(BaseModel):
    '''
    Description
    -----------
    Penalized HUM control and its independent verification.

    Attributes
    ----------
    ```
    qT_star : np.ndarray
    ```
    Solution of (Lambda + eps I) qT = -y_free^N
    ```
    h : HalfStepSource
    ```
    Control (w_n/dt)^{1/2} times the observation trace of the adjoint from
    qT_star; it equals the masked half-step trace when E = (0, T)
    ```
    trajectory : SpaceTimeField
    ```
    Forward solve from y0 driven by h, recomputed independently of CG
    ```
    terminal_ratio : float
    ```
    ||y^N||_h / ||y0||_h, 0 for y0 = 0
    ```
    optimality_residual : float
    ```
    ||Lambda qT + eps qT + y_free^N|| / ||y_free^N|| from one extra operator application
    ```
    penalization_defect : float
    ```
    ||y^N + eps qT||_h measured on the recomputed trajectory
    ```
    cost_l2 : float
    ```
    ||h||_{L2(omega x (0, T))}
    '''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    qT_star: np.ndarray
    h: HalfStepSource
    trajectory: SpaceTimeField
    initial_norm: float
    terminal_ratio: float
    cg_iterations: int
    cg_residual: float
    eps: float
    converged: bool
    optimality_residual: float
    penalization_defect: float
    cost_l2: float

    @field_validator('qT_star', mode='before')
    @classmethod
    def _readonly(cls, value: Any) -> np.ndarray:
        array = np.array(value, dtype=float)
        array.setflags(write=False)
        return array


def hum_solve(
    y0: Any,
    solver: HeatSolver,
    region: ObservationRegion,
    eps: float = 1e-10,
    cg_tol: float = 1e-10,
    max_iter: int = 500,
) -> HUMSolution:
    '''
    Description
    -----------
    Solves (Lambda + eps I) qT = -y_free^N by conjugate gradient, extracts the
    control from the adjoint of qT and verifies it by a fresh forward solve.
    CG non-convergence is reported through `converged`, never raised.
    '''
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    if not cg_tol > 0:
        raise ValueError(f"cg_tol must be positive, got {cg_tol}")

    grid = solver.grid
    y0 = np.asarray(y0, dtype=float)
    operator = GramianOperator(solver, region)
    free = solver.forward(y0, role='free')
    rhs = -free.terminal

    def normal_operator(q: np.ndarray) -> np.ndarray:
        return operator.gramian(q) + eps * q

    cg = conjugate_gradient(normal_operator, rhs, tol=cg_tol, max_iter=max_iter)
    qT = cg.x
    h = inject(observation_trace(solver.adjoint(qT), region), region)
    trajectory = solver.forward(y0, h)

    initial_norm = grid.norm(y0)
    terminal_norm = grid.norm(trajectory.terminal)
    rhs_norm = float(np.linalg.norm(rhs))
    optimality = float(np.linalg.norm(normal_operator(qT) - rhs)) / rhs_norm if rhs_norm > 0 else 0.0

    solution = HUMSolution(
        qT_star=qT,
        h=h,
        trajectory=trajectory,
        initial_norm=initial_norm,
        terminal_ratio=terminal_norm / initial_norm if initial_norm > 0 else 0.0,
        cg_iterations=cg.iterations,
        cg_residual=cg.residual,
        eps=eps,
        converged=cg.converged,
        optimality_residual=optimality,
        penalization_defect=grid.norm(trajectory.terminal + eps * qT),
        cost_l2=h.l2_norm(),
    )
    logger.info(
        f"HUM: terminal_ratio={solution.terminal_ratio:.3e}, cost={solution.cost_l2:.4e}, "
        f"cg_iterations={cg.iterations}, converged={cg.converged}")
    return solution


class CostReport(BaseModel):
    '''
    Description
    -----------
    Measured control cost against the predicted log-bound
    C (1 + 1/T + T ||V|| + [[V]]). `log_cost` is log(||h|| / ||y0||) and is
    -inf for a zero control.
    '''
    model_config = ConfigDict(frozen=True, ser_json_inf_nan='strings')

    T: float
    cost_l2: float
    log_cost: float
    log_bound: float
    log_ratio: float
    chosen_C: float


def cost_report(sol: HUMSolution, T: float, norms: PotentialNorms, C: float = 1.0) -> CostReport:
    log_bound = bound_new_full(T, norms, C)
    if sol.cost_l2 > 0 and sol.initial_norm > 0:
        log_cost = math.log(sol.cost_l2 / sol.initial_norm)
    else:
        log_cost = -math.inf
    return CostReport(
        T=T,
        cost_l2=sol.cost_l2,
        log_cost=log_cost,
        log_bound=log_bound,
        log_ratio=log_cost - log_bound,
        chosen_C=C,
    )


def cost_monotone(rows: Sequence[Tuple[float, float]], rtol: float = 0.0) -> bool:
    '''
    True when the measured cost does not increase as T grows. Rows are
    (T, cost) pairs in any order.
    '''
    ordered = sorted(rows, key=lambda row: row[0])
    return all(later <= earlier * (1 + rtol) for (_, earlier), (_, later) in zip(ordered, ordered[1:]))
