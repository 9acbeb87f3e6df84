import logging
import math
from typing import Any, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.linalg import LinAlgError

from heatobs.core.linalg.base import (
    LinearOperator,
    assemble,
    dense_pencil_maximum,
    hutchinson_trace,
    pencil_power_iteration,
)
from heatobs.core.mesh.base import ObservationRegion, SpaceMask, TimeSet
from heatobs.core.pde.base import HalfStepSource, HeatSolver, SolverError, inject, observation_trace
from heatobs.core.pde.diagnostics import stiff_damping

logger = logging.getLogger(__name__)

PencilMethod = Literal["dense", "power"]

# Largest grid assembled densely by method="auto"
DENSE_LIMIT = 256

# Highest-mode survival |r|^N above which c_obs reflects undamped stiff modes
STIFF_TOLERANCE = 1e-6

__all__ = [
    "ObservationRegion",
    "GramianOperator",
    "ObservabilityEstimate",
    "TwoStageConstant",
    "gramian_apply",
    "initial_energy_apply",
    "cobs_estimate",
    "two_stage_constant",
]


class GramianOperator:
    '''
    Description
    -----------
    Matrix-free observation operators of one solver and region.

    `gramian(qT)` solves the adjoint from qT, extracts the weighted masked
    trace, re-injects it as a source and returns the terminal state of the
    forward solve from zero. By the discrete duality <gramian(q), p>_h equals
    the observed pairing of q and p on omega x E, so the operator is
    symmetric positive semidefinite.

    `initial_energy(qT)` maps qT to the terminal value of the free forward
    evolution of the adjoint's initial value q^0, so <initial_energy(q), p>_h
    = <q^0, p^0>_h.
    '''

    def __init__(self, solver: HeatSolver, region: ObservationRegion):
        if region.grid != solver.grid or region.tg != solver.tg:
            raise ValueError("The observation region and the solver use different grids")
        self.solver = solver
        self.region = region
        self.applications = 0

    @property
    def dim(self) -> int:
        return self.solver.grid.n

    def observe(self, qT: np.ndarray) -> HalfStepSource:
        return observation_trace(self.solver.adjoint(qT), self.region)

    def observed_norm(self, qT: np.ndarray) -> float:
        '''
        ||q||_{L2(omega x E)} with the half-step quadrature
        '''
        return self.observe(qT).l2_norm()

    def gramian(self, qT: np.ndarray) -> np.ndarray:
        self.applications += 1
        source = inject(self.observe(qT), self.region)
        return self.solver.forward(np.zeros(self.dim), source).terminal.copy()

    def initial_energy(self, qT: np.ndarray) -> np.ndarray:
        q0 = self.solver.adjoint(qT).initial
        return self.solver.forward(q0).terminal.copy()


def gramian_apply(qT: np.ndarray, solver: HeatSolver, region: ObservationRegion) -> np.ndarray:
    return GramianOperator(solver, region).gramian(qT)


def initial_energy_apply(qT: np.ndarray, solver: HeatSolver) -> np.ndarray:
    q0 = solver.adjoint(qT).initial
    return solver.forward(q0).terminal.copy()


class ObservabilityEstimate(BaseModel):
    '''
    Description
    -----------
    Measured constant K in ||q(0)|| <= K ||q||_{L2(omega x E)}.

    Attributes
    ----------
    ```
    c_obs : float
    ```
    sqrt of the largest generalized eigenvalue of (N, Lambda + eps I)
    ```
    iterations : int
    ```
    Outer power iterations, 1 for the dense solve
    ```
    pencil_residual : float
    ```
    ||N q - rho D q|| / ||N q|| at the returned vector
    ```
    regularization_eps : float
    ```
    Absolute shift eps added to Lambda, eps_rel * trace(Lambda)/n
    ```
    method : str
    ```
    'dense' or 'power'
    ```
    stiff_damping : float
    ```
    |r|^N of the highest mode under the trapezoidal step
    '''
    model_config = ConfigDict(frozen=True)

    c_obs: float
    iterations: int
    pencil_residual: float
    regularization_eps: float
    eps_rel: float
    trace_scale: float
    converged: bool
    method: PencilMethod = 'power'
    inner_iterations: int = 0
    inner_failures: int = 0
    stiff_damping: float = 0.0

    @property
    def log_c_obs(self) -> float:
        return math.log(self.c_obs) if self.c_obs > 0 else -math.inf


def _resolve_method(method: str, dim: int, dense_limit: int) -> PencilMethod:
    if method == 'auto':
        return 'dense' if dim <= dense_limit else 'power'
    if method not in ('dense', 'power'):
        raise ValueError(f"Unknown pencil method {method!r}; expected 'auto', 'dense' or 'power'")
    return method


def _pencil_constant(
    numerator: LinearOperator,
    gramian: LinearOperator,
    dim: int,
    eps: float,
    tol: float,
    max_iter: int,
    seed: Any,
    probes: int,
    method: PencilMethod,
) -> ObservabilityEstimate:
    if not eps > 0:
        raise ValueError(f"The regularization eps must be positive, got {eps}")

    if method == 'dense':
        N, G = assemble(numerator, dim), assemble(gramian, dim)
        trace_scale = float(np.trace(G)) / dim
        eps_abs = eps * trace_scale
        try:
            result = dense_pencil_maximum(N, G + eps_abs * np.eye(dim))
        except LinAlgError as exc:
            raise SolverError(f"Lambda + eps I is not numerically positive definite (eps={eps_abs:.3e})") from exc
    else:
        rng = np.random.default_rng(seed)
        trace_scale = hutchinson_trace(gramian, dim, probes=probes, rng=rng) / dim
        eps_abs = eps * trace_scale
        result = pencil_power_iteration(
            numerator,
            lambda q: gramian(q) + eps_abs * q,
            dim,
            x0=rng.standard_normal(dim),
            tol=tol,
            max_iter=max_iter,
        )
    return ObservabilityEstimate(
        c_obs=math.sqrt(max(result.value, 0.0)),
        iterations=result.iterations,
        pencil_residual=result.residual,
        regularization_eps=eps_abs,
        eps_rel=eps,
        trace_scale=trace_scale,
        converged=result.converged,
        method=method,
        inner_iterations=result.inner_iterations,
        inner_failures=result.inner_failures,
    )


def cobs_estimate(
    solver: HeatSolver,
    region: ObservationRegion,
    eps: float = 1e-12,
    tol: float = 1e-8,
    max_iter: int = 50,
    seed: Any = 0,
    probes: int = 8,
    method: str = 'auto',
    dense_limit: int = DENSE_LIMIT,
) -> ObservabilityEstimate:
    '''
    Description
    -----------
    Estimates the observability constant over omega x E in its adjoint form
    as the largest generalized eigenvalue of (N, Lambda + eps_abs I), where
    eps_abs = eps * trace(Lambda)/n.

    With `method='dense'` both operators are assembled from n applications
    each and the pencil is reduced by Cholesky; the trace is exact. With
    `method='power'` the pencil is iterated matrix-free,
    q <- (Lambda + eps_abs I)^{-1} N q, with conjugate gradient inner
    solves and a trace from `probes` Rademacher probes; start vector and
    probes are drawn from `seed`. 'auto' picks 'dense' up to `dense_limit`
    unknowns.
    '''
    operator = GramianOperator(solver, region)
    chosen = _resolve_method(method, operator.dim, dense_limit)
    estimate = _pencil_constant(
        operator.initial_energy, operator.gramian, operator.dim, eps, tol, max_iter, seed, probes, chosen)
    survival = stiff_damping(solver)
    estimate = estimate.model_copy(update={'stiff_damping': survival})
    logger.info(
        f"c_obs={estimate.c_obs:.6e} ({chosen}, iterations={estimate.iterations}, "
        f"residual={estimate.pencil_residual:.2e}, converged={estimate.converged})")
    if not estimate.converged:
        logger.warning(
            f"c_obs estimate did not converge ({estimate.inner_failures} inner solves missed their tolerance)")
    if survival > STIFF_TOLERANCE:
        logger.warning(
            f"The highest mode keeps a factor {survival:.2e} over the horizon; c_obs is dominated by "
            f"undamped stiff modes. Increase the number of time steps")
    return estimate


class TwoStageConstant(BaseModel):
    '''
    Description
    -----------
    K1: ||q||_{Omega x (T/3, 2T/3)} <= K1 ||q||_{omega x E}
    K2: ||q(0)|| <= K2 ||q||_{Omega x (T/3, 2T/3)}
    '''
    model_config = ConfigDict(frozen=True)

    K1: float
    K2: float
    product: float
    converged: bool


def two_stage_constant(
    solver: HeatSolver,
    region: ObservationRegion,
    eps: float = 1e-12,
    tol: float = 1e-8,
    max_iter: int = 50,
    seed: Any = 0,
    probes: int = 8,
    method: str = 'auto',
    dense_limit: int = DENSE_LIMIT,
) -> TwoStageConstant:
    grid, tg = solver.grid, solver.tg
    middle = ObservationRegion(
        mask=SpaceMask(grid=grid, intervals=[(grid.a, grid.b)]),
        times=TimeSet(tg=tg, intervals=[(tg.T / 3.0, 2.0 * tg.T / 3.0)]),
    )
    observed = GramianOperator(solver, region)
    interior = GramianOperator(solver, middle)
    chosen = _resolve_method(method, grid.n, dense_limit)
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    seeds = seed.spawn(2)

    stage1 = _pencil_constant(interior.gramian, observed.gramian, grid.n, eps, tol, max_iter, seeds[0], probes, chosen)
    stage2 = _pencil_constant(interior.initial_energy, interior.gramian, grid.n, eps, tol, max_iter, seeds[1], probes,
                              chosen)
    return TwoStageConstant(
        K1=stage1.c_obs,
        K2=stage2.c_obs,
        product=stage1.c_obs * stage2.c_obs,
        converged=stage1.converged and stage2.converged,
    )
