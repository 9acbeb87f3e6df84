import logging
import math
from typing import Any, Callable, Dict, List

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from heatobs.analysis.carleman.inequality import calibrate_c1, min_tau_search, random_sine_corpus
from heatobs.analysis.carleman.weights import CarlemanParams, build_xi, tau0
from heatobs.analysis.control.base import cost_report, hum_solve
from heatobs.analysis.control.regular import RegularControlConfig, regular_control
from heatobs.analysis.observability.base import cobs_estimate, two_stage_constant
from heatobs.analysis.observability.bounds import bound_report
from heatobs.analysis.spectral.base import constant_fit, dyadic_ladder
from heatobs.cli.config import (
    CarlemanTaskParams,
    ExperimentConfig,
    HumParams,
    ObscostParams,
    RegctlParams,
    SolveParams,
    SpectralParams,
    TASK_PARAMS,
)
from heatobs.core.pde.base import HeatSolver, SolverError
from heatobs.core.pde.diagnostics import energy_report, field_frame
from heatobs.core.potential.norms import norms

logger = logging.getLogger(__name__)


class TaskOutput(BaseModel):
    '''
    Description
    -----------
    Result of one task run: a flat summary row (one sweep row, one summary
    JSON) and named tables written as CSV next to it.
    '''
    model_config = ConfigDict(arbitrary_types_allowed=True)

    row: Dict[str, Any] = Field(default_factory=dict)
    tables: Dict[str, pd.DataFrame] = Field(default_factory=dict)


class TaskCommand(BaseModel):
    '''
    Description
    -----------
    A named task wrapping a function of (config, seed) with its validated
    parameter model.

    Attributes
    ----------
    ```
    name : str
    ```
    The task name used on the command line and in configurations
    ```
    fn : Callable[[ExperimentConfig, int], TaskOutput]
    ```
    The function that runs the task
    ```
    parameters : type
    ```
    The pydantic model of the task parameters
    '''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    name: str
    desc: str = ""
    fn: Callable[[ExperimentConfig, int], TaskOutput]
    parameters: type

    def __call__(self, config: ExperimentConfig, seed: int) -> TaskOutput:
        if config.task != self.name:
            raise ValueError(f"Command '{self.name}' cannot run a '{config.task}' configuration")
        output = self.fn(config, seed)
        _require_finite(self.name, output.row)
        return output


class TaskLibrary(BaseModel):
    '''
    Registry of task commands keyed by name.
    '''
    model_config = ConfigDict(arbitrary_types_allowed=True)

    name: str = "heatobs"
    commands: Dict[str, TaskCommand] = Field(default_factory=dict)

    def register(self, name: str, desc: str = "") -> Callable:
        def decorator(fn: Callable[[ExperimentConfig, int], TaskOutput]) -> Callable:
            if name in self.commands:
                raise KeyError(f"Task '{name}' is already registered")
            self.commands[name] = TaskCommand(name=name, desc=desc, fn=fn, parameters=TASK_PARAMS[name])
            return fn
        return decorator

    def __getitem__(self, key: str) -> TaskCommand:
        return self.commands.__getitem__(key)

    def __contains__(self, key: str) -> bool:
        return key in self.commands

    def keys(self):
        return self.commands.keys()


# Results that may legitimately be infinite
_INFINITE_OK = {'log_cost', 'log_ratio'}


def _require_finite(task: str, row: Dict[str, Any]) -> None:
    for key, value in row.items():
        if key in _INFINITE_OK or isinstance(value, bool) or not isinstance(value, float):
            continue
        if not math.isfinite(value):
            raise SolverError(f"Task '{task}' produced a non-finite {key}")


def _norm_columns(V_norms) -> Dict[str, Any]:
    return {
        'V_sup': V_norms.sup,
        'V_grad_sup': V_norms.grad_sup,
        'V_dt_sup': V_norms.dt_sup,
        'V_neg_sup': V_norms.neg_sup,
        'V_triple': V_norms.triple,
        'norms_approximate': V_norms.approximate,
    }


library = TaskLibrary()


@library.register('solve', "Forward (or adjoint) solve from the configured data")
def run_solve(config: ExperimentConfig, seed: int) -> TaskOutput:
    params: SolveParams = config.task_params
    grid, tg = config.grid, config.tg
    solver = HeatSolver(grid=grid, tg=tg, potential=config.potential)
    data = params.initial.build(grid, seed)
    field = solver.adjoint(data) if params.adjoint else solver.forward(data)
    energy = energy_report(field)
    row = {
        'T': tg.T,
        'n': grid.n,
        'N': tg.N,
        'initial_norm': grid.norm(field.initial),
        'terminal_norm': grid.norm(field.terminal),
        'max_energy': energy.max_energy,
        'gradient_energy': energy.gradient_energy,
    }
    return TaskOutput(row=row, tables={'field': field_frame(field)})


@library.register('hum', "Penalized HUM null control on omega x E")
def run_hum(config: ExperimentConfig, seed: int) -> TaskOutput:
    params: HumParams = config.task_params
    grid, tg = config.grid, config.tg
    solver = HeatSolver(grid=grid, tg=tg, potential=config.potential)
    y0 = params.initial.build(grid, seed)
    solution = hum_solve(y0, solver, config.region(), eps=params.eps, cg_tol=params.cg_tol, max_iter=params.max_iter)
    V_norms = norms(config.potential, grid, tg)
    cost = cost_report(solution, tg.T, V_norms, params.C)
    row = {
        'T': tg.T,
        'terminal_ratio': solution.terminal_ratio,
        'cost_l2': solution.cost_l2,
        'log_cost': cost.log_cost,
        'log_bound': cost.log_bound,
        'log_ratio': cost.log_ratio,
        'cg_iterations': solution.cg_iterations,
        'cg_residual': solution.cg_residual,
        'converged': solution.converged,
        'optimality_residual': solution.optimality_residual,
        **_norm_columns(V_norms),
    }
    return TaskOutput(row=row, tables={'control': field_frame(solution.h, 'h')})


@library.register('regctl', "Regular control assembled from cutoffs and a HUM control")
def run_regctl(config: ExperimentConfig, seed: int) -> TaskOutput:
    params: RegctlParams = config.task_params
    if len(config.omega) != 1:
        raise ValueError(f"The regular control needs a single omega interval, got {len(config.omega)}")
    grid, tg = config.grid, config.tg
    solver = HeatSolver(grid=grid, tg=tg, potential=config.potential)
    y0 = params.initial.build(grid, seed)
    control_config = RegularControlConfig(**params.model_dump(exclude={'initial'}))
    result = regular_control(y0, solver, omega=config.omega[0], config=control_config)
    row = {
        'T': tg.T,
        'residual_norm': result.residual_norm,
        'terminal_ratio': result.terminal_ratio,
        'terminal_defect': result.terminal_defect,
        'hum_terminal_ratio': result.hum_terminal_ratio,
        'holder_sup': result.holder.sup_norm,
        'holder_seminorm': result.holder.seminorm,
        'holder_norm': result.holder_norm,
        'cg_iterations': result.cg_iterations,
        'preroll_levels': result.preroll_levels,
    }
    return TaskOutput(row=row, tables={'control': field_frame(result.h_reg, 'h'), 'state': field_frame(result.y)})


@library.register('obscost', "Measured observability constant against the bound formulas")
def run_obscost(config: ExperimentConfig, seed: int) -> TaskOutput:
    params: ObscostParams = config.task_params
    grid, tg = config.grid, config.tg
    solver = HeatSolver(grid=grid, tg=tg, potential=config.potential)
    region = config.region()
    estimate = cobs_estimate(solver, region, eps=params.eps, tol=params.tol, max_iter=params.max_iter,
                             seed=seed, probes=params.probes, method=params.method,
                             dense_limit=params.dense_limit)
    V_norms = norms(config.potential, grid, tg)
    bounds = bound_report(tg.T, V_norms, params.C)
    row = {
        'T': tg.T,
        'c_obs': estimate.c_obs,
        'log_c_obs': estimate.log_c_obs,
        'iterations': estimate.iterations,
        'pencil_residual': estimate.pencil_residual,
        'converged': estimate.converged,
        'method': estimate.method,
        'inner_failures': estimate.inner_failures,
        'stiff_damping': estimate.stiff_damping,
        'regularization_eps': estimate.regularization_eps,
        'log_bound_new': bounds.log_bound_new,
        'log_bound_new_full': bounds.log_bound_new_full,
        'log_bound_classical': bounds.log_bound_classical,
        'large_norm': bounds.large_norm,
        **_norm_columns(V_norms),
    }
    if params.two_stage:
        stages = two_stage_constant(solver, region, eps=params.eps, tol=params.tol, max_iter=params.max_iter,
                                    seed=seed, probes=params.probes, method=params.method,
                                    dense_limit=params.dense_limit)
        row.update({'K1': stages.K1, 'K2': stages.K2, 'K1K2': stages.product})
    return TaskOutput(row=row)


@library.register('carleman', "Minimal tau search of the Carleman inequality on a random corpus")
def run_carleman(config: ExperimentConfig, seed: int) -> TaskOutput:
    params: CarlemanTaskParams = config.task_params
    grid, tg = config.grid, config.tg
    lo, hi = config.omega[0]
    xi = build_xi(grid, params.center if params.center is not None else 0.5 * (lo + hi))
    weights_params = CarlemanParams(s=params.s, lam=params.lam)
    mask = config.mask()
    corpus = random_sine_corpus(grid, tg, params.corpus_size, seed=seed % 2 ** 32, modes=params.modes)

    C1 = params.C1
    if C1 is None:
        C1 = calibrate_c1(corpus, config.potential, xi, weights_params, mask, margin=params.margin,
                          adjoint_form=params.adjoint_form)
    search_params = weights_params.model_copy(update={'C1': C1})
    result = min_tau_search(corpus, config.potential, xi, search_params, mask, params.tau_hi,
                            iterations=params.iterations, adjoint_form=params.adjoint_form)
    V_norms = norms(config.potential, grid, tg)
    row = {
        'T': tg.T,
        's': params.s,
        'lambda': params.lam,
        'C1': C1,
        'adjoint_form': params.adjoint_form,
        'found': result.found,
        'tau_star': result.tau_star,
        'verified': result.verified,
        'refuted': result.refuted,
        'degenerate': result.degenerate,
        'evaluations': result.evaluations,
        'tau0': tau0(tg.T, V_norms),
        **_norm_columns(V_norms),
    }
    return TaskOutput(row=row)


@library.register('spectral', "Window ratio constants over a dyadic lambda ladder")
def run_spectral(config: ExperimentConfig, seed: int) -> TaskOutput:
    params: SpectralParams = config.task_params
    grid = config.grid
    fit = constant_fit(
        config.potential,
        grid,
        config.mask(),
        dyadic_ladder(params.rungs, params.base),
        amplitudes=params.amplitudes,
        shift_ladder=params.shift_ladder,
    )
    table = pd.DataFrame([row.model_dump() for row in fit.rows],
                         columns=['lambda_cut', 'M', 'omega_measure', 'max_ratio', 'K', 'window_size'])
    first = fit.lambda_fits[0]
    row = {
        'omega_measure': config.mask().measure,
        'slope_sqrt_lambda': first.slope,
        'intercept': first.intercept,
        'r_squared': first.r_squared,
        'K_max': max(r.K for r in fit.rows),
    }
    return TaskOutput(row=row, tables={'spectral': table})


def task_names() -> List[str]:
    return list(library.keys())
