import logging
from typing import Any, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from heatobs.analysis.control.base import hum_solve
from heatobs.analysis.control.cutoff import SpaceCutoff, TimeCutoff
from heatobs.core.mesh.base import ObservationRegion, SpaceGrid, TimeGrid
from heatobs.core.pde.base import HeatSolver, SpaceTimeField, centered_gradient

logger = logging.getLogger(__name__)

Interval = Tuple[float, float]


class NestedIntervals(BaseModel):
    '''
    Description
    -----------
    omega2 inside omega3 inside omega4 inside omega, each strictly. The HUM
    control lives on omega2 and phi = 1 on omega4.
    '''
    model_config = ConfigDict(frozen=True, extra='forbid')

    omega: Interval
    omega4: Interval
    omega3: Interval
    omega2: Interval

    @model_validator(mode='after')
    def validate_nesting(self) -> 'NestedIntervals':
        chain = [self.omega, self.omega4, self.omega3, self.omega2]
        for (lo, hi), (lo_in, hi_in) in zip(chain, chain[1:]):
            if not lo < lo_in < hi_in < hi:
                raise ValueError(f"Interval ({lo_in}, {hi_in}) is not strictly inside ({lo}, {hi})")
        return self

    def collars(self):
        chain = [self.omega, self.omega4, self.omega3, self.omega2]
        for (lo, hi), (lo_in, hi_in) in zip(chain, chain[1:]):
            yield (lo, lo_in)
            yield (hi_in, hi)


def default_nested_intervals(omega: Interval) -> NestedIntervals:
    '''
    Equal collars of width |omega|/8 on each side of each level.
    '''
    lo, hi = omega
    c = (hi - lo) / 8.0
    return NestedIntervals(
        omega=(lo, hi),
        omega4=(lo + c, hi - c),
        omega3=(lo + 2 * c, hi - 2 * c),
        omega2=(lo + 3 * c, hi - 3 * c),
    )


def validate_nesting(grid: SpaceGrid, nested: NestedIntervals, min_nodes: int = 2) -> None:
    lo, hi = nested.omega
    if lo < grid.a or hi > grid.b:
        raise ValueError(f"omega=({lo}, {hi}) leaves the domain ({grid.a}, {grid.b})")
    nodes = grid.nodes
    for left, right in nested.collars():
        count = int(np.count_nonzero((nodes >= left) & (nodes < right)))
        if count < min_nodes:
            raise ValueError(f"Collar ({left:.6g}, {right:.6g}) holds {count} grid nodes, need at least {min_nodes}")


class HolderReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float
    radius: int
    sup_norm: float
    seminorm: float

    @property
    def norm(self) -> float:
        return self.sup_norm + self.seminorm


def holder_norm(field: SpaceTimeField, alpha: float, radius: int = 8) -> HolderReport:
    '''
    Description
    -----------
    Discrete C^{alpha, alpha/2} norm: sup norm plus the largest
    |f(p) - f(p')| / (|x - x'| + |t - t'|^{1/2})^alpha over node/level pairs
    at most `radius` nodes and `radius` levels apart. The localized seminorm
    is a lower bound of the full one.
    '''
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if radius < 1:
        raise ValueError(f"radius must be at least 1, got {radius}")

    F = field.values
    h, dt = field.grid.h, field.tg.dt
    levels, nodes = F.shape
    seminorm = 0.0
    for dn in range(0, min(radius, levels - 1) + 1):
        for di in range(-min(radius, nodes - 1), min(radius, nodes - 1) + 1):
            if dn == 0 and di <= 0:
                continue
            if di >= 0:
                first, second = F[:levels - dn, :nodes - di], F[dn:, di:]
            else:
                first, second = F[:levels - dn, -di:], F[dn:, :nodes + di]
            distance = (abs(di) * h + np.sqrt(dn * dt)) ** alpha
            seminorm = max(seminorm, float(np.abs(second - first).max()) / distance)
    return HolderReport(alpha=alpha, radius=radius, sup_norm=float(np.abs(F).max()), seminorm=seminorm)


class RegularControl(BaseModel):
    '''
    Description
    -----------
    Control assembled from a HUM control on omega2 and the cutoffs chi, phi:

        u      free solution from y0
        y_hat  = y_tilde - chi u       (y_tilde: HUM trajectory on omega2)
        y      = (1 - phi) y_hat + chi u
        h      = phi chi' u + phi'' y_hat + 2 phi' grad y_hat

    Attributes
    ----------
    ```
    h_reg : SpaceTimeField
    ```
    Node-level control, zero outside omega and at t = 0
    ```
    y : SpaceTimeField
    ```
    Assembled state
    ```
    residual_norm : float
    ```
    Discrete L2(Q_T) norm of D_t y + A y_bar - h_bar at half-steps
    ```
    holder : HolderReport
    ```
    Discrete C^{alpha, alpha/2} norm of h_reg
    ```
    terminal_defect : float
    ```
    max |h_reg(., T)|, set by the HUM terminal mismatch y_tilde(T)
    '''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    h_reg: SpaceTimeField
    y: SpaceTimeField
    residual_norm: float
    holder: HolderReport
    nested: NestedIntervals
    ramp_fraction: float
    initial_norm: float
    terminal_ratio: float
    terminal_defect: float
    hum_terminal_ratio: float
    cg_iterations: int
    preroll_levels: int = 0

    @property
    def holder_norm(self) -> float:
        return self.holder.norm


class RegularControlConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    ramp_fraction: float = Field(default=0.25, gt=0.0, lt=0.5)
    alpha: float = Field(default=0.5, gt=0.0, lt=1.0)
    holder_radius: int = Field(default=8, ge=1)
    eps: float = Field(default=0.0, ge=0.0)
    cg_tol: float = Field(default=1e-11, gt=0.0)
    max_iter: int = Field(default=2000, ge=1)
    preroll: bool = False
    preroll_fraction: float = Field(default=0.1, gt=0.0, lt=1.0)


def _assemble(
    y0: np.ndarray,
    solver: HeatSolver,
    nested: NestedIntervals,
    config: RegularControlConfig,
) -> Tuple[np.ndarray, np.ndarray, Any]:
    grid, tg = solver.grid, solver.tg
    u = solver.forward(y0, role='free').values
    region2 = ObservationRegion.build(grid, tg, [nested.omega2])
    hum = hum_solve(y0, solver, region2, eps=config.eps, cg_tol=config.cg_tol, max_iter=config.max_iter)

    chi = TimeCutoff(T=tg.T, ramp_fraction=config.ramp_fraction)
    phi = SpaceCutoff(grid=grid, inner=nested.omega4, outer=nested.omega)
    times, nodes = tg.times, grid.nodes
    chi_t, dchi_t = chi.value(times)[:, None], chi.derivative(times)[:, None]
    phi_x, dphi_x, ddphi_x = phi.value(nodes)[None, :], phi.d1(nodes)[None, :], phi.d2(nodes)[None, :]

    y_hat = hum.trajectory.values - chi_t * u
    y = (1.0 - phi_x) * y_hat + chi_t * u
    h = phi_x * dchi_t * u + ddphi_x * y_hat + 2.0 * dphi_x * centered_gradient(y_hat, grid.h)
    return y, h, hum


def regular_control(
    y0: Any,
    solver: HeatSolver,
    nested: Optional[NestedIntervals] = None,
    omega: Optional[Interval] = None,
    config: Optional[RegularControlConfig] = None,
) -> RegularControl:
    '''
    Description
    -----------
    Runs the regular-control construction on omega (or on explicit nested
    intervals). With `config.preroll` the datum first evolves freely for a
    fraction of the horizon and the construction runs on the remainder
    with the time-shifted potential.
    '''
    config = config or RegularControlConfig()
    if nested is None:
        if omega is None:
            raise ValueError("Either nested intervals or omega must be given")
        nested = default_nested_intervals(omega)
    grid, tg = solver.grid, solver.tg
    validate_nesting(grid, nested)
    y0 = np.asarray(y0, dtype=float)

    pre_levels = 0
    if config.preroll:
        pre_levels = int(round(config.preroll_fraction * tg.N))
        if not 0 < pre_levels < tg.N:
            raise ValueError(f"Pre-roll of {config.preroll_fraction} * N = {pre_levels} levels is not inside (0, {tg.N})")

    if pre_levels:
        offset = pre_levels * tg.dt
        pre = HeatSolver(grid=grid, tg=TimeGrid(T=offset, N=pre_levels), potential=solver.potential)
        post = HeatSolver(
            grid=grid,
            tg=TimeGrid(T=tg.T - offset, N=tg.N - pre_levels),
            potential=solver.potential.time_shifted(offset),
        )
        rolled = pre.forward(y0, role='free').values
        y_post, h_post, hum = _assemble(rolled[-1], post, nested, config)
        y = np.concatenate([rolled[:-1], y_post])
        h = np.concatenate([np.zeros((pre_levels, grid.n)), h_post])
    else:
        y, h, hum = _assemble(y0, solver, nested, config)

    y_field = SpaceTimeField(grid=grid, tg=tg, values=y, role='state')
    h_field = SpaceTimeField(grid=grid, tg=tg, values=h, role='control')
    residual = solver.residual_norm(y_field, h_field.midpoints())

    initial_norm = grid.norm(y0)
    terminal = grid.norm(y[-1])
    result = RegularControl(
        h_reg=h_field,
        y=y_field,
        residual_norm=residual,
        holder=holder_norm(h_field, config.alpha, config.holder_radius),
        nested=nested,
        ramp_fraction=config.ramp_fraction,
        initial_norm=initial_norm,
        terminal_ratio=terminal / initial_norm if initial_norm > 0 else 0.0,
        terminal_defect=float(np.abs(h[-1]).max()),
        hum_terminal_ratio=hum.terminal_ratio,
        cg_iterations=hum.cg_iterations,
        preroll_levels=pre_levels,
    )
    logger.info(
        f"Regular control: residual={residual:.3e}, terminal_ratio={result.terminal_ratio:.3e}, "
        f"holder_norm={result.holder_norm:.4e}")
    return result
