import logging
from typing import Any, Literal, Optional

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    PrivateAttr,
    field_validator,
    model_validator,
)
from scipy.linalg import LinAlgError, eigvalsh_tridiagonal, solve_banded

from heatobs.core.mesh.base import ObservationRegion, SpaceGrid, SpaceMask, TimeGrid
from heatobs.core.potential.base import ConstantPotential, Potential
from heatobs.core.potential.norms import evaluate_midstep

logger = logging.getLogger(__name__)

FieldRole = Literal['state', 'adjoint', 'free', 'control', 'generic']


class SolverError(ArithmeticError):
    '''
    Raised when a time step cannot be carried out. `step` is the 0-based
    index of the half-step (t_n, t_{n+1}) that failed, when known.
    '''
    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class SingularStepError(SolverError):
    pass


def _readonly(values: Any) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


def laplacian(u: np.ndarray, h: float) -> np.ndarray:
    '''
    Dirichlet second difference along the last axis, boundary values zero.
    '''
    out = -2.0 * u
    out[..., 1:] += u[..., :-1]
    out[..., :-1] += u[..., 1:]
    return out / (h * h)


def centered_gradient(u: np.ndarray, h: float) -> np.ndarray:
    padded = np.zeros(u.shape[:-1] + (u.shape[-1] + 2,))
    padded[..., 1:-1] = u
    return (padded[..., 2:] - padded[..., :-2]) / (2.0 * h)


class SpaceTimeField(BaseModel):
    '''
    Description
    -----------
    Values y_i^n on interior nodes i = 1..n and time levels n = 0..N. The
    boundary values are identically zero and not stored.

    Attributes
    ----------
    ```
    grid : SpaceGrid
    tg : TimeGrid
    ```
    The tensor grid the field lives on
    ```
    values : np.ndarray
    ```
    Read-only array of shape (N + 1, n)
    ```
    role : str
    ```
    One of state, adjoint, free, control, generic
    '''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: SpaceGrid
    tg: TimeGrid
    values: np.ndarray
    role: FieldRole = 'generic'

    @field_validator('values', mode='before')
    @classmethod
    def _cast_values(cls, value: Any) -> np.ndarray:
        return _readonly(value)

    @model_validator(mode='after')
    def validate_field(self) -> 'SpaceTimeField':
        expected = (self.tg.N + 1, self.grid.n)
        if self.values.shape != expected:
            raise ValueError(f"Field values have shape {self.values.shape}, expected {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"Field with role '{self.role}' has non-finite entries")
        return self

    @property
    def initial(self) -> np.ndarray:
        return self.values[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.values[-1]

    def level(self, n: int) -> np.ndarray:
        return self.values[n]

    def at_time(self, t: float) -> np.ndarray:
        return self.values[self.tg.level(t)]

    def midpoints(self) -> np.ndarray:
        '''
        Half-step averages (w^n + w^{n+1})/2, shape (N, n)
        '''
        return 0.5 * (self.values[1:] + self.values[:-1])

    def level_norms(self) -> np.ndarray:
        return np.sqrt(self.grid.h * np.sum(self.values ** 2, axis=1))

    def l2_norm(self) -> float:
        '''
        Space-time norm with quadrature h*dt over the half-step averages
        '''
        return float(np.sqrt(self.grid.h * self.tg.dt * np.sum(self.midpoints() ** 2)))

    @classmethod
    def zeros(cls, grid: SpaceGrid, tg: TimeGrid, role: FieldRole = 'generic') -> 'SpaceTimeField':
        return cls(grid=grid, tg=tg, values=np.zeros((tg.N + 1, grid.n)), role=role)


class HalfStepSource(BaseModel):
    '''
    Description
    -----------
    Source values f_i^{n+1/2} on interior nodes and half-steps, shape (N, n).
    When a mask is attached every column outside it must vanish.
    '''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: SpaceGrid
    tg: TimeGrid
    values: np.ndarray
    mask: Optional[SpaceMask] = None

    @field_validator('values', mode='before')
    @classmethod
    def _cast_values(cls, value: Any) -> np.ndarray:
        return _readonly(value)

    @model_validator(mode='after')
    def validate_source(self) -> 'HalfStepSource':
        expected = (self.tg.N, self.grid.n)
        if self.values.shape != expected:
            raise ValueError(f"Source values have shape {self.values.shape}, expected {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Source has non-finite entries")
        if self.mask is not None:
            if self.mask.grid != self.grid:
                raise ValueError("Source mask refers to a different space grid")
            outside = self.values[:, ~self.mask.mask]
            if outside.size and np.any(outside != 0):
                raise ValueError(f"Source does not vanish outside the mask {self.mask.intervals}")
        return self

    def l2_norm(self) -> float:
        return float(np.sqrt(self.grid.h * self.tg.dt * np.sum(self.values ** 2)))

    @classmethod
    def zeros(cls, grid: SpaceGrid, tg: TimeGrid, mask: Optional[SpaceMask] = None) -> 'HalfStepSource':
        return cls(grid=grid, tg=tg, values=np.zeros((tg.N, grid.n)), mask=mask)


class HeatSolver(BaseModel):
    '''
    Description
    -----------
    Trapezoidal time stepping for y_t - y_xx + V y = f with homogeneous
    Dirichlet data and the potential frozen at half-steps:

        (I + dt/2 A_n) y^{n+1} = (I - dt/2 A_n) y^n + dt f^{n+1/2},
        A_n = -Delta_h + diag(V(x_i, t_{n+1/2}))

    The adjoint runs the same matrices backward,

        (I + dt/2 A_n) q^n = (I - dt/2 A_n) q^{n+1},

    which makes <y^N, q^N> - <y^0, q^0> = dt sum_n <f^{n+1/2}, (q^n + q^{n+1})/2>
    hold exactly. Step matrices are assembled on first use.

    Attributes
    ----------
    ```
    grid : SpaceGrid
    tg : TimeGrid
    potential : Potential
    ```

    Methods
    -------
    ```
    def forward(y0, source=None) -> SpaceTimeField
    def adjoint(qT) -> SpaceTimeField
    def residual(y, source=None) -> np.ndarray
    ```
    '''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: SpaceGrid
    tg: TimeGrid
    potential: Potential = ConstantPotential()

    _midstep: Optional[np.ndarray] = PrivateAttr(default=None)
    _bands: Optional[np.ndarray] = PrivateAttr(default=None)

    @property
    def midstep_potential(self) -> np.ndarray:
        '''
        V(x_i, t_{n+1/2}) with shape (N, n)
        '''
        self._prepare()
        return self._midstep

    def _prepare(self) -> None:
        if self._bands is not None:
            return
        h, dt, n, N = self.grid.h, self.tg.dt, self.grid.n, self.tg.N
        midstep = np.ascontiguousarray(evaluate_midstep(self.potential, self.grid, self.tg).T)
        if not np.all(np.isfinite(midstep)):
            raise SolverError("The potential has non-finite half-step values")

        off = -0.5 * dt / (h * h)
        bands = np.empty((N, 3, n))
        bands[:, 0, :] = off
        bands[:, 2, :] = off
        bands[:, 0, 0] = 0.0
        bands[:, 2, -1] = 0.0
        bands[:, 1, :] = 1.0 + dt / (h * h) + 0.5 * dt * midstep

        # -Delta_h is positive definite, so only dt * ||V_-|| >= 2 can make a step singular
        negative = np.maximum(-midstep, 0.0).max(axis=1)
        for step in np.flatnonzero(dt * negative >= 2.0):
            diagonal = bands[step, 1]
            eigenvalues = eigvalsh_tridiagonal(diagonal, np.full(n - 1, off))
            scale = np.abs(diagonal).max() + 2.0 * abs(off)
            if np.abs(eigenvalues).min() <= 64 * np.finfo(float).eps * scale:
                raise SingularStepError(
                    f"Step matrix is singular at step {step} (dt * ||V_-|| = {dt * negative[step]:.4g})",
                    step=int(step),
                )
        self._midstep = midstep
        self._bands = bands

    def apply_operator(self, u: np.ndarray, step: int) -> np.ndarray:
        '''
        A_n u for the half-step `step`
        '''
        self._prepare()
        return -laplacian(u, self.grid.h) + self._midstep[step] * u

    def _solve(self, step: int, rhs: np.ndarray) -> np.ndarray:
        try:
            x = solve_banded((1, 1), self._bands[step], rhs, check_finite=False)
        except (LinAlgError, ValueError) as exc:
            raise SingularStepError(f"Step solve failed at step {step}: {exc}", step=step) from exc
        if not np.all(np.isfinite(x)):
            raise SingularStepError(f"Step solve produced non-finite values at step {step}", step=step)
        return x

    def _source_values(self, source: Optional[Any]) -> Optional[np.ndarray]:
        if source is None:
            return None
        values = source.values if isinstance(source, HalfStepSource) else np.asarray(source, dtype=float)
        if values.shape != (self.tg.N, self.grid.n):
            raise ValueError(f"Source has shape {values.shape}, expected {(self.tg.N, self.grid.n)}")
        return values

    def _check_vector(self, v: Any, name: str) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"{name} must have length {self.grid.n}, got shape {v.shape}")
        return v

    def forward(self, y0: Any, source: Optional[Any] = None, role: FieldRole = 'state') -> SpaceTimeField:
        self._prepare()
        y0 = self._check_vector(y0, "y0")
        f = self._source_values(source)
        dt = self.tg.dt

        y = np.empty((self.tg.N + 1, self.grid.n))
        y[0] = y0
        for step in range(self.tg.N):
            rhs = y[step] - 0.5 * dt * self.apply_operator(y[step], step)
            if f is not None:
                rhs += dt * f[step]
            y[step + 1] = self._solve(step, rhs)
        return SpaceTimeField(grid=self.grid, tg=self.tg, values=y, role=role)

    def adjoint(self, qT: Any) -> SpaceTimeField:
        self._prepare()
        qT = self._check_vector(qT, "qT")
        dt = self.tg.dt

        q = np.empty((self.tg.N + 1, self.grid.n))
        q[-1] = qT
        for step in reversed(range(self.tg.N)):
            rhs = q[step + 1] - 0.5 * dt * self.apply_operator(q[step + 1], step)
            q[step] = self._solve(step, rhs)
        return SpaceTimeField(grid=self.grid, tg=self.tg, values=q, role='adjoint')

    def residual(self, y: SpaceTimeField, source: Optional[Any] = None) -> np.ndarray:
        '''
        Half-step residual (y^{n+1} - y^n)/dt + A_n (y^n + y^{n+1})/2 - f^{n+1/2},
        shape (N, n). Zero to round-off for fields produced by `forward`.
        '''
        self._prepare()
        values = y.values
        mid = 0.5 * (values[1:] + values[:-1])
        residual = (values[1:] - values[:-1]) / self.tg.dt - laplacian(mid, self.grid.h) + self._midstep * mid
        f = self._source_values(source)
        if f is not None:
            residual = residual - f
        return residual

    def residual_norm(self, y: SpaceTimeField, source: Optional[Any] = None) -> float:
        r = self.residual(y, source)
        return float(np.sqrt(self.grid.h * self.tg.dt * np.sum(r ** 2)))


def forward_solve(
    y0: Any,
    V: Potential,
    grid: SpaceGrid,
    tg: TimeGrid,
    source: Optional[HalfStepSource] = None,
) -> SpaceTimeField:
    return HeatSolver(grid=grid, tg=tg, potential=V).forward(y0, source)


def adjoint_solve(qT: Any, V: Potential, grid: SpaceGrid, tg: TimeGrid) -> SpaceTimeField:
    return HeatSolver(grid=grid, tg=tg, potential=V).adjoint(qT)


def observation_trace(q: SpaceTimeField, region: ObservationRegion) -> HalfStepSource:
    '''
    Masked half-step averages of q scaled by (w_n/dt)^{1/2}
    '''
    values = region.times.factors[:, None] * np.where(region.mask.mask[None, :], q.midpoints(), 0.0)
    return HalfStepSource(grid=q.grid, tg=q.tg, values=values, mask=region.mask)


def inject(trace: HalfStepSource, region: ObservationRegion) -> HalfStepSource:
    '''
    Turns an observation trace into the state source (w_n/dt)^{1/2} * trace
    '''
    values = region.times.factors[:, None] * trace.values
    return HalfStepSource(grid=trace.grid, tg=trace.tg, values=values, mask=region.mask)
