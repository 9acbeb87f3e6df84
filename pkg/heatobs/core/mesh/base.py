import logging
import math
from typing import Any, Optional, Sequence, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    field_validator,
    model_validator,
)

logger = logging.getLogger(__name__)

Interval = Tuple[float, float]

# Relative slack used when comparing interval endpoints against domain bounds
_ENDPOINT_TOL = 1e-12


def _normalize_intervals(intervals: Sequence[Sequence[float]]) -> Tuple[Interval, ...]:
    '''
    Casts an interval list to a sorted tuple of float pairs, rejecting
    empty or reversed intervals and overlaps.
    '''
    pairs = []
    for interval in intervals:
        if len(interval) != 2:
            raise ValueError(f"Interval {interval} must have exactly two endpoints")
        lo, hi = float(interval[0]), float(interval[1])
        if not (math.isfinite(lo) and math.isfinite(hi)):
            raise ValueError(f"Interval ({lo}, {hi}) has non-finite endpoints")
        if hi <= lo:
            raise ValueError(f"Interval ({lo}, {hi}) must satisfy lo < hi")
        pairs.append((lo, hi))

    pairs.sort()
    for (lo0, hi0), (lo1, hi1) in zip(pairs, pairs[1:]):
        if lo1 < hi0:
            raise ValueError(f"Intervals ({lo0}, {hi0}) and ({lo1}, {hi1}) overlap")
    return tuple(pairs)


def _check_inside(intervals: Tuple[Interval, ...], lo: float, hi: float, what: str) -> None:
    tol = _ENDPOINT_TOL * max(1.0, abs(lo), abs(hi))
    for a, b in intervals:
        if a < lo - tol or b > hi + tol:
            raise ValueError(f"Interval ({a}, {b}) is not inside the {what} [{lo}, {hi}]")


def _overlap(intervals: Tuple[Interval, ...], lo: float, hi: float) -> float:
    '''
    Exact length of the intersection of an interval union with (lo, hi).
    '''
    total = 0.0
    for a, b in intervals:
        total += max(0.0, min(b, hi) - max(a, lo))
    return total


class SpaceGrid(BaseModel):
    '''
    Description
    -----------
    Uniform grid of interior nodes on the interval (a, b). Boundary nodes
    carry homogeneous Dirichlet data and are not stored.

    Attributes
    ----------
    ```
    a : float
    ```
    Left endpoint
    ```
    b : float
    ```
    Right endpoint, b > a
    ```
    n : int
    ```
    Number of interior nodes, n >= 2

    Methods
    -------
    ```
    h -> float
    ```
    Grid spacing (b - a)/(n + 1)
    ```
    nodes -> np.ndarray
    ```
    Interior nodes x_i = a + i*h for i = 1..n
    '''
    model_config = ConfigDict(frozen=True, extra='forbid')

    a: float = Field(default=0.0, description="Left endpoint of the spatial domain")
    b: float = Field(default=1.0, description="Right endpoint of the spatial domain")
    n: int = Field(description="Number of interior nodes")

    @model_validator(mode='after')
    def validate_grid(self) -> 'SpaceGrid':
        if self.n < 2:
            raise ValueError(f"A space grid needs at least 2 interior nodes, got n={self.n}")
        if not self.b > self.a:
            raise ValueError(f"Domain endpoints must satisfy b > a, got a={self.a}, b={self.b}")
        return self

    @property
    def length(self) -> float:
        return self.b - self.a

    @property
    def h(self) -> float:
        return (self.b - self.a) / (self.n + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.a + self.h * np.arange(1, self.n + 1)

    @property
    def closed_nodes(self) -> np.ndarray:
        '''
        Nodes including both boundary points
        '''
        return self.a + self.h * np.arange(0, self.n + 2)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        '''
        Discrete inner product <u, v>_h = h * sum(u_i v_i)
        '''
        return float(self.h * np.dot(u, v))

    def norm(self, u: np.ndarray) -> float:
        return math.sqrt(max(self.inner(u, u), 0.0))


class TimeGrid(BaseModel):
    '''
    Description
    -----------
    Uniform partition of (0, T) into N steps.

    Attributes
    ----------
    ```
    T : float
    ```
    Time horizon, T > 0
    ```
    N : int
    ```
    Number of steps, N >= 1
    '''
    model_config = ConfigDict(frozen=True, extra='forbid')

    T: float = Field(description="Time horizon")
    N: int = Field(description="Number of time steps")

    @model_validator(mode='after')
    def validate_grid(self) -> 'TimeGrid':
        if not self.T > 0:
            raise ValueError(f"The time horizon must be positive, got T={self.T}")
        if self.N < 1:
            raise ValueError(f"A time grid needs at least one step, got N={self.N}")
        return self

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        # T * n / N keeps t_N == T exactly
        return self.T * np.arange(self.N + 1) / self.N

    @property
    def half_times(self) -> np.ndarray:
        return self.T * (np.arange(self.N) + 0.5) / self.N

    def level(self, t: float, tol: float = 1e-9) -> int:
        '''
        Index of the time level equal to t, raising if t is off the grid.
        '''
        position = t / self.dt
        index = int(round(position))
        if abs(position - index) > tol or not 0 <= index <= self.N:
            raise ValueError(f"Time {t} is not a level of the time grid (dt={self.dt}, N={self.N})")
        return index


class SpaceMask(BaseModel):
    '''
    Description
    -----------
    Observation set in space, a finite union of intervals. Node membership
    uses the closed-open convention [lo, hi).

    Attributes
    ----------
    ```
    grid : SpaceGrid
    ```
    The grid the mask acts on
    ```
    intervals : Tuple[Tuple[float, float], ...]
    ```
    Disjoint intervals inside [a, b], stored sorted

    Methods
    -------
    ```
    indices -> Tuple[int, ...]
    ```
    1-based labels i of the interior nodes x_i inside the union
    ```
    mask -> np.ndarray
    ```
    Boolean membership array over the interior nodes
    ```
    measure -> float
    ```
    Exact total length of the intervals
    '''
    model_config = ConfigDict(frozen=True, extra='forbid')

    grid: SpaceGrid
    intervals: Tuple[Interval, ...]

    _mask: np.ndarray = PrivateAttr(default=None)

    @field_validator('intervals', mode='before')
    @classmethod
    def _cast_intervals(cls, value: Any) -> Tuple[Interval, ...]:
        return _normalize_intervals(value)

    @model_validator(mode='after')
    def validate_mask(self) -> 'SpaceMask':
        _check_inside(self.intervals, self.grid.a, self.grid.b, "spatial domain")
        return self

    def model_post_init(self, __context: Any) -> None:
        nodes = self.grid.nodes
        member = np.zeros(self.grid.n, dtype=bool)
        for lo, hi in self.intervals:
            member |= (nodes >= lo) & (nodes < hi)
        member.setflags(write=False)
        self._mask = member

    @property
    def mask(self) -> np.ndarray:
        return self._mask

    @property
    def indices(self) -> Tuple[int, ...]:
        return tuple(int(i) + 1 for i in np.flatnonzero(self._mask))

    @property
    def measure(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))

    @property
    def is_empty(self) -> bool:
        return not bool(self._mask.any())

    @property
    def is_full(self) -> bool:
        return bool(self._mask.all())

    def norm(self, u: np.ndarray) -> float:
        '''
        Discrete L2 norm restricted to the mask, ||u||_{h, omega}
        '''
        return self.grid.norm(np.where(self._mask, u, 0.0))


class TimeSet(BaseModel):
    '''
    Description
    -----------
    Observation set in time, a finite union of intervals inside [0, T], with
    per-step quadrature weights w_n = |[t_n, t_{n+1}] intersected with E|.

    Attributes
    ----------
    ```
    tg : TimeGrid
    ```
    The time grid the weights refer to
    ```
    intervals : Tuple[Tuple[float, float], ...]
    ```
    Disjoint intervals inside [0, T]; at least one is required
    '''
    model_config = ConfigDict(frozen=True, extra='forbid')

    tg: TimeGrid
    intervals: Tuple[Interval, ...]

    _weights: np.ndarray = PrivateAttr(default=None)

    @field_validator('intervals', mode='before')
    @classmethod
    def _cast_intervals(cls, value: Any) -> Tuple[Interval, ...]:
        return _normalize_intervals(value)

    @model_validator(mode='after')
    def validate_time_set(self) -> 'TimeSet':
        if len(self.intervals) == 0:
            raise ValueError("The time set E must have positive measure, got no intervals")
        _check_inside(self.intervals, 0.0, self.tg.T, "time horizon")
        return self

    def model_post_init(self, __context: Any) -> None:
        times = self.tg.times
        weights = np.zeros(self.tg.N)
        for lo, hi in self.intervals:
            weights += np.clip(np.minimum(hi, times[1:]) - np.maximum(lo, times[:-1]), 0.0, None)
        weights.setflags(write=False)
        self._weights = weights

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def measure(self) -> float:
        return float(sum(hi - lo for lo, hi in self.intervals))

    @property
    def factors(self) -> np.ndarray:
        '''
        Trace scaling (w_n/dt)^{1/2} per half-step
        '''
        return np.sqrt(self._weights / self.tg.dt)

    def measure_between(self, lo: float, hi: float) -> float:
        '''
        Exact measure of E intersected with (lo, hi)
        '''
        return _overlap(self.intervals, lo, hi)

    def contains(self, t: float) -> bool:
        return any(lo <= t <= hi for lo, hi in self.intervals)

    @classmethod
    def full(cls, tg: TimeGrid) -> 'TimeSet':
        return cls(tg=tg, intervals=[(0.0, tg.T)])


class ObservationRegion(BaseModel):
    '''
    Description
    -----------
    Space-time observation region omega x E.

    Attributes
    ----------
    ```
    mask : SpaceMask
    ```
    The spatial set omega; must contain at least one node
    ```
    times : TimeSet
    ```
    The time set E; its weights must not all vanish
    '''
    model_config = ConfigDict(frozen=True, extra='forbid')

    mask: SpaceMask
    times: TimeSet

    @model_validator(mode='after')
    def validate_region(self) -> 'ObservationRegion':
        if self.mask.is_empty:
            raise ValueError(f"The observation mask {self.mask.intervals} contains no grid node")
        if not float(np.sum(self.times.weights)) > 0:
            raise ValueError(f"The time set {self.times.intervals} carries zero quadrature weight")
        return self

    @property
    def grid(self) -> SpaceGrid:
        return self.mask.grid

    @property
    def tg(self) -> TimeGrid:
        return self.times.tg

    @classmethod
    def build(
        cls,
        grid: SpaceGrid,
        tg: TimeGrid,
        omega: Sequence[Sequence[float]],
        E: Optional[Sequence[Sequence[float]]] = None,
    ) -> 'ObservationRegion':
        times = TimeSet.full(tg) if E is None else TimeSet(tg=tg, intervals=E)
        return cls(mask=SpaceMask(grid=grid, intervals=omega), times=times)


class DensitySequence(BaseModel):
    '''
    Description
    -----------
    Decreasing sequence k_{m+1} = k + gamma^{-m} (k1 - k) anchored at a
    point k of the time set E, with one flag per term recording whether
    |E intersected with (k_{m+1}, k_m)| >= (k_m - k_{m+1})/3.

    Attributes
    ----------
    ```
    times : TimeSet
    ```
    The set E
    ```
    k : float
    ```
    Anchor point
    ```
    gamma : float
    ```
    Contraction factor, gamma > 1
    ```
    k1 : float
    ```
    First term, k < k1 <= T
    ```
    m_max : int
    ```
    Number of flagged intervals
    '''
    model_config = ConfigDict(frozen=True, extra='forbid')

    times: TimeSet
    k: float
    gamma: float
    k1: float
    m_max: int = Field(default=10, ge=1)

    _terms: np.ndarray = PrivateAttr(default=None)
    _flags: np.ndarray = PrivateAttr(default=None)

    @model_validator(mode='after')
    def validate_sequence(self) -> 'DensitySequence':
        if not self.gamma > 1:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        T = self.times.tg.T
        if not self.k < self.k1 <= T * (1 + _ENDPOINT_TOL):
            raise ValueError(f"Expected k < k1 <= T, got k={self.k}, k1={self.k1}, T={T}")
        return self

    def model_post_init(self, __context: Any) -> None:
        m = np.arange(self.m_max + 1)
        terms = self.k + self.gamma ** (-m.astype(float)) * (self.k1 - self.k)
        flags = np.array([
            self.times.measure_between(terms[i + 1], terms[i]) >= (terms[i] - terms[i + 1]) / 3.0
            for i in range(self.m_max)
        ], dtype=bool)
        terms.setflags(write=False)
        flags.setflags(write=False)
        self._terms = terms
        self._flags = flags

    @property
    def terms(self) -> np.ndarray:
        '''
        k_1, ..., k_{m_max + 1}
        '''
        return self._terms

    @property
    def flags(self) -> np.ndarray:
        '''
        Flag m (0-based) refers to the interval (k_{m+2}, k_{m+1})
        '''
        return self._flags

    @property
    def all_hold(self) -> bool:
        return bool(self._flags.all())


class DensitySearchResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    found: bool
    sequence: Optional[DensitySequence] = None
    ladder_index: Optional[int] = None
    reason: str = ""


def build_space_grid(a: float, b: float, n: int) -> SpaceGrid:
    return SpaceGrid(a=a, b=b, n=n)


def build_time_grid(T: float, N: int) -> TimeGrid:
    return TimeGrid(T=T, N=N)


def build_mask(grid: SpaceGrid, intervals: Sequence[Sequence[float]]) -> SpaceMask:
    return SpaceMask(grid=grid, intervals=intervals)


def build_time_set(tg: TimeGrid, intervals: Sequence[Sequence[float]]) -> TimeSet:
    return TimeSet(tg=tg, intervals=intervals)


def density_sequence(E: TimeSet, k: float, gamma: float, k1: float, m_max: int) -> DensitySequence:
    return DensitySequence(times=E, k=k, gamma=gamma, k1=k1, m_max=m_max)


def search_density_sequence(
    E: TimeSet,
    k: float,
    gamma: float,
    m_max: int,
    ladder_size: int = 21,
) -> DensitySearchResult:
    '''
    Walks the dyadic ladder k1 = k + (T - k) 2^{-j}, j = 0..ladder_size-1, and
    returns the first candidate whose flags all hold.
    '''
    T = E.tg.T
    if not k < T:
        raise ValueError(f"The anchor k={k} must lie below T={T}")

    for j in range(ladder_size):
        k1 = k + (T - k) * 2.0 ** (-j)
        sequence = density_sequence(E, k, gamma, k1, m_max)
        if sequence.all_hold:
            logger.debug(f"Density sequence found at ladder index {j}, k1={k1}")
            return DensitySearchResult(found=True, sequence=sequence, ladder_index=j)

    reason = f"No k1 on the dyadic ladder of {ladder_size} candidates satisfies all {m_max} density flags"
    logger.warning(reason)
    return DensitySearchResult(found=False, reason=reason)
