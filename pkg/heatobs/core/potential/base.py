import math
from typing import Annotated, Any, Callable, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    model_validator,
)
from scipy.interpolate import RegularGridInterpolator

Range = Tuple[float, float]


def _sinusoid_range(amplitude: float, omega: float, phase: float, lo: float, hi: float) -> Range:
    '''
    Exact range of amplitude * sin(omega * x + phase) over [lo, hi].
    '''
    if omega == 0:
        value = amplitude * math.sin(phase)
        return (value, value)
    if omega < 0:
        amplitude, omega, phase = -amplitude, -omega, -phase

    theta0, theta1 = omega * lo + phase, omega * hi + phase
    values = [amplitude * math.sin(theta0), amplitude * math.sin(theta1)]
    # Critical points sit at pi/2 + k*pi
    k0 = math.ceil((theta0 - math.pi / 2) / math.pi)
    k1 = math.floor((theta1 - math.pi / 2) / math.pi)
    if k1 - k0 >= 1:
        values += [amplitude, -amplitude]
    elif k1 == k0:
        values.append(amplitude if k0 % 2 == 0 else -amplitude)
    return (min(values), max(values))


def _monotone_range(f: Callable[[float], float], lo: float, hi: float) -> Range:
    a, b = f(lo), f(hi)
    return (min(a, b), max(a, b))


def _abs_sup(r: Range) -> float:
    return max(abs(r[0]), abs(r[1]))


def _product_range(r1: Range, r2: Range) -> Range:
    corners = [r1[0] * r2[0], r1[0] * r2[1], r1[1] * r2[0], r1[1] * r2[1]]
    return (min(corners), max(corners))


def _broadcast(x: Any, t: Any) -> Tuple[np.ndarray, np.ndarray]:
    return np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))


class _Profile(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')


# Spatial profiles V0(x)

class ConstantProfile(_Profile):
    kind: Literal['constant'] = 'constant'
    value: float = 1.0

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return np.full(np.shape(x), self.value, dtype=float)

    def derivative(self, x: np.ndarray) -> Optional[np.ndarray]:
        return np.zeros(np.shape(x))

    def value_range(self, lo: float, hi: float) -> Optional[Range]:
        return (self.value, self.value)

    def derivative_range(self, lo: float, hi: float) -> Optional[Range]:
        return (0.0, 0.0)


class SinProfile(_Profile):
    '''
    amplitude * sin(frequency * pi * x + phase)
    '''
    kind: Literal['sin'] = 'sin'
    amplitude: float = 1.0
    frequency: float = 1.0
    phase: float = 0.0

    @property
    def omega(self) -> float:
        return self.frequency * math.pi

    @property
    def shift(self) -> float:
        return self.phase

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return self.amplitude * np.sin(self.omega * np.asarray(x, dtype=float) + self.shift)

    def derivative(self, x: np.ndarray) -> Optional[np.ndarray]:
        return self.amplitude * self.omega * np.cos(self.omega * np.asarray(x, dtype=float) + self.shift)

    def value_range(self, lo: float, hi: float) -> Optional[Range]:
        return _sinusoid_range(self.amplitude, self.omega, self.shift, lo, hi)

    def derivative_range(self, lo: float, hi: float) -> Optional[Range]:
        return _sinusoid_range(self.amplitude * self.omega, self.omega, self.shift + math.pi / 2, lo, hi)


class CosProfile(SinProfile):
    '''
    amplitude * cos(frequency * pi * x + phase)
    '''
    kind: Literal['cos'] = 'cos'

    @property
    def shift(self) -> float:
        return self.phase + math.pi / 2


class StepProfile(_Profile):
    '''
    amplitude on [lo, hi), zero elsewhere. Not Lipschitz, so its gradient
    norm is only estimated by finite differences.
    '''
    kind: Literal['step'] = 'step'
    amplitude: float = 1.0
    lo: float
    hi: float

    @model_validator(mode='after')
    def validate_step(self) -> 'StepProfile':
        if not self.hi > self.lo:
            raise ValueError(f"Step support must satisfy lo < hi, got ({self.lo}, {self.hi})")
        return self

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x < self.hi), self.amplitude, 0.0)

    def derivative(self, x: np.ndarray) -> Optional[np.ndarray]:
        return None

    def value_range(self, lo: float, hi: float) -> Optional[Range]:
        values = []
        if min(hi, self.hi) > max(lo, self.lo) or (lo == hi and self.lo <= lo < self.hi):
            values.append(self.amplitude)
        if lo < self.lo or hi >= self.hi:
            values.append(0.0)
        return (min(values), max(values))

    def derivative_range(self, lo: float, hi: float) -> Optional[Range]:
        return None


class SamplesProfile(_Profile):
    '''
    Piecewise-linear interpolant through (x_j, v_j), constant beyond the ends.
    '''
    kind: Literal['samples'] = 'samples'
    x: Tuple[float, ...]
    values: Tuple[float, ...]

    @model_validator(mode='after')
    def validate_samples(self) -> 'SamplesProfile':
        if len(self.x) < 2 or len(self.x) != len(self.values):
            raise ValueError(
                f"Samples need at least two matching abscissae and values, got {len(self.x)} and {len(self.values)}")
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("Sample abscissae must be strictly increasing")
        return self

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(x, dtype=float), self.x, self.values)

    def _slopes(self) -> np.ndarray:
        return np.diff(self.values) / np.diff(self.x)

    def derivative(self, x: np.ndarray) -> Optional[np.ndarray]:
        x = np.asarray(x, dtype=float)
        slopes = np.concatenate([[0.0], self._slopes(), [0.0]])
        return slopes[np.searchsorted(self.x, x, side='right')]

    def value_range(self, lo: float, hi: float) -> Optional[Range]:
        xs = np.asarray(self.x)
        points = np.concatenate([[lo, hi], xs[(xs > lo) & (xs < hi)]])
        values = self.evaluate(points)
        return (float(values.min()), float(values.max()))

    def derivative_range(self, lo: float, hi: float) -> Optional[Range]:
        xs = np.asarray(self.x)
        slopes = self._slopes()
        active = (xs[1:] > lo) & (xs[:-1] < hi)
        candidates = list(slopes[active])
        if lo < xs[0] or hi > xs[-1]:
            candidates.append(0.0)
        return (float(min(candidates)), float(max(candidates)))


# Time profiles g(t)

class ConstantTimeProfile(_Profile):
    kind: Literal['constant'] = 'constant'
    value: float = 1.0

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        return np.full(np.shape(t), self.value, dtype=float)

    def derivative(self, t: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(t))

    def value_range(self, t0: float, t1: float) -> Range:
        return (self.value, self.value)

    def derivative_range(self, t0: float, t1: float) -> Range:
        return (0.0, 0.0)


class Poly1pProfile(_Profile):
    '''
    (1 + t)^beta
    '''
    kind: Literal['poly1p'] = 'poly1p'
    beta: float = 1.0

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        return (1.0 + np.asarray(t, dtype=float)) ** self.beta

    def derivative(self, t: np.ndarray) -> np.ndarray:
        return self.beta * (1.0 + np.asarray(t, dtype=float)) ** (self.beta - 1.0)

    def value_range(self, t0: float, t1: float) -> Range:
        return _monotone_range(lambda s: (1.0 + s) ** self.beta, t0, t1)

    def derivative_range(self, t0: float, t1: float) -> Range:
        return _monotone_range(lambda s: self.beta * (1.0 + s) ** (self.beta - 1.0), t0, t1)


class ExpProfile(_Profile):
    '''
    exp(beta * t)
    '''
    kind: Literal['exp'] = 'exp'
    beta: float = 1.0

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        return np.exp(self.beta * np.asarray(t, dtype=float))

    def derivative(self, t: np.ndarray) -> np.ndarray:
        return self.beta * np.exp(self.beta * np.asarray(t, dtype=float))

    def value_range(self, t0: float, t1: float) -> Range:
        return _monotone_range(lambda s: math.exp(self.beta * s), t0, t1)

    def derivative_range(self, t0: float, t1: float) -> Range:
        return _monotone_range(lambda s: self.beta * math.exp(self.beta * s), t0, t1)


SpatialProfile = Annotated[
    Union[ConstantProfile, SinProfile, CosProfile, StepProfile, SamplesProfile],
    Field(discriminator='kind'),
]
TimeProfile = Annotated[
    Union[ConstantTimeProfile, Poly1pProfile, ExpProfile],
    Field(discriminator='kind'),
]


class BasePotential(BaseModel):
    '''
    Description
    -----------
    Base model for potentials V(x, t). Evaluation is vectorized and total on
    the closed space-time cylinder. Families that know their derivatives or
    exact ranges expose them; the norm routines fall back to dense sampling
    otherwise.

    Methods
    -------
    ```
    def __call__(x, t) -> np.ndarray
    ```
    Values at broadcast (x, t)
    ```
    def grad(x, t) -> np.ndarray | None
    ```
    Spatial derivative, None when the family has no closed form
    ```
    def time_derivative(x, t) -> np.ndarray | None
    ```
    Time derivative, None when the family has no closed form
    ```
    def value_range(a, b, t0, t1) -> Tuple[float, float] | None
    ```
    Exact (min, max) over [a, b] x [t0, t1]
    ```
    def grad_sup(a, b, t0, t1) -> float | None
    def dt_sup(a, b, t0, t1) -> float | None
    ```
    Exact suprema of |grad V| and |dV/dt|
    '''
    model_config = ConfigDict(frozen=True, extra='forbid')

    @property
    def is_time_independent(self) -> bool:
        return False

    def __call__(self, x: Any, t: Any) -> np.ndarray:
        raise NotImplementedError("Subclasses must implement `__call__()`")

    def grad(self, x: Any, t: Any) -> Optional[np.ndarray]:
        return None

    def time_derivative(self, x: Any, t: Any) -> Optional[np.ndarray]:
        if self.is_time_independent:
            x, t = _broadcast(x, t)
            return np.zeros(x.shape)
        return None

    def value_range(self, a: float, b: float, t0: float, t1: float) -> Optional[Range]:
        return None

    def grad_sup(self, a: float, b: float, t0: float, t1: float) -> Optional[float]:
        return None

    def dt_sup(self, a: float, b: float, t0: float, t1: float) -> Optional[float]:
        return 0.0 if self.is_time_independent else None

    def midstep_values(self, nodes: np.ndarray, half_times: np.ndarray) -> np.ndarray:
        return np.array(self(nodes[:, None], half_times[None, :]), dtype=float)

    def scaled(self, factor: float) -> 'AffinePotential':
        return AffinePotential(base=self, scale=factor)

    def shifted(self, constant: float) -> 'AffinePotential':
        return AffinePotential(base=self, shift=constant)

    def time_shifted(self, offset: float) -> 'TimeShiftedPotential':
        return TimeShiftedPotential(base=self, offset=offset)


class ConstantPotential(BasePotential):
    kind: Literal['constant'] = 'constant'
    value: float = 0.0

    @property
    def is_time_independent(self) -> bool:
        return True

    def __call__(self, x: Any, t: Any) -> np.ndarray:
        x, _ = _broadcast(x, t)
        return np.full(x.shape, self.value)

    def grad(self, x: Any, t: Any) -> Optional[np.ndarray]:
        x, _ = _broadcast(x, t)
        return np.zeros(x.shape)

    def value_range(self, a, b, t0, t1) -> Optional[Range]:
        return (self.value, self.value)

    def grad_sup(self, a, b, t0, t1) -> Optional[float]:
        return 0.0


class TimeIndependentPotential(BasePotential):
    kind: Literal['time_independent'] = 'time_independent'
    profile: SpatialProfile

    @property
    def is_time_independent(self) -> bool:
        return True

    def __call__(self, x: Any, t: Any) -> np.ndarray:
        x, _ = _broadcast(x, t)
        return self.profile.evaluate(x)

    def grad(self, x: Any, t: Any) -> Optional[np.ndarray]:
        x, _ = _broadcast(x, t)
        return self.profile.derivative(x)

    def value_range(self, a, b, t0, t1) -> Optional[Range]:
        return self.profile.value_range(a, b)

    def grad_sup(self, a, b, t0, t1) -> Optional[float]:
        r = self.profile.derivative_range(a, b)
        return None if r is None else _abs_sup(r)


class SeparablePotential(BasePotential):
    '''
    V0(x) * g(t)
    '''
    kind: Literal['separable'] = 'separable'
    V0: SpatialProfile
    g: TimeProfile = Field(default_factory=ConstantTimeProfile)

    @property
    def is_time_independent(self) -> bool:
        return isinstance(self.g, ConstantTimeProfile)

    def __call__(self, x: Any, t: Any) -> np.ndarray:
        x, t = _broadcast(x, t)
        return self.V0.evaluate(x) * self.g.evaluate(t)

    def grad(self, x: Any, t: Any) -> Optional[np.ndarray]:
        x, t = _broadcast(x, t)
        d = self.V0.derivative(x)
        return None if d is None else d * self.g.evaluate(t)

    def time_derivative(self, x: Any, t: Any) -> Optional[np.ndarray]:
        x, t = _broadcast(x, t)
        return self.V0.evaluate(x) * self.g.derivative(t)

    def value_range(self, a, b, t0, t1) -> Optional[Range]:
        r0 = self.V0.value_range(a, b)
        return None if r0 is None else _product_range(r0, self.g.value_range(t0, t1))

    def grad_sup(self, a, b, t0, t1) -> Optional[float]:
        r0 = self.V0.derivative_range(a, b)
        return None if r0 is None else _abs_sup(r0) * _abs_sup(self.g.value_range(t0, t1))

    def dt_sup(self, a, b, t0, t1) -> Optional[float]:
        r0 = self.V0.value_range(a, b)
        return None if r0 is None else _abs_sup(r0) * _abs_sup(self.g.derivative_range(t0, t1))


class SampledPotential(BasePotential):
    '''
    Values on a tensor grid x_j x t_m, bilinearly interpolated (and linearly
    extrapolated) elsewhere. values[j][m] = V(x_j, t_m).
    '''
    kind: Literal['sampled'] = 'sampled'
    x: Tuple[float, ...]
    t: Tuple[float, ...]
    values: Tuple[Tuple[float, ...], ...]

    _interpolator: Any = PrivateAttr(default=None)

    @model_validator(mode='after')
    def validate_samples(self) -> 'SampledPotential':
        shape = np.shape(self.values)
        if len(self.x) < 2 or len(self.t) < 2:
            raise ValueError("Sampled potentials need at least two nodes in space and in time")
        if shape != (len(self.x), len(self.t)):
            raise ValueError(f"Sample values have shape {shape}, expected {(len(self.x), len(self.t))}")
        if np.any(np.diff(self.x) <= 0) or np.any(np.diff(self.t) <= 0):
            raise ValueError("Sample nodes must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("Sample values must be finite")
        return self

    def model_post_init(self, __context: Any) -> None:
        self._interpolator = RegularGridInterpolator(
            (np.asarray(self.x), np.asarray(self.t)),
            np.asarray(self.values, dtype=float),
            bounds_error=False,
            fill_value=None,
        )

    def __call__(self, x: Any, t: Any) -> np.ndarray:
        x, t = _broadcast(x, t)
        points = np.stack([x.ravel(), t.ravel()], axis=-1)
        return self._interpolator(points).reshape(x.shape)

    def midstep_values(self, nodes: np.ndarray, half_times: np.ndarray) -> np.ndarray:
        if (len(self.x) == len(nodes) and len(self.t) == len(half_times)
                and np.allclose(self.x, nodes, rtol=0.0, atol=1e-12)
                and np.allclose(self.t, half_times, rtol=0.0, atol=1e-12)):
            return np.array(self.values, dtype=float)
        return super().midstep_values(nodes, half_times)

    @classmethod
    def from_array(cls, x: np.ndarray, t: np.ndarray, values: np.ndarray) -> 'SampledPotential':
        return cls(
            x=tuple(float(v) for v in x),
            t=tuple(float(v) for v in t),
            values=tuple(tuple(float(v) for v in row) for row in np.asarray(values)),
        )


class FunctionPotential(BasePotential):
    '''
    Callable-backed potential for library use. Not representable in JSON.
    '''
    model_config = ConfigDict(frozen=True, extra='forbid', arbitrary_types_allowed=True)

    kind: Literal['function'] = 'function'
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    time_derivative_fn: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    time_independent: bool = False

    @property
    def is_time_independent(self) -> bool:
        return self.time_independent

    def __call__(self, x: Any, t: Any) -> np.ndarray:
        x, t = _broadcast(x, t)
        return np.asarray(self.fn(x, t), dtype=float) * np.ones(x.shape)

    def grad(self, x: Any, t: Any) -> Optional[np.ndarray]:
        if self.grad_fn is None:
            return None
        x, t = _broadcast(x, t)
        return np.asarray(self.grad_fn(x, t), dtype=float) * np.ones(x.shape)

    def time_derivative(self, x: Any, t: Any) -> Optional[np.ndarray]:
        if self.time_derivative_fn is None:
            return super().time_derivative(x, t)
        x, t = _broadcast(x, t)
        return np.asarray(self.time_derivative_fn(x, t), dtype=float) * np.ones(x.shape)


class AffinePotential(BasePotential):
    '''
    scale * base + shift
    '''
    kind: Literal['affine'] = 'affine'
    base: 'Potential'
    scale: float = 1.0
    shift: float = 0.0

    @property
    def is_time_independent(self) -> bool:
        return self.base.is_time_independent

    def __call__(self, x: Any, t: Any) -> np.ndarray:
        return self.scale * self.base(x, t) + self.shift

    def grad(self, x: Any, t: Any) -> Optional[np.ndarray]:
        d = self.base.grad(x, t)
        return None if d is None else self.scale * d

    def time_derivative(self, x: Any, t: Any) -> Optional[np.ndarray]:
        d = self.base.time_derivative(x, t)
        return None if d is None else self.scale * d

    def value_range(self, a, b, t0, t1) -> Optional[Range]:
        r = self.base.value_range(a, b, t0, t1)
        if r is None:
            return None
        lo, hi = self.scale * r[0] + self.shift, self.scale * r[1] + self.shift
        return (min(lo, hi), max(lo, hi))

    def grad_sup(self, a, b, t0, t1) -> Optional[float]:
        s = self.base.grad_sup(a, b, t0, t1)
        return None if s is None else abs(self.scale) * s

    def dt_sup(self, a, b, t0, t1) -> Optional[float]:
        s = self.base.dt_sup(a, b, t0, t1)
        return None if s is None else abs(self.scale) * s


class TimeShiftedPotential(BasePotential):
    '''
    base(x, t + offset)
    '''
    kind: Literal['time_shift'] = 'time_shift'
    base: 'Potential'
    offset: float = 0.0

    @property
    def is_time_independent(self) -> bool:
        return self.base.is_time_independent

    def __call__(self, x: Any, t: Any) -> np.ndarray:
        return self.base(x, np.asarray(t, dtype=float) + self.offset)

    def grad(self, x: Any, t: Any) -> Optional[np.ndarray]:
        return self.base.grad(x, np.asarray(t, dtype=float) + self.offset)

    def time_derivative(self, x: Any, t: Any) -> Optional[np.ndarray]:
        return self.base.time_derivative(x, np.asarray(t, dtype=float) + self.offset)

    def value_range(self, a, b, t0, t1) -> Optional[Range]:
        return self.base.value_range(a, b, t0 + self.offset, t1 + self.offset)

    def grad_sup(self, a, b, t0, t1) -> Optional[float]:
        return self.base.grad_sup(a, b, t0 + self.offset, t1 + self.offset)

    def dt_sup(self, a, b, t0, t1) -> Optional[float]:
        return self.base.dt_sup(a, b, t0 + self.offset, t1 + self.offset)


Potential = Annotated[
    Union[
        ConstantPotential,
        TimeIndependentPotential,
        SeparablePotential,
        SampledPotential,
        AffinePotential,
        TimeShiftedPotential,
        FunctionPotential,
    ],
    Field(discriminator='kind'),
]

AffinePotential.model_rebuild()
TimeShiftedPotential.model_rebuild()
