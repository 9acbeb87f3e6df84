import json
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from heatobs.analysis.control.regular import RegularControlConfig
from heatobs.core.mesh.base import ObservationRegion, SpaceGrid, SpaceMask, TimeGrid, TimeSet
from heatobs.core.potential.base import ConstantPotential, FunctionPotential, Potential

Interval = Tuple[float, float]
TaskName = Literal['solve', 'hum', 'regctl', 'obscost', 'carleman', 'spectral', 'sweep']
SEED_LIMIT = 2 ** 64


class ConfigError(ValueError):
    '''
    The configuration file cannot be read or parsed.
    '''


class _Fragment(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')


class DomainConfig(_Fragment):
    a: float = 0.0
    b: float = 1.0
    n: int = 64

    def build(self) -> SpaceGrid:
        return SpaceGrid(a=self.a, b=self.b, n=self.n)


class TimeConfig(_Fragment):
    T: float = 0.5
    steps: int = 128

    def build(self) -> TimeGrid:
        return TimeGrid(T=self.T, N=self.steps)


# Initial data

class SineInitial(_Fragment):
    '''
    sum_k A_k sin(k pi (x - a) / (b - a)) over (k, A_k) pairs
    '''
    kind: Literal['sine'] = 'sine'
    modes: List[Tuple[int, float]] = [(1, 1.0)]

    def build(self, grid: SpaceGrid, seed: int) -> np.ndarray:
        z = (grid.nodes - grid.a) / grid.length
        return sum(A * np.sin(k * np.pi * z) for k, A in self.modes)


class RandomInitial(_Fragment):
    '''
    Seeded Gaussian sine coefficients with k^{-decay} amplitudes
    '''
    kind: Literal['random'] = 'random'
    modes: int = Field(default=8, ge=1)
    decay: float = 1.0

    def build(self, grid: SpaceGrid, seed: int) -> np.ndarray:
        rng = np.random.default_rng(seed)
        z = (grid.nodes - grid.a) / grid.length
        k = np.arange(1, self.modes + 1)
        coefficients = rng.standard_normal(self.modes) * k ** (-self.decay)
        return np.sin(np.pi * np.outer(z, k)) @ coefficients


class SamplesInitial(_Fragment):
    kind: Literal['samples'] = 'samples'
    x: List[float]
    values: List[float]

    @model_validator(mode='after')
    def validate_samples(self) -> 'SamplesInitial':
        if len(self.x) < 2 or len(self.x) != len(self.values):
            raise ValueError(f"Initial samples need at least two matching points, got {len(self.x)} and {len(self.values)}")
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("Initial sample abscissae must be strictly increasing")
        return self

    def build(self, grid: SpaceGrid, seed: int) -> np.ndarray:
        return np.interp(grid.nodes, self.x, self.values)


InitialData = Annotated[Union[SineInitial, RandomInitial, SamplesInitial], Field(discriminator='kind')]


# Task parameters

class SolveParams(_Fragment):
    initial: InitialData = SineInitial()
    adjoint: bool = False


class HumParams(_Fragment):
    initial: InitialData = SineInitial()
    eps: float = Field(default=1e-10, ge=0.0)
    cg_tol: float = Field(default=1e-10, gt=0.0)
    max_iter: int = Field(default=500, ge=1)
    C: float = Field(default=1.0, gt=0.0)


class RegctlParams(RegularControlConfig):
    initial: InitialData = SineInitial()


class ObscostParams(_Fragment):
    eps: float = Field(default=1e-12, gt=0.0)
    tol: float = Field(default=1e-8, gt=0.0)
    max_iter: int = Field(default=50, ge=1)
    probes: int = Field(default=8, ge=1)
    method: Literal['auto', 'dense', 'power'] = 'auto'
    dense_limit: int = Field(default=256, ge=1)
    C: float = Field(default=1.0, gt=0.0)
    two_stage: bool = False


class CarlemanTaskParams(_Fragment):
    model_config = ConfigDict(frozen=True, extra='forbid', populate_by_name=True)

    s: float = Field(default=2.0, ge=1.0)
    lam: float = Field(default=2.0, gt=0.0, alias='lambda')
    center: Optional[float] = None
    corpus_size: int = Field(default=8, ge=1)
    modes: int = Field(default=8, ge=1)
    C1: Optional[float] = Field(default=None, gt=0.0)
    margin: float = Field(default=1.05, ge=1.0)
    tau_hi: float = Field(default=1.0, gt=0.0)
    iterations: int = Field(default=40, ge=1)
    adjoint_form: bool = False


class SpectralParams(_Fragment):
    rungs: int = Field(default=4, ge=4)
    base: float = Field(default=2.1, gt=0.0)
    amplitudes: List[float] = [1.0]
    shift_ladder: bool = False


class SweepParams(_Fragment):
    task: Literal['solve', 'hum', 'regctl', 'obscost', 'carleman', 'spectral']
    axis: str
    values: List[Any]
    task_params: Dict[str, Any] = {}


TASK_PARAMS: Dict[str, type] = {
    'solve': SolveParams,
    'hum': HumParams,
    'regctl': RegctlParams,
    'obscost': ObscostParams,
    'carleman': CarlemanTaskParams,
    'spectral': SpectralParams,
    'sweep': SweepParams,
}


class ExperimentConfig(BaseModel):
    '''
    Description
    -----------
    Validated experiment description. Unknown keys are rejected at every
    level; task parameters are checked against the model of the chosen task.

    Attributes
    ----------
    ```
    domain : DomainConfig
    time : TimeConfig
    potential : Potential
    ```
    Any serializable potential family; `function` potentials are refused
    ```
    omega : List[Interval]
    E : List[Interval] | None
    ```
    Observation set; E defaults to the whole horizon
    ```
    task : str
    params : Dict[str, Any]
    ```
    Parameters of the task, validated by `TASK_PARAMS[task]`
    ```
    seed : int
    ```
    Master seed in [0, 2^64)
    '''
    model_config = ConfigDict(frozen=True, extra='forbid')

    domain: DomainConfig = DomainConfig()
    time: TimeConfig = TimeConfig()
    potential: Potential = ConstantPotential()
    omega: List[Interval] = [(0.3, 0.7)]
    E: Optional[List[Interval]] = None
    task: TaskName = 'solve'
    params: Dict[str, Any] = {}
    seed: int = 0
    output: Optional[str] = None

    _task_params: Any = PrivateAttr(default=None)

    @field_validator('potential')
    @classmethod
    def _serializable_potential(cls, value: Any) -> Any:
        if isinstance(value, FunctionPotential):
            raise ValueError("Callable potentials cannot appear in a configuration file")
        return value

    @model_validator(mode='after')
    def validate_config(self) -> 'ExperimentConfig':
        if not 0 <= self.seed < SEED_LIMIT:
            raise ValueError(f"seed must lie in [0, 2^64), got {self.seed}")
        grid, tg = self.domain.build(), self.time.build()
        # Raises on overlapping, empty or out-of-domain sets
        SpaceMask(grid=grid, intervals=self.omega)
        if self.E is not None:
            TimeSet(tg=tg, intervals=self.E)
        self._task_params = TASK_PARAMS[self.task].model_validate(self.params)
        return self

    @property
    def task_params(self) -> Any:
        return self._task_params

    @property
    def grid(self) -> SpaceGrid:
        return self.domain.build()

    @property
    def tg(self) -> TimeGrid:
        return self.time.build()

    def mask(self) -> SpaceMask:
        return SpaceMask(grid=self.grid, intervals=self.omega)

    def region(self) -> ObservationRegion:
        return ObservationRegion.build(self.grid, self.tg, self.omega, self.E)


def load_config(path: Union[str, Path], **overrides: Any) -> ExperimentConfig:
    '''
    Reads a JSON configuration; non-None overrides replace top-level keys.
    '''
    try:
        raw = json.loads(Path(path).read_text(encoding='utf-8'))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"Cannot read configuration {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"Configuration {path} must hold a JSON object")
    raw.update({key: value for key, value in overrides.items() if value is not None})
    return ExperimentConfig.model_validate(raw)


def resolve_axis(data: Dict[str, Any], axis: str) -> None:
    '''
    Raises KeyError unless every segment of the dotted path exists.
    '''
    node: Any = data
    for part in axis.split('.'):
        if not isinstance(node, dict) or part not in node:
            raise KeyError(f"Sweep axis '{axis}' does not resolve: no key '{part}'")
        node = node[part]


def set_axis(data: Dict[str, Any], axis: str, value: Any) -> Dict[str, Any]:
    resolve_axis(data, axis)
    node = data
    *parents, leaf = axis.split('.')
    for part in parents:
        node = node[part]
    node[leaf] = value
    return data
