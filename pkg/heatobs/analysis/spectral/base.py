import logging
import math
from typing import Any, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh, eigh_tridiagonal
from scipy.stats import linregress

from heatobs.core.mesh.base import SpaceGrid, SpaceMask, TimeGrid
from heatobs.core.potential.base import AffinePotential, Potential
from heatobs.core.potential.norms import evaluate_nodes, norms

logger = logging.getLogger(__name__)

DEFAULT_LENGTH = 0.5


def _readonly(value: Any) -> np.ndarray:
    array = np.array(value, dtype=float)
    array.setflags(write=False)
    return array


class HillBasis(BaseModel):
    '''
    Description
    -----------
    Dirichlet eigenpairs of the Hill operator -d^2/dx^2 + V(x), discretized
    by the tridiagonal matrix H with diagonal 2/h^2 + V(x_i) and
    off-diagonal -1/h^2.

    Attributes
    ----------
    ```
    grid : SpaceGrid
    ```
    Grid on (0, L), L = 1/2 by default
    ```
    potential_values : np.ndarray
    ```
    V at the interior nodes
    ```
    eigenvalues : np.ndarray
    ```
    Ascending lambda_1 <= ... <= lambda_n
    ```
    eigenvectors : np.ndarray
    ```
    Columns phi_k with <phi_j, phi_k>_h = delta_jk, first significant entry positive
    '''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: SpaceGrid
    potential_values: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @field_validator('potential_values', 'eigenvalues', 'eigenvectors', mode='before')
    @classmethod
    def _cast(cls, value: Any) -> np.ndarray:
        return _readonly(value)

    @model_validator(mode='after')
    def validate_basis(self) -> 'HillBasis':
        n = self.grid.n
        if self.eigenvectors.shape != (n, n) or self.eigenvalues.shape != (n,):
            raise ValueError(f"Expected {n} eigenpairs of length {n}")
        self._validate_residual()
        self._validate_orthonormality()
        if not self.eigenvalues[0] > self.potential_values.min():
            raise ValueError(
                f"lambda_1={self.eigenvalues[0]} does not exceed inf V={self.potential_values.min()}")
        return self

    def apply(self, u: np.ndarray) -> np.ndarray:
        '''
        H u for u along the first axis
        '''
        h2 = self.grid.h ** 2
        out = (2.0 / h2 + self.potential_values[:, None]) * u if u.ndim == 2 else (2.0 / h2 + self.potential_values) * u
        out[1:] -= u[:-1] / h2
        out[:-1] -= u[1:] / h2
        return out

    def _validate_residual(self) -> None:
        h = self.grid.h
        H_norm = 4.0 / h ** 2 + np.abs(self.potential_values).max()
        residual = self.apply(self.eigenvectors) - self.eigenvectors * self.eigenvalues[None, :]
        norms_ = np.sqrt(h * np.sum(residual ** 2, axis=0))
        allowed = 1e-10 * np.maximum(np.abs(self.eigenvalues), 1.0) + 64 * np.finfo(float).eps * H_norm
        if np.any(norms_ > allowed):
            k = int(np.argmax(norms_ - allowed))
            raise ValueError(f"Eigenpair {k + 1} has residual {norms_[k]:.3e} above {allowed[k]:.3e}")

    def _validate_orthonormality(self) -> None:
        gram = self.grid.h * self.eigenvectors.T @ self.eigenvectors
        deviation = float(np.abs(gram - np.eye(self.grid.n)).max())
        if deviation > 1e-10:
            raise ValueError(f"Eigenvectors deviate from orthonormality by {deviation:.3e}")

    @property
    def size(self) -> int:
        return len(self.eigenvalues)


def hill_grid(n: int, length: float = DEFAULT_LENGTH) -> SpaceGrid:
    return SpaceGrid(a=0.0, b=length, n=n)


def hill_eigensolve(V: Potential, grid: SpaceGrid) -> HillBasis:
    if not V.is_time_independent:
        raise ValueError("The Hill eigenproblem needs a time-independent potential")
    h = grid.h
    values = evaluate_nodes(V, grid, 0.0)
    eigenvalues, vectors = eigh_tridiagonal(2.0 / h ** 2 + values, np.full(grid.n - 1, -1.0 / h ** 2))
    vectors = vectors / math.sqrt(h)

    # Deterministic sign: first entry above round-off is positive
    threshold = 1e-8 * np.abs(vectors).max(axis=0)
    first = np.argmax(np.abs(vectors) > threshold[None, :], axis=0)
    signs = np.sign(vectors[first, np.arange(grid.n)])
    vectors = vectors * np.where(signs == 0, 1.0, signs)[None, :]
    return HillBasis(grid=grid, potential_values=values, eigenvalues=eigenvalues, eigenvectors=vectors)


class SpectralWindow(BaseModel):
    '''
    Indices k (0-based) with lambda_k <= lambda_cut.
    '''
    model_config = ConfigDict(frozen=True)

    lambda_cut: float
    indices: Tuple[int, ...]

    @property
    def size(self) -> int:
        return len(self.indices)


def window(basis: HillBasis, lambda_cut: float) -> SpectralWindow:
    indices = tuple(int(k) for k in np.flatnonzero(basis.eigenvalues <= lambda_cut))
    return SpectralWindow(lambda_cut=lambda_cut, indices=indices)


class SpectralRatio(BaseModel):
    '''
    Description
    -----------
    Worst ratio ||phi||_{L2(Omega)} / ||phi||_{L2(omega)} over the window,
    lambda_min(M_omega)^{-1/2}. When M_omega is numerically singular the
    ratio is the achieved lower bound and `singular` is set.
    '''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True, ser_json_inf_nan='strings')

    max_ratio: float
    lambda_min: float
    worst_coefficients: np.ndarray
    window_size: int
    symmetry_defect: float
    singular: bool = False
    iterations: int = 0

    @property
    def K(self) -> float:
        return math.log(self.max_ratio)


def window_gram(basis: HillBasis, window: SpectralWindow, omega: SpaceMask) -> np.ndarray:
    rows = basis.eigenvectors[omega.mask][:, list(window.indices)]
    return basis.grid.h * rows.T @ rows


def spectral_ratio(
    basis: HillBasis,
    window: SpectralWindow,
    omega: SpaceMask,
    reg: float = 0.0,
    tol: float = 1e-13,
    max_iter: int = 1000,
) -> SpectralRatio:
    if window.size == 0:
        raise ValueError(f"The window lambda <= {window.lambda_cut} contains no eigenvalue")
    if omega.is_empty:
        raise ValueError(f"The mask {omega.intervals} contains no grid node")
    if omega.grid != basis.grid:
        raise ValueError("The mask and the basis use different grids")

    k = window.size
    if omega.is_full:
        coefficients = np.zeros(k)
        coefficients[0] = 1.0
        return SpectralRatio(max_ratio=1.0, lambda_min=1.0, worst_coefficients=coefficients,
                             window_size=k, symmetry_defect=0.0)

    gram = window_gram(basis, window, omega)
    symmetry = float(np.abs(gram - gram.T).max())
    gram = 0.5 * (gram + gram.T)
    shifted = gram + reg * np.eye(k)

    try:
        factor = cho_factor(shifted)
    except LinAlgError:
        value, vector = eigh(shifted, subset_by_index=[0, 0])
        floor = np.finfo(float).eps * max(float(np.abs(gram).max()), 1.0)
        lambda_min = max(float(value[0]) - reg, floor)
        logger.warning(f"Window Gram of size {k} is numerically singular; reporting the lower bound")
        return SpectralRatio(max_ratio=lambda_min ** -0.5, lambda_min=lambda_min,
                             worst_coefficients=vector[:, 0], window_size=k,
                             symmetry_defect=symmetry, singular=True)

    x = np.random.default_rng(0).standard_normal(k)
    x /= np.linalg.norm(x)
    rayleigh = float(x @ gram @ x)
    iterations = 0
    for iterations in range(1, max_iter + 1):
        x = cho_solve(factor, x)
        x /= np.linalg.norm(x)
        updated = float(x @ gram @ x)
        done = abs(updated - rayleigh) <= tol * abs(updated)
        rayleigh = updated
        if done:
            break
    if rayleigh <= 0:
        floor = np.finfo(float).eps * max(float(np.abs(gram).max()), 1.0)
        return SpectralRatio(max_ratio=floor ** -0.5, lambda_min=floor, worst_coefficients=x,
                             window_size=k, symmetry_defect=symmetry, singular=True, iterations=iterations)
    return SpectralRatio(
        max_ratio=max(rayleigh ** -0.5, 1.0),
        lambda_min=rayleigh,
        worst_coefficients=x,
        window_size=k,
        symmetry_defect=symmetry,
        iterations=iterations,
    )


class LadderFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    fixed: float
    slope: float
    intercept: float
    r_squared: float


class ConstantFitRow(BaseModel):
    model_config = ConfigDict(frozen=True, ser_json_inf_nan='strings')

    lambda_cut: float
    M: float
    omega_measure: float
    max_ratio: float
    K: float
    window_size: int


class ConstantFit(BaseModel):
    '''
    Description
    -----------
    K(lambda, M) = log max_ratio over a lambda ladder and a list of
    amplitudes, with least-squares slopes of K against sqrt(lambda) at each
    fixed M and against sqrt(M) at each fixed lambda.
    '''
    model_config = ConfigDict(frozen=True)

    rows: List[ConstantFitRow]
    lambda_fits: List[LadderFit]
    M_fits: List[LadderFit]

    def K(self, lambda_cut: float, M: float) -> float:
        for row in self.rows:
            if row.lambda_cut == lambda_cut and row.M == M:
                return row.K
        raise KeyError(f"No row for lambda_cut={lambda_cut}, M={M}")


def _line_fit(fixed: float, x: Sequence[float], y: Sequence[float]) -> LadderFit:
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if np.ptp(y) == 0:
        return LadderFit(fixed=fixed, slope=0.0, intercept=float(y[0]), r_squared=1.0)
    fit = linregress(x, y)
    return LadderFit(fixed=fixed, slope=float(fit.slope), intercept=float(fit.intercept), r_squared=float(fit.rvalue ** 2))


def _check_ladder(ladder: Sequence[float]) -> None:
    if len(ladder) < 4:
        raise ValueError(f"The lambda ladder needs at least 4 rungs, got {len(ladder)}")
    values = np.asarray(ladder, dtype=float)
    if np.any(values <= 0):
        raise ValueError("Ladder rungs must be positive")
    ratios = values[1:] / values[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-9) or not ratios[0] > 1:
        raise ValueError(f"The lambda ladder must be geometric and increasing, got ratios {ratios}")


def dyadic_ladder(rungs: int = 4, base: float = 2.1) -> List[float]:
    '''
    lambda_j = 4 pi^2 (base 2^j)^2, j = 0..rungs-1
    '''
    return [4.0 * math.pi ** 2 * (base * 2.0 ** j) ** 2 for j in range(rungs)]


def constant_fit(
    V: Potential,
    grid: SpaceGrid,
    omega: SpaceMask,
    ladder: Sequence[float],
    amplitudes: Sequence[float] = (1.0,),
    shift_ladder: bool = False,
) -> ConstantFit:
    '''
    Description
    -----------
    Evaluates K over the ladder for each scaled potential M * V. With
    `shift_ladder` each rung is moved to lambda + sup(M V), the window rule
    of the shift reduction.
    '''
    _check_ladder(ladder)
    rows = []
    unit = TimeGrid(T=1.0, N=1)
    for M in amplitudes:
        scaled = V if M == 1.0 else AffinePotential(base=V, scale=M)
        basis = hill_eigensolve(scaled, grid)
        shift = norms(scaled, grid, unit).sup if shift_ladder else 0.0
        for rung in ladder:
            selected = window(basis, rung + shift)
            ratio = spectral_ratio(basis, selected, omega)
            rows.append(ConstantFitRow(
                lambda_cut=rung, M=M, omega_measure=omega.measure,
                max_ratio=ratio.max_ratio, K=ratio.K, window_size=selected.size))

    lambda_fits = []
    for M in amplitudes:
        subset = [row for row in rows if row.M == M]
        lambda_fits.append(_line_fit(M, [math.sqrt(r.lambda_cut) for r in subset], [r.K for r in subset]))
    M_fits = []
    if len(set(amplitudes)) >= 2:
        for rung in ladder:
            subset = [row for row in rows if row.lambda_cut == rung]
            M_fits.append(_line_fit(rung, [math.sqrt(abs(r.M)) for r in subset], [r.K for r in subset]))
    return ConstantFit(rows=rows, lambda_fits=lambda_fits, M_fits=M_fits)


class ShiftReduction(BaseModel):
    '''
    V_tilde = V + M with M = ||V||_inf: nonnegative, same eigenvectors,
    eigenvalues moved by exactly M.
    '''
    model_config = ConfigDict(frozen=True)

    V_tilde: AffinePotential
    M: float

    def shift_window(self, lambda_cut: float) -> float:
        return lambda_cut + self.M


def shift_reduce(V: Potential, grid: SpaceGrid) -> ShiftReduction:
    M = norms(V, grid, TimeGrid(T=1.0, N=1)).sup
    return ShiftReduction(V_tilde=AffinePotential(base=V, shift=M), M=M)
