import logging
import math
from typing import Any, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.linalg import solve_banded

from heatobs.analysis.spectral.base import HillBasis, SpectralWindow
from heatobs.core.mesh.base import SpaceGrid
from heatobs.core.pde.base import HeatSolver, SpaceTimeField
from heatobs.core.potential.base import FunctionPotential, Potential
from heatobs.core.potential.norms import evaluate_nodes, norms

logger = logging.getLogger(__name__)


class GaugeResult(BaseModel):
    '''
    Description
    -----------
    y_hat = e^{-c t} y. The continuum identity is exact; on the grid the
    gauged field only satisfies the scheme with potential V + c up to
    O(dt^2), which `residual_norm` measures.
    '''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    field: SpaceTimeField
    c: float
    residual_norm: float


def gauge_time(y: SpaceTimeField, V: Potential, c: Optional[float] = None) -> GaugeResult:
    '''
    Description
    -----------
    Multiplies the field by e^{-c t_n} level by level. `c` defaults to
    ||V_-||_inf, which turns V into the nonnegative V + c.
    '''
    if c is None:
        c = norms(V, y.grid, y.tg).neg_sup
    factors = np.exp(-c * y.tg.times)
    gauged = SpaceTimeField(grid=y.grid, tg=y.tg, values=factors[:, None] * y.values, role=y.role)
    solver = HeatSolver(grid=y.grid, tg=y.tg, potential=V if c == 0 else V.shifted(c))
    return GaugeResult(field=gauged, c=c, residual_norm=solver.residual_norm(gauged))


class MultiplierResult(BaseModel):
    '''
    Description
    -----------
    Positive solution of -w'' + V w = 0 on (-1, 1) with w(+-1) = e^{sqrt M}
    and the pointwise check e^{-sqrt M} <= w <= e^{sqrt M}.

    Attributes
    ----------
    ```
    w : np.ndarray
    ```
    Values at the interior nodes of `grid`
    ```
    violation_x : float | None
    ```
    Node where the bound check fails worst, None when both bounds hold
    '''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: SpaceGrid
    M: float
    w: np.ndarray
    min_w: float
    max_w: float
    lower_holds: bool
    upper_holds: bool
    violation_x: Optional[float] = None

    @property
    def holds(self) -> bool:
        return self.lower_holds and self.upper_holds

    @property
    def bounds(self):
        root = math.sqrt(self.M)
        return (math.exp(-root), math.exp(root))


def multiplier_solve(V: Potential, n: int, M: float, slack: float = 1e-12) -> MultiplierResult:
    '''
    Description
    -----------
    One tridiagonal solve on the grid of (-1, 1) with n interior nodes.
    V is evaluated as a time-independent profile at t = 0. A failed bound
    is reported with its location, never raised: it signals a negative V
    or an M below ||V||_inf.
    '''
    if not M > 0:
        raise ValueError(f"M must be positive, got {M}")
    grid = SpaceGrid(a=-1.0, b=1.0, n=n)
    h2 = grid.h ** 2
    values = evaluate_nodes(V, grid, 0.0)
    if values.min() < 0:
        logger.warning(f"Multiplier potential takes negative values (min {values.min():.4g})")

    boundary = math.exp(math.sqrt(M))
    bands = np.empty((3, n))
    bands[0, :] = -1.0 / h2
    bands[2, :] = -1.0 / h2
    bands[0, 0] = 0.0
    bands[2, -1] = 0.0
    bands[1, :] = 2.0 / h2 + values
    rhs = np.zeros(n)
    rhs[0] += boundary / h2
    rhs[-1] += boundary / h2
    w = solve_banded((1, 1), bands, rhs)

    lo, hi = 1.0 / boundary, boundary
    lower = w >= lo * (1.0 - slack)
    upper = w <= hi * (1.0 + slack)
    violation_x = None
    if not (lower.all() and upper.all()):
        excess = np.maximum(lo - w, w - hi)
        violation_x = float(grid.nodes[int(np.argmax(excess))])
        logger.warning(f"Multiplier bound fails at x={violation_x:.6g} for M={M}")
    w.setflags(write=False)
    return MultiplierResult(
        grid=grid,
        M=M,
        w=w,
        min_w=float(w.min()),
        max_w=float(w.max()),
        lower_holds=bool(lower.all()),
        upper_holds=bool(upper.all()),
        violation_x=violation_x,
    )


def fold(x: Any, length: float) -> np.ndarray:
    '''
    Maps x to [0, L] by even reflection across 0 and 2L-periodicity.
    '''
    r = np.mod(np.asarray(x, dtype=float), 2.0 * length)
    return np.where(r > length, 2.0 * length - r, r)


def even_periodic_extension(V: Potential, length: float = 0.5) -> FunctionPotential:
    '''
    Even, 2L-periodic extension of a potential given on (0, L).
    '''
    if not length > 0:
        raise ValueError(f"length must be positive, got {length}")
    return FunctionPotential(
        fn=lambda x, t: V(fold(x, length), t),
        time_independent=V.is_time_independent,
    )


class ExtensionReport(BaseModel):
    '''
    Description
    -----------
    Diagnostics of u(x, y) = sum_k alpha_k cosh(sqrt(lambda_k) y) phi_k(x) on
    the tensor grid of [-1, 1]^2 with spacing h of the basis grid.

    Attributes
    ----------
    ```
    residual_norm : float
    ```
    Discrete L2 norm of the 5-point residual of -Delta u + V u on interior nodes
    ```
    neumann_defect : float
    ```
    max |u(x, h) - u(x, -h)| / 2h
    ```
    row_defect : float
    ```
    max |u(x, 0) - sum_k alpha_k phi_k(x)| over the basis nodes
    '''
    model_config = ConfigDict(frozen=True)

    residual_norm: float
    neumann_defect: float
    row_defect: float
    h: float
    points: int


def _odd_extension(vectors: np.ndarray, m: int, j: np.ndarray) -> np.ndarray:
    '''
    Odd reflection across x = 0 of columns given on nodes 1..m-1 of (0, L),
    continued with period 2L; node index j sits at x = j h.
    '''
    r = np.mod(j, 2 * m)
    out = np.zeros((len(j), vectors.shape[1]))
    left = (r > 0) & (r < m)
    right = r > m
    out[left] = vectors[r[left] - 1]
    out[right] = -vectors[2 * m - r[right] - 1]
    return out


def extension_check(
    basis: HillBasis,
    selected: SpectralWindow,
    coefficients: Sequence[float],
) -> ExtensionReport:
    '''
    Description
    -----------
    Builds the harmonic-type extension of the window function to the square
    (-1, 1)^2 for a basis on (0, 1/2) and evaluates the discrete equation
    -Delta u + V u = 0, V extended evenly in x. The window eigenvalues must
    be nonnegative; shift the potential first when they are not.
    '''
    grid = basis.grid
    if abs(grid.a) > 0 or abs(grid.b - 0.5) > 1e-12:
        raise ValueError(f"The extension needs a basis on (0, 1/2), got ({grid.a}, {grid.b})")
    indices = list(selected.indices)
    alpha = np.asarray(coefficients, dtype=float)
    if not indices:
        raise ValueError("The window is empty")
    if alpha.shape != (len(indices),):
        raise ValueError(f"Expected {len(indices)} coefficients, got shape {alpha.shape}")
    lambdas = basis.eigenvalues[indices]
    if lambdas.min() < 0:
        raise ValueError(f"Window eigenvalue {lambdas.min():.4g} is negative; apply shift_reduce first")

    h = grid.h
    m = grid.n + 1
    j = np.arange(-2 * m, 2 * m + 1)
    coords = j * h
    phi_ext = _odd_extension(basis.eigenvectors[:, indices], m, j)

    # Even extension of the nodal potential; the boundary nodes reuse V(0) and V(1/2)
    padded = np.concatenate([[basis.potential_values[0]], basis.potential_values, [basis.potential_values[-1]]])
    profile = np.interp(fold(coords, grid.b), grid.closed_nodes, padded)

    cosh = np.cosh(np.sqrt(lambdas)[None, :] * np.abs(coords)[:, None])
    U = phi_ext @ (alpha[:, None] * cosh.T)

    center = U[1:-1, 1:-1]
    lap = (U[2:, 1:-1] + U[:-2, 1:-1] + U[1:-1, 2:] + U[1:-1, :-2] - 4.0 * center) / h ** 2
    R = -lap + profile[1:-1, None] * center
    residual_norm = float(np.sqrt(h ** 2 * np.sum(R ** 2)))

    zero = 2 * m
    neumann = float(np.abs(U[:, zero + 1] - U[:, zero - 1]).max() / (2.0 * h))
    row = U[zero + 1:zero + m, zero]
    direct = basis.eigenvectors[:, indices] @ alpha
    return ExtensionReport(
        residual_norm=residual_norm,
        neumann_defect=neumann,
        row_defect=float(np.abs(row - direct).max()),
        h=h,
        points=len(j),
    )
