import logging
import math
from typing import Any, Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy.linalg import eigh

logger = logging.getLogger(__name__)

LinearOperator = Callable[[np.ndarray], np.ndarray]

__all__ = [
    "LinearOperator",
    "CGResult",
    "PencilResult",
    "conjugate_gradient",
    "hutchinson_trace",
    "pencil_power_iteration",
    "assemble",
    "dense_pencil_maximum",
]


class CGResult(BaseModel):
    '''
    Description
    -----------
    Outcome of a conjugate gradient solve. `x` is the best iterate seen and
    `residual` its true relative residual ||b - A x|| / ||b||.
    '''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    x: np.ndarray
    iterations: int
    residual: float
    converged: bool


def conjugate_gradient(
    apply: LinearOperator,
    b: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 500,
    x0: Optional[np.ndarray] = None,
    replace_every: int = 50,
) -> CGResult:
    '''
    Description
    -----------
    Matrix-free conjugate gradient for a symmetric positive semidefinite
    operator in the Euclidean inner product. The recursive residual is
    replaced by the true residual every `replace_every` iterations.
    Non-convergence is not an error: the best iterate is returned with
    `converged=False`.
    '''
    b = np.asarray(b, dtype=float)
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return CGResult(x=np.zeros_like(b), iterations=0, residual=0.0, converged=True)

    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = np.array(x0, dtype=float)
        r = b - apply(x)

    d = r.copy()
    delta = float(r @ r)
    best_x, best_res = x.copy(), math.sqrt(delta) / b_norm
    converged = best_res <= tol
    iterations = 0

    while not converged and iterations < max_iter:
        iterations += 1
        Ad = apply(d)
        curvature = float(d @ Ad)
        if curvature <= 0.0:
            logger.debug(f"CG stopped on non-positive curvature {curvature:.3e} at iteration {iterations}")
            break
        alpha = delta / curvature
        x += alpha * d
        if iterations % replace_every == 0:
            r = b - apply(x)
        else:
            r -= alpha * Ad
        delta_new = float(r @ r)

        res = math.sqrt(delta_new) / b_norm
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= tol:
            converged = True
            break
        d = r + (delta_new / delta) * d
        delta = delta_new

    true_residual = float(np.linalg.norm(b - apply(best_x))) / b_norm
    if not converged:
        logger.warning(f"CG did not reach tol={tol:.1e} in {iterations} iterations (residual {true_residual:.3e})")
    return CGResult(x=best_x, iterations=iterations, residual=true_residual, converged=converged)


def hutchinson_trace(
    apply: LinearOperator,
    dim: int,
    probes: int = 8,
    rng: Any = None,
) -> float:
    '''
    Stochastic trace estimate mean(z^T A z) over Rademacher probes z.
    '''
    rng = np.random.default_rng(rng)
    samples = rng.choice([-1.0, 1.0], size=(probes, dim))
    return float(np.mean([z @ apply(z) for z in samples]))


class PencilResult(BaseModel):
    '''
    Description
    -----------
    Largest generalized eigenvalue rho of the pencil (N, D) found by power
    iteration on D^{-1} N.

    Attributes
    ----------
    ```
    value : float
    ```
    Generalized Rayleigh quotient q.Nq / q.Dq at the returned vector
    ```
    vector : np.ndarray
    ```
    Unit Euclidean-norm iterate
    ```
    residual : float
    ```
    ||N q - rho D q|| / ||N q||
    ```
    inner_iterations : int
    ```
    Total conjugate gradient iterations spent on the D solves
    ```
    inner_failures : int
    ```
    Inner solves that stopped above their tolerance; any failure leaves
    the result non-converged
    '''
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    value: float
    vector: np.ndarray
    iterations: int
    residual: float
    converged: bool
    inner_iterations: int = 0
    inner_failures: int = 0


def pencil_power_iteration(
    numerator: LinearOperator,
    denominator: LinearOperator,
    dim: int,
    x0: Optional[np.ndarray] = None,
    tol: float = 1e-8,
    max_iter: int = 50,
    inner_tol: float = 1e-3,
    final_tol: float = 1e-8,
    final_steps: int = 2,
    inner_max_iter: Optional[int] = None,
    rng: Any = None,
) -> PencilResult:
    '''
    Description
    -----------
    Power iteration q <- D^{-1} N q for symmetric positive semidefinite N and
    positive definite D. Inner solves run at `inner_tol`; once successive
    quotients agree to max(tol, 1e-6) the remaining steps run at `final_tol`,
    and convergence is declared after at least `final_steps` tight steps
    with a relative change below `tol`. A run in which any inner solve
    missed its tolerance is reported with `converged=False`.
    '''
    if x0 is None:
        x0 = np.random.default_rng(rng).standard_normal(dim)
    q = np.asarray(x0, dtype=float)
    q = q / np.linalg.norm(q)
    inner_max_iter = inner_max_iter or 10 * dim

    rho: Optional[float] = None
    residual = math.inf
    tight, tight_steps, inner_total, inner_failures = False, 0, 0, 0

    def _result(iteration: int, converged: bool) -> PencilResult:
        if converged and inner_failures:
            logger.warning(
                f"Pencil power iteration settled after {iteration} iterations but {inner_failures} "
                f"inner solves missed their tolerance; the value is not reliable")
        return PencilResult(value=rho if rho is not None else 0.0, vector=q, iterations=iteration,
                            residual=residual, converged=converged and inner_failures == 0,
                            inner_iterations=inner_total, inner_failures=inner_failures)

    for iteration in range(1, max_iter + 1):
        Nq = numerator(q)
        Nq_norm = float(np.linalg.norm(Nq))
        if Nq_norm == 0.0:
            logger.debug("Numerator vanishes on the iterate; the pencil maximum is 0")
            rho, residual = 0.0, 0.0
            return _result(iteration, True)
        Dq = denominator(q)
        rho_new = float(q @ Nq) / float(q @ Dq)
        residual = float(np.linalg.norm(Nq - rho_new * Dq)) / Nq_norm

        change = math.inf if rho is None else abs(rho_new - rho) / abs(rho_new)
        rho = rho_new
        logger.debug(f"Pencil iteration {iteration}: rho={rho:.12e}, change={change:.2e}, residual={residual:.2e}")

        if tight and tight_steps >= final_steps and change < tol:
            logger.info(f"Pencil power iteration converged in {iteration} iterations, rho={rho:.6e}")
            return _result(iteration, True)
        if not tight and change < max(tol, 1e-6):
            tight = True

        solve = conjugate_gradient(
            denominator,
            Nq,
            tol=final_tol if tight else inner_tol,
            max_iter=inner_max_iter,
            x0=rho * q,
        )
        inner_total += solve.iterations
        inner_failures += 0 if solve.converged else 1
        if tight:
            tight_steps += 1
        z_norm = float(np.linalg.norm(solve.x))
        if z_norm == 0.0:
            break
        q = solve.x / z_norm

    logger.warning(f"Pencil power iteration did not converge in {max_iter} iterations (residual {residual:.3e})")
    return _result(max_iter, False)


def assemble(apply: LinearOperator, dim: int) -> np.ndarray:
    '''
    Dense symmetric matrix of a symmetric operator from its action on the
    unit vectors, symmetrized to remove round-off asymmetry.
    '''
    columns = np.column_stack([apply(e) for e in np.eye(dim)])
    return 0.5 * (columns + columns.T)


def dense_pencil_maximum(numerator: np.ndarray, denominator: np.ndarray) -> PencilResult:
    '''
    Description
    -----------
    Largest generalized eigenvalue of the symmetric pencil (N, D) with D
    positive definite, by Cholesky reduction. Raises `LinAlgError` when D is
    not numerically positive definite.
    '''
    dim = numerator.shape[0]
    values, vectors = eigh(numerator, denominator, subset_by_index=[dim - 1, dim - 1])
    rho = max(float(values[0]), 0.0)
    q = vectors[:, 0] / np.linalg.norm(vectors[:, 0])
    Nq = numerator @ q
    Nq_norm = float(np.linalg.norm(Nq))
    residual = float(np.linalg.norm(Nq - rho * (denominator @ q))) / Nq_norm if Nq_norm > 0 else 0.0
    logger.debug(f"Dense pencil maximum rho={rho:.12e}, residual={residual:.2e}")
    return PencilResult(value=rho, vector=q, iterations=1, residual=residual, converged=True)
