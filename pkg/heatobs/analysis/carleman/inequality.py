import logging
import math
from typing import List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from tqdm import tqdm

from heatobs.analysis.carleman.weights import CarlemanParams, XiFunction, weights
from heatobs.core.mesh.base import SpaceGrid, SpaceMask, TimeGrid
from heatobs.core.pde.base import SpaceTimeField, centered_gradient, laplacian
from heatobs.core.potential.base import Potential
from heatobs.core.potential.norms import evaluate_midstep

logger = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny


class CarlemanSides(BaseModel):
    '''
    Description
    -----------
    The five weighted space-time sums of the Carleman inequality at one tau:

        lhs3     = tau^3 lam^4 sum e^{-2 tau beta} eta^3 w^2
        lhs1     = tau lam^2   sum e^{-2 tau beta} eta |grad w|^2
        lhs_neg1 = tau^{-1}    sum e^{-2 tau beta} eta^{-1} (|lap w|^2 + |w_t|^2)
        rhs_f    =             sum e^{-2 tau beta} |f|^2
        rhs_local= tau^3 lam^4 sum_{omega} e^{-2 tau beta} eta^3 w^2

    `holds` is C1 (rhs_f + rhs_local) >= lhs3 + lhs1 + lhs_neg1 and `slack`
    the relative margin (C1 rhs - lhs)/lhs.
    '''
    model_config = ConfigDict(frozen=True)

    tau: float
    lam: float
    C1: float
    lhs3: float
    lhs1: float
    lhs_neg1: float
    rhs_f: float
    rhs_local: float
    holds: bool
    slack: float

    @property
    def lhs(self) -> float:
        return self.lhs3 + self.lhs1 + self.lhs_neg1

    @property
    def rhs(self) -> float:
        return self.rhs_f + self.rhs_local


class CarlemanEvaluator:
    '''
    Precomputes everything in the Carleman sums that does not depend on tau
    for one field w, so that `sides(tau, C1)` costs a few weighted reductions.

    The operator is f = w_t + lap w + V w. With `adjoint_form=True` it is
    f = w_t + lap w - V w, which vanishes on solutions of the adjoint scheme.
    '''

    def __init__(
        self,
        w: SpaceTimeField,
        V: Potential,
        xi: XiFunction,
        params: CarlemanParams,
        omega: SpaceMask,
        adjoint_form: bool = False,
    ):
        grid, tg = w.grid, w.tg
        if omega.grid != grid:
            raise ValueError("The observation mask refers to a different space grid")
        self.lam = params.lam
        self.quadrature = grid.h * tg.dt

        mid = w.midpoints()
        wt = np.diff(w.values, axis=0) / tg.dt
        lap = laplacian(mid, grid.h)
        grad = centered_gradient(mid, grid.h)
        potential = evaluate_midstep(V, grid, tg).T
        sign = -1.0 if adjoint_form else 1.0
        f = wt + lap + sign * potential * mid

        field = weights(xi, params, grid, tg)
        self._beta = field.beta
        self._log_eta = field.log_eta
        self._w2 = mid ** 2
        self._w2_local = np.where(omega.mask[None, :], self._w2, 0.0)
        self._grad2 = grad ** 2
        self._second2 = lap ** 2 + wt ** 2
        self._f2 = f ** 2

    def _weighted(self, tau: float, power: float, values: np.ndarray) -> float:
        weight = np.exp(-2.0 * tau * self._beta + power * self._log_eta)
        return float(self.quadrature * np.sum(weight * values))

    def sides(self, tau: float, C1: float) -> CarlemanSides:
        lam = self.lam
        lhs3 = tau ** 3 * lam ** 4 * self._weighted(tau, 3.0, self._w2)
        lhs1 = tau * lam ** 2 * self._weighted(tau, 1.0, self._grad2)
        lhs_neg1 = self._weighted(tau, -1.0, self._second2) / tau
        rhs_f = self._weighted(tau, 0.0, self._f2)
        rhs_local = tau ** 3 * lam ** 4 * self._weighted(tau, 3.0, self._w2_local)

        lhs = lhs3 + lhs1 + lhs_neg1
        rhs = C1 * (rhs_f + rhs_local)
        return CarlemanSides(
            tau=tau,
            lam=lam,
            C1=C1,
            lhs3=lhs3,
            lhs1=lhs1,
            lhs_neg1=lhs_neg1,
            rhs_f=rhs_f,
            rhs_local=rhs_local,
            holds=rhs >= lhs,
            slack=(rhs - lhs) / max(lhs, _TINY),
        )


def carleman_sides(
    w: SpaceTimeField,
    V: Potential,
    xi: XiFunction,
    params: CarlemanParams,
    omega: SpaceMask,
    adjoint_form: bool = False,
) -> CarlemanSides:
    return CarlemanEvaluator(w, V, xi, params, omega, adjoint_form).sides(params.tau, params.C1)


def random_sine_corpus(
    grid: SpaceGrid,
    tg: TimeGrid,
    size: int,
    seed: int = 0,
    modes: int = 8,
) -> List[SpaceTimeField]:
    '''
    Seeded fields sum_{k,l} g_kl (k + l)^{-2} sin(k pi z) cos(l pi t/T) with
    standard Gaussian g_kl, k = 1..modes, l = 0..modes-1.
    '''
    rng = np.random.default_rng(seed)
    z = (grid.nodes - grid.a) / grid.length
    k = np.arange(1, modes + 1)
    l = np.arange(modes)
    space = np.sin(np.pi * np.outer(k, z))                  # (modes, n)
    time = np.cos(np.pi * np.outer(tg.times / tg.T, l))     # (N + 1, modes)
    decay = 1.0 / (k[:, None] + l[None, :]) ** 2            # (k, l)

    corpus = []
    for _ in range(size):
        coefficients = rng.standard_normal((modes, modes)) * decay
        values = time @ coefficients.T @ space
        corpus.append(SpaceTimeField(grid=grid, tg=tg, values=values))
    return corpus


def calibrate_c1(
    corpus: Sequence[SpaceTimeField],
    V: Potential,
    xi: XiFunction,
    params: CarlemanParams,
    omega: SpaceMask,
    tau_ref: float = 1.0,
    margin: float = 1.05,
    adjoint_form: bool = False,
) -> float:
    '''
    Smallest C1 making the inequality hold on every corpus member at
    tau_ref, times `margin`.
    '''
    worst = 0.0
    for w in corpus:
        sides = CarlemanEvaluator(w, V, xi, params, omega, adjoint_form).sides(tau_ref, 1.0)
        if sides.rhs > 0:
            worst = max(worst, sides.lhs / sides.rhs)
        elif sides.lhs > 0:
            raise ValueError("A corpus member has a vanishing right-hand side but a positive left-hand side")
    if worst == 0.0:
        logger.warning("Calibration corpus is degenerate; C1 defaults to 1")
        return 1.0
    return margin * worst


class TauSearchResult(BaseModel):
    '''
    Description
    -----------
    Outcome of the minimal-tau bisection.

    Attributes
    ----------
    ```
    found : bool
    ```
    False when the inequality already fails at tau_hi
    ```
    tau_star : float | None
    ```
    Smallest tau found at which every corpus member satisfies the inequality
    ```
    degenerate : bool
    ```
    The smallest candidate already holds; tau_star is that candidate
    ```
    verified, refuted : bool
    ```
    Holds at tau_star; fails at tau_star/1.05
    ```
    min_slack : float | None
    ```
    Smallest relative slack over the corpus at tau_star
    '''
    model_config = ConfigDict(frozen=True)

    found: bool
    tau_star: Optional[float] = None
    tau_hi: float
    degenerate: bool = False
    verified: bool = False
    refuted: bool = False
    min_slack: Optional[float] = None
    evaluations: int = 0
    reason: str = ""


def min_tau_search(
    corpus: Sequence[SpaceTimeField],
    V: Potential,
    xi: XiFunction,
    params: CarlemanParams,
    omega: SpaceMask,
    tau_hi: float,
    iterations: int = 40,
    floor_ratio: float = 1e-12,
    adjoint_form: bool = False,
    verbose: bool = False,
) -> TauSearchResult:
    '''
    Description
    -----------
    Log-space bisection on (tau_hi * floor_ratio, tau_hi] for the smallest
    tau at which the inequality holds for every corpus member, using
    `params.lam` and `params.C1`. The result is re-verified at tau* and
    refuted at tau*/1.05; a warning is logged when the refutation fails.
    '''
    if not tau_hi > 0:
        raise ValueError(f"tau_hi must be positive, got {tau_hi}")

    iterator = tqdm(corpus, desc="Carleman corpus", leave=False) if verbose else corpus
    evaluators = [CarlemanEvaluator(w, V, xi, params, omega, adjoint_form) for w in iterator]
    evaluations = 0

    def all_hold(tau: float) -> bool:
        nonlocal evaluations
        evaluations += 1
        return all(ev.sides(tau, params.C1).holds for ev in evaluators)

    def min_slack(tau: float) -> float:
        return min((ev.sides(tau, params.C1).slack for ev in evaluators), default=math.inf)

    if not all_hold(tau_hi):
        reason = f"The inequality fails at tau_hi={tau_hi:.4g} with C1={params.C1:.4g}"
        logger.warning(reason)
        return TauSearchResult(found=False, tau_hi=tau_hi, evaluations=evaluations, reason=reason)

    lo = tau_hi * floor_ratio
    if all_hold(lo):
        logger.info(f"Inequality holds at the smallest candidate tau={lo:.3e}; reporting a degenerate search")
        return TauSearchResult(found=True, tau_star=lo, tau_hi=tau_hi, degenerate=True, verified=True,
                               min_slack=min_slack(lo), evaluations=evaluations)

    log_lo, log_hi = math.log(lo), math.log(tau_hi)
    for _ in range(iterations):
        log_mid = 0.5 * (log_lo + log_hi)
        if all_hold(math.exp(log_mid)):
            log_hi = log_mid
        else:
            log_lo = log_mid

    tau_star = math.exp(log_hi)
    verified = all_hold(tau_star)
    refuted = not all_hold(tau_star / 1.05)
    if not refuted:
        logger.warning(f"Inequality also holds at tau*/1.05 = {tau_star / 1.05:.4g}; the holding set is not monotone in tau")
    logger.info(f"Minimal tau search: tau*={tau_star:.6g} after {evaluations} evaluations")
    return TauSearchResult(
        found=True,
        tau_star=tau_star,
        tau_hi=tau_hi,
        verified=verified,
        refuted=refuted,
        min_slack=min_slack(tau_star),
        evaluations=evaluations,
    )
