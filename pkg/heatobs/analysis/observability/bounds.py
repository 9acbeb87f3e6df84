from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict

from heatobs.core.potential.norms import PotentialNorms

# All bounds are returned on log scale: the observability constant is exp(bound).


def _check_positive(**constants: float) -> None:
    for name, value in constants.items():
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")


def bound_new(T: float, norms: PotentialNorms, C: float = 1.0) -> float:
    '''
    C (1 + 1/T + T ||V|| + ||grad V||^{1/2} + ||dt V||^{1/3})
    '''
    _check_positive(T=T, C=C)
    return C * (1.0 + 1.0 / T + T * norms.sup + norms.grad_sup ** 0.5 + norms.dt_sup ** (1.0 / 3.0))


def bound_new_full(T: float, norms: PotentialNorms, C: float = 1.0) -> float:
    '''
    C (1 + 1/T + T ||V|| + [[V]]), the form before 2 ||V||^{1/2} <= 1/T + T ||V||
    absorbs the square-root term
    '''
    _check_positive(T=T, C=C)
    return C * (1.0 + 1.0 / T + T * norms.sup + norms.triple)


def bound_classical(T: float, norms: PotentialNorms, C: float = 1.0) -> float:
    '''
    C (1 + 1/T + T ||V|| + ||V||^{2/3})
    '''
    _check_positive(T=T, C=C)
    return C * (1.0 + 1.0 / T + T * norms.sup + norms.sup ** (2.0 / 3.0))


def bound_split(
    T: float,
    norms1: PotentialNorms,
    norms2: PotentialNorms,
    C: float = 1.0,
    sup: Optional[float] = None,
) -> float:
    '''
    Mixed bound for V = V1 + V2 with a regular part V1 and a rough part V2:
    C (1 + 1/T + T ||V|| + ||grad V1||^{1/2} + ||dt V1||^{1/3} + ||V2||^{2/3}).
    Without `sup`, ||V|| is bounded by ||V1|| + ||V2||.
    '''
    _check_positive(T=T, C=C)
    total = norms1.sup + norms2.sup if sup is None else sup
    return C * (
        1.0 + 1.0 / T + T * total
        + norms1.grad_sup ** 0.5 + norms1.dt_sup ** (1.0 / 3.0)
        + norms2.sup ** (2.0 / 3.0)
    )


def bound_1d(
    T: float,
    norms: PotentialNorms,
    C_E: float = 1.0,
    C_domain: float = 1.0,
    corollary: bool = False,
) -> float:
    '''
    C_E + T ||V_-|| + C_domain ||V||^{1/2} for a measurable time set; with
    `corollary=True` (E = (0, T)) the form C_domain (1/T + T ||V_-|| + ||V||^{1/2}).
    '''
    _check_positive(T=T, C_E=C_E, C_domain=C_domain)
    if corollary:
        return C_domain * (1.0 / T + T * norms.neg_sup + norms.sup ** 0.5)
    return C_E + T * norms.neg_sup + C_domain * norms.sup ** 0.5


class BoundReport(BaseModel):
    '''
    Description
    -----------
    Predicted log-bounds side by side. The constants C are not explicit, so
    these values support shape comparisons only.
    '''
    model_config = ConfigDict(frozen=True)

    log_bound_new: float
    log_bound_new_full: float
    log_bound_classical: float
    log_bound_split: Optional[float] = None
    log_bound_1d: Optional[float] = None
    chosen_C: float
    large_norm: bool


def bound_report(
    T: float,
    norms: PotentialNorms,
    C: float = 1.0,
    split: Optional[Tuple[PotentialNorms, PotentialNorms]] = None,
    C_E: Optional[float] = None,
    C_domain: Optional[float] = None,
    corollary: bool = False,
) -> BoundReport:
    log_bound_1d = None
    if C_domain is not None:
        log_bound_1d = bound_1d(T, norms, C_E=C_E if C_E is not None else 1.0, C_domain=C_domain, corollary=corollary)
    return BoundReport(
        log_bound_new=bound_new(T, norms, C),
        log_bound_new_full=bound_new_full(T, norms, C),
        log_bound_classical=bound_classical(T, norms, C),
        log_bound_split=None if split is None else bound_split(T, split[0], split[1], C, sup=norms.sup),
        log_bound_1d=log_bound_1d,
        chosen_C=C,
        large_norm=norms.large_norm,
    )
