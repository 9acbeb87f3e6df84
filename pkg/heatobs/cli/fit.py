import logging
from fractions import Fraction
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict

logger = logging.getLogger(__name__)

DEFAULT_EXPONENTS = (1.0 / 3.0, 0.5, 2.0 / 3.0)


class FitResult(BaseModel):
    '''
    Description
    -----------
    Ordinary least squares of y = a + b x^p for one fixed exponent p.

    Attributes
    ----------
    ```
    model : str
    ```
    Readable model name, e.g. "y = a + b*x^(1/2)"
    ```
    coefficients : List[float]
    ```
    (a, b)
    ```
    residual_sum : float
    ```
    Sum of squared residuals
    ```
    r_squared : float
    ```
    Coefficient of determination; 1 when the data are reproduced exactly
    '''
    model_config = ConfigDict(frozen=True)

    model: str
    exponent: float
    coefficients: List[float]
    residual_sum: float
    r_squared: float

    @property
    def intercept(self) -> float:
        return self.coefficients[0]

    @property
    def slope(self) -> float:
        return self.coefficients[1]


class FitReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    x_column: str
    y_column: str
    rows: int
    fits: List[FitResult]
    best: FitResult


def _exponent_label(p: float) -> str:
    fraction = Fraction(p).limit_denominator(12)
    if abs(float(fraction) - p) < 1e-12:
        return str(fraction)
    return f"{p:g}"


def fit_single(x: np.ndarray, y: np.ndarray, p: float) -> FitResult:
    design = np.column_stack([np.ones_like(x), x ** p])
    coefficients, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < 2:
        raise ValueError(f"Degenerate design matrix for exponent {p}: x^p takes a single value")
    residual = y - design @ coefficients
    ss_res = float(residual @ residual)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot > 0:
        r_squared = 1.0 - ss_res / ss_tot
    else:
        r_squared = 1.0 if ss_res <= 1e-24 * max(1.0, float(y @ y)) else 0.0
    return FitResult(
        model=f"y = a + b*x^({_exponent_label(p)})",
        exponent=p,
        coefficients=[float(c) for c in coefficients],
        residual_sum=ss_res,
        r_squared=r_squared,
    )


def fit_exponent(
    table: pd.DataFrame,
    x_column: str,
    y_column: str,
    exponents: Optional[Sequence[float]] = None,
) -> FitReport:
    '''
    Description
    -----------
    Fits y = a + b x^p for each candidate exponent and reports the one with
    the smallest residual sum. Rows with a missing or non-finite x or y
    (failed sweep rows) are dropped first.
    '''
    exponents = list(DEFAULT_EXPONENTS if exponents is None else exponents)
    if not exponents:
        raise ValueError("At least one candidate exponent is required")
    for column in (x_column, y_column):
        if column not in table.columns:
            raise KeyError(f"Column '{column}' not in table columns {list(table.columns)}")

    data = table[[x_column, y_column]].apply(pd.to_numeric, errors='coerce')
    data = data[np.isfinite(data[x_column]) & np.isfinite(data[y_column])]
    x, y = data[x_column].to_numpy(dtype=float), data[y_column].to_numpy(dtype=float)
    if len(x) < 2:
        raise ValueError(f"Need at least 2 usable rows, got {len(x)}")
    if np.any(x <= 0):
        raise ValueError(f"Column '{x_column}' must be positive")
    if len(x) < 3:
        logger.warning(f"Only {len(x)} rows: every two-parameter fit interpolates exactly")

    fits = [fit_single(x, y, p) for p in exponents]
    best = min(fits, key=lambda fit: fit.residual_sum)
    logger.info(f"Best exponent for {y_column} against {x_column}: {best.model} (R^2={best.r_squared:.4f})")
    return FitReport(x_column=x_column, y_column=y_column, rows=len(x), fits=fits, best=best)
