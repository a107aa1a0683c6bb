"""Loess curve of the index against income, and the model's cubic income trend."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .estimation import FitResult
from .kernels import loess_rows

__all__ = [
    "CurveEstimate",
    "loess_fit",
    "GRP_TERMS",
    "cubic_coefficients",
    "cubic_trend",
    "evaluate_cubic",
    "trend_turning_points",
]

GRP_TERMS = ("grp_pc", "grp_pc2", "grp_pc3")


@dataclass(frozen=True)
class CurveEstimate:
    grid: np.ndarray
    fitted: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    se: np.ndarray
    bandwidth: float
    degree: int
    residual_sd: float
    equivalent_params: float


def loess_fit(
    x,
    y,
    span: float = 0.75,
    degree: int = 2,
    grid=None,
    n_grid: int = 100,
    z: float = 1.959963984540054,
) -> CurveEstimate:
    """Tricube-weighted local polynomial regression with a pointwise band.

    Each grid value is the intercept of a degree-``degree`` weighted least
    squares fit over the ``floor(span * N)`` nearest observations. The band is
    ``fitted +/- z * s * ||l(x0)||`` where ``l(x0)`` are the smoother weights
    and ``s^2 = RSS / tr((I - L)'(I - L))`` is a global residual variance.
    No robustness iterations are applied.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    n = x.size
    if y.size != n:
        raise ValueError("x and y must have the same length")
    if degree < 0:
        raise ValueError("degree must be >= 0")
    if n < degree + 2:
        raise ValueError(f"need at least degree + 2 = {degree + 2} points, got {n}")
    if np.ptp(x) == 0:
        raise ValueError("x values are all equal")
    if span <= 0:
        raise ValueError("span must be positive")
    if grid is None:
        grid = np.linspace(x.min(), x.max(), n_grid)
    grid = np.asarray(grid, dtype=float).ravel()
    if np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing")

    q = int(min(n, max(degree + 1, np.floor(span * n))))
    L_obs, _ = loess_rows(x, x, q, degree, span)
    resid = y - L_obs @ y
    I_L = np.eye(n) - L_obs
    delta1 = float(np.sum(I_L * I_L))
    s = float(np.sqrt(resid @ resid / delta1)) if delta1 > 0 else 0.0

    L_grid, _ = loess_rows(x, grid, q, degree, span)
    fitted = L_grid @ y
    se = s * np.sqrt(np.sum(L_grid * L_grid, axis=1))
    return CurveEstimate(
        grid=grid,
        fitted=fitted,
        ci_lower=fitted - z * se,
        ci_upper=fitted + z * se,
        se=se,
        bandwidth=float(span),
        degree=int(degree),
        residual_sd=s,
        equivalent_params=float(np.trace(L_obs)),
    )


def cubic_coefficients(fit: FitResult, terms: Sequence[str] = GRP_TERMS) -> np.ndarray:
    names = fit.spec.cause_names
    missing = [t for t in terms if t not in names]
    if missing:
        raise ValueError(f"model has no cause(s) {missing}; causes are {list(names)}")
    return np.array([fit.params.beta[names.index(t)] for t in terms])


def evaluate_cubic(coefs, grid) -> np.ndarray:
    """``c1 g + c2 g^2 + c3 g^3``."""
    c1, c2, c3 = coefs
    g = np.asarray(grid, dtype=float)
    return g * (c1 + g * (c2 + g * c3))


def cubic_trend(fit: FitResult, grp_grid, terms: Sequence[str] = GRP_TERMS) -> np.ndarray:
    """Model-implied partial effect of income, other causes held fixed.

    ``grp_grid`` is on the standardized income scale.
    """
    return evaluate_cubic(cubic_coefficients(fit, terms), grp_grid)


def trend_turning_points(coefs) -> np.ndarray:
    """Real roots of the derivative ``c1 + 2 c2 g + 3 c3 g^2``, ascending."""
    c1, c2, c3 = coefs
    roots = np.roots([3 * c3, 2 * c2, c1])
    return np.sort(roots[np.abs(roots.imag) < 1e-12].real)
