"""Fit indices against saturated and independence models, and Mardia's test."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .estimation import LOG2PI, FitResult
from .kernels import mardia_sums
from .model import Dataset, implied_moments

__all__ = [
    "FitIndices",
    "MardiaResult",
    "ReferenceFit",
    "saturated_fit",
    "independence_fit",
    "fit_indices",
    "fit_indices_from_moments",
    "mardia_test",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitIndices:
    aic: float
    bic: float
    cfi: float
    rmsea: float
    srmr: float
    chisq_model: float
    df_model: int
    chisq_baseline: float
    df_baseline: int
    loglik: float
    n_params: int


@dataclass(frozen=True)
class ReferenceFit:
    """Closed-form ML fit of a reference model (saturated or independence)."""

    Pi: np.ndarray
    Omega: np.ndarray
    loglik: float
    n_params: int


def _gauss_loglik(n, p, Omega, W):
    sign, logdet = np.linalg.slogdet(Omega)
    if sign <= 0:
        raise np.linalg.LinAlgError("reference covariance is not positive definite")
    return float(-0.5 * n * logdet - 0.5 * np.trace(np.linalg.solve(Omega, W)) - 0.5 * n * p * LOG2PI)


def saturated_fit(dataset: Dataset) -> ReferenceFit:
    """Unrestricted regression of Y on X with a free error covariance."""
    X, Y = dataset.X, dataset.Y
    n, p = Y.shape
    Pi = np.linalg.solve(X.T @ X, X.T @ Y)
    R = Y - X @ Pi
    W = R.T @ R
    Omega = W / n
    return ReferenceFit(Pi, Omega, _gauss_loglik(n, p, Omega, W), dataset.k * p + p * (p + 1) // 2)


def independence_fit(dataset: Dataset) -> ReferenceFit:
    """Baseline: no cause effects and uncorrelated indicators."""
    Y = dataset.Y
    n, p = Y.shape
    Omega = np.diag((Y * Y).sum(axis=0) / n)
    return ReferenceFit(np.zeros((dataset.k, p)), Omega, _gauss_loglik(n, p, Omega, Y.T @ Y), p)


def _srmr(dataset: Dataset, Pi: np.ndarray, Omega: np.ndarray) -> float:
    # Second moments about zero: the inputs are centered by standardization,
    # and this keeps the saturated model's residuals exactly zero.
    X, Y = dataset.X, dataset.Y
    n = Y.shape[0]
    S = Y.T @ Y / n
    implied = Pi.T @ (X.T @ X / n) @ Pi + Omega
    sd = np.sqrt(np.diag(S))
    resid = (S - implied) / np.outer(sd, sd)
    low = np.tril_indices(S.shape[0])
    return float(np.sqrt(np.mean(resid[low] ** 2)))


def fit_indices_from_moments(
    dataset: Dataset, loglik: float, n_params: int, Pi: np.ndarray, Omega: np.ndarray
) -> FitIndices:
    """Indices for any model summarized by its log-likelihood and implied moments."""
    n, p = dataset.n, dataset.p
    sat = saturated_fit(dataset)
    base = independence_fit(dataset)
    df_m = sat.n_params - n_params
    df_b = sat.n_params - base.n_params
    if df_m < 0:
        raise ValueError(f"model has more parameters ({n_params}) than the saturated model")
    chisq_m = 2.0 * (sat.loglik - loglik)
    if chisq_m < 0:
        if chisq_m < -1e-6 * max(1.0, abs(loglik)):
            log.warning("negative model chi-square %.3g clamped to 0", chisq_m)
        chisq_m = 0.0
    chisq_b = max(2.0 * (sat.loglik - base.loglik), 0.0)

    num = max(chisq_m - df_m, 0.0)
    den = max(chisq_m - df_m, chisq_b - df_b, 0.0)
    cfi = 1.0 if den == 0 else 1.0 - num / den
    rmsea = 0.0 if df_m == 0 else float(np.sqrt(num / (df_m * n)))
    return FitIndices(
        aic=2 * n_params - 2 * loglik,
        bic=n_params * np.log(n) - 2 * loglik,
        cfi=float(min(max(cfi, 0.0), 1.0)),
        rmsea=rmsea,
        srmr=_srmr(dataset, Pi, Omega),
        chisq_model=float(chisq_m),
        df_model=int(df_m),
        chisq_baseline=float(chisq_b),
        df_baseline=int(df_b),
        loglik=float(loglik),
        n_params=int(n_params),
    )


def fit_indices(dataset: Dataset, fit: FitResult | ReferenceFit) -> FitIndices:
    """AIC, BIC, CFI, RMSEA and SRMR for a fitted MIMIC (or reference) model.

    The chi-square compares against the saturated regression of Y on X; the
    CFI baseline is the independence model. RMSEA uses N (not N-1).
    """
    if isinstance(fit, ReferenceFit):
        return fit_indices_from_moments(dataset, fit.loglik, fit.n_params, fit.Pi, fit.Omega)
    m = implied_moments(fit.spec, fit.params)
    return fit_indices_from_moments(dataset, fit.loglik, fit.n_free, m.Pi, m.Omega)


@dataclass(frozen=True)
class MardiaResult:
    skewness: float  # b1,p
    kurtosis: float  # b2,p
    skewness_stat: float
    kurtosis_stat: float
    skewness_pvalue: float
    kurtosis_pvalue: float
    alpha: float
    rejected: bool


def mardia_test(Y, alpha: float = 0.05) -> MardiaResult:
    """Mardia's multivariate skewness and kurtosis tests.

    Skewness ``N b1 / 6`` is referred to chi-square with ``p(p+1)(p+2)/6`` df;
    kurtosis ``(b2 - p(p+2)) / sqrt(8p(p+2)/N)`` to the standard normal
    (two-sided). Normality is rejected when either p-value is below
    ``alpha / 2``, so the joint test has level ``alpha``.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, p = Y.shape
    if n <= p:
        raise ValueError(f"need N > p, got N={n}, p={p}")
    Z = Y - Y.mean(axis=0)
    S = Z.T @ Z / n
    evals, evecs = np.linalg.eigh(S)
    if evals[0] <= evals[-1] * 1e-12:
        raise np.linalg.LinAlgError("sample covariance is singular")
    white = Z @ (evecs / np.sqrt(evals)) @ evecs.T
    cube_sum, sq_diag_sum = mardia_sums(np.ascontiguousarray(white))
    b1 = cube_sum / n**2
    b2 = sq_diag_sum / n
    skew_stat = n * b1 / 6.0
    kurt_stat = (b2 - p * (p + 2)) / np.sqrt(8.0 * p * (p + 2) / n)
    p_skew = float(stats.chi2.sf(skew_stat, p * (p + 1) * (p + 2) / 6.0))
    p_kurt = float(2 * stats.norm.sf(abs(kurt_stat)))
    return MardiaResult(
        skewness=float(b1),
        kurtosis=float(b2),
        skewness_stat=float(skew_stat),
        kurtosis_stat=float(kurt_stat),
        skewness_pvalue=p_skew,
        kurtosis_pvalue=p_kurt,
        alpha=alpha,
        rejected=bool(min(p_skew, p_kurt) < alpha / 2),
    )
