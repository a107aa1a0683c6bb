"""Maximum-likelihood estimation of the MIMIC model with fixed causes.

Free parameters on the natural scale are ordered
``[lambda_free (p-1), beta (k), theta (p), sigma]``; the optimizer works on
``[lambda_free, beta, log theta, log sigma]`` so that no bounds are needed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy import stats

from .model import (
    Dataset,
    ImpliedMoments,
    ModelSpec,
    ParameterSet,
    implied_moments,
    standardize_loadings,
)
from .optimize import bfgs

__all__ = [
    "SingularCovarianceError",
    "InformationMatrixError",
    "FitConfig",
    "FitResult",
    "residual_cross_product",
    "log_likelihood",
    "score_matrix",
    "gradient",
    "observed_information",
    "fit_ml",
    "robust_se",
    "satorra_bentler_scaling",
    "significance_stars",
    "standardized_estimates",
]

log = logging.getLogger(__name__)

LOG2PI = np.log(2.0 * np.pi)
MAX_CONDITION = 1e12
HEYWOOD_THETA = 1e-4
SE_METHODS = ("naive", "mlm", "mlr")


class SingularCovarianceError(ArithmeticError):
    """Omega is numerically singular, so the likelihood is not finite."""


class InformationMatrixError(ArithmeticError):
    """Observed information is singular or indefinite at the estimate."""


@dataclass(frozen=True)
class FitConfig:
    gtol: float = 1e-6
    ftol: float = 1e-10
    max_iter: int = 500
    se_methods: tuple[str, ...] = SE_METHODS
    hessian_step: float = 1e-5
    start: ParameterSet | None = None

    def __post_init__(self):
        bad = set(self.se_methods) - set(SE_METHODS)
        if bad:
            raise ValueError(f"unknown SE methods {sorted(bad)}; choose from {SE_METHODS}")


@dataclass(frozen=True)
class FitResult:
    spec: ModelSpec
    params: ParameterSet
    params_standardized: ParameterSet
    loglik: float
    loglik_start: float
    n_obs: int
    se_naive: np.ndarray
    se_mlm: np.ndarray
    se_mlr: np.ndarray
    significance: tuple[str, ...]
    converged: bool
    iterations: int
    gradient_norm: float
    mlm_scaling: float = np.nan
    cov: dict = field(default_factory=dict, compare=False)
    flags: tuple[str, ...] = ()

    @property
    def param_names(self) -> list[str]:
        return self.spec.param_names()

    @property
    def estimates(self) -> np.ndarray:
        return self.params.to_free(self.spec)

    @property
    def n_free(self) -> int:
        return self.spec.n_free

    def se(self, method: str) -> np.ndarray:
        return {"naive": self.se_naive, "mlm": self.se_mlm, "mlr": self.se_mlr}[method]


# -- likelihood pieces -------------------------------------------------------


def _unpack(spec: ModelSpec, vec: np.ndarray):
    p, k = spec.p, spec.k
    lam = np.ones(p)
    lam[spec.free_loadings] = vec[: p - 1]
    beta = vec[p - 1 : p - 1 + k]
    theta = vec[p - 1 + k : 2 * p - 1 + k]
    return lam, beta, theta, vec[-1]


def _omega(lam, theta, sigma):
    return sigma * sigma * np.outer(lam, lam) + np.diag(theta * theta)


def _checked_inverse(Omega):
    evals = np.linalg.eigvalsh(Omega)
    if evals[0] <= 0 or evals[-1] / evals[0] > MAX_CONDITION:
        raise SingularCovarianceError(
            f"Omega is numerically singular (eigenvalues {evals[0]:.3g} .. {evals[-1]:.3g})"
        )
    return np.linalg.inv(Omega), float(np.sum(np.log(evals)))


def residual_cross_product(dataset: Dataset, moments: ImpliedMoments) -> np.ndarray:
    """``W = (Y - X Pi)'(Y - X Pi)``, the p x p residual cross-product."""
    Pi = np.asarray(moments.Pi)
    if Pi.shape != (dataset.k, dataset.p):
        raise ValueError(f"Pi has shape {Pi.shape}, expected {(dataset.k, dataset.p)}")
    R = dataset.Y - dataset.X @ Pi
    W = R.T @ R
    return 0.5 * (W + W.T)


def _loglik_vec(dataset: Dataset, spec: ModelSpec, vec: np.ndarray) -> float:
    lam, beta, theta, sigma = _unpack(spec, vec)
    A, logdet = _checked_inverse(_omega(lam, theta, sigma))
    R = dataset.Y - np.outer(dataset.X @ beta, lam)
    n, p = dataset.Y.shape
    quad = np.einsum("ij,jk,ik->", R, A, R)
    return -0.5 * n * logdet - 0.5 * quad - 0.5 * p * n * LOG2PI


def log_likelihood(dataset: Dataset, spec: ModelSpec, params: ParameterSet) -> float:
    """Sum of N(Pi' x_n, Omega) log-densities of the indicator rows.

    ``L = -N/2 log|Omega| - 1/2 tr(Omega^-1 W) - pN/2 log(2 pi)``.
    Raises :class:`SingularCovarianceError` when Omega has condition number
    above 1e12.
    """
    if (dataset.p, dataset.k) != (spec.p, spec.k):
        raise ValueError("dataset dimensions do not match the model spec")
    m = implied_moments(spec, params)
    A, logdet = _checked_inverse(m.Omega)
    W = residual_cross_product(dataset, m)
    n = dataset.n
    return float(-0.5 * n * logdet - 0.5 * np.sum(A * W) - 0.5 * spec.p * n * LOG2PI)


def _scores_vec(dataset: Dataset, spec: ModelSpec, vec: np.ndarray) -> np.ndarray:
    lam, beta, theta, sigma = _unpack(spec, vec)
    A, _ = _checked_inverse(_omega(lam, theta, sigma))
    X, Y = dataset.X, dataset.Y
    t = X @ beta
    U = (Y - np.outer(t, lam)) @ A
    s = U @ lam
    a = A @ lam
    s2 = sigma * sigma
    g_lam = s2 * (U * s[:, None] - a) + U * t[:, None]
    g_beta = X * s[:, None]
    g_theta = theta * (U * U - np.diag(A))
    g_sigma = sigma * (s * s - lam @ a)
    return np.column_stack([g_lam[:, spec.free_loadings], g_beta, g_theta, g_sigma])


def score_matrix(dataset: Dataset, spec: ModelSpec, params: ParameterSet) -> np.ndarray:
    """Per-observation gradients (N x n_free) on the natural parameter scale."""
    return _scores_vec(dataset, spec, params.to_free(spec))


def gradient(dataset: Dataset, spec: ModelSpec, params: ParameterSet) -> np.ndarray:
    return score_matrix(dataset, spec, params).sum(axis=0)


def _hessian_vec(dataset, spec, vec, step):
    q = vec.size
    H = np.empty((q, q))
    for i in range(q):
        h = step * max(1.0, abs(vec[i]))
        e = np.zeros(q)
        e[i] = h
        gp = _scores_vec(dataset, spec, vec + e).sum(axis=0)
        gm = _scores_vec(dataset, spec, vec - e).sum(axis=0)
        H[:, i] = (gp - gm) / (2 * h)
    return 0.5 * (H + H.T)


def observed_information(
    dataset: Dataset, spec: ModelSpec, params: ParameterSet, step: float = 1e-5
) -> np.ndarray:
    """Negative Hessian of the log-likelihood by central differences of the gradient."""
    return -_hessian_vec(dataset, spec, params.to_free(spec), step)


# -- fitting -----------------------------------------------------------------


def _start_values(dataset: Dataset, spec: ModelSpec) -> ParameterSet:
    X, Y = dataset.X, dataset.Y
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    resid = Y - X @ coef
    theta = resid.std(axis=0, ddof=0)
    theta = np.where(theta > 1e-3, theta, 1.0)
    lam = np.ones(spec.p)
    return ParameterSet(lam, coef[:, spec.fixed_loading], theta, 0.5)


def _to_opt(spec, vec):
    u = vec.copy()
    j = spec.p - 1 + spec.k
    u[j:] = np.log(np.maximum(np.abs(vec[j:]), 1e-300))
    return u


def _from_opt(spec, u):
    vec = u.copy()
    j = spec.p - 1 + spec.k
    vec[j:] = np.exp(u[j:])
    return vec


def fit_ml(dataset: Dataset, spec: ModelSpec | None = None, config: FitConfig | None = None) -> FitResult:
    """Maximize the likelihood by BFGS on the log-SD scale, then compute SEs.

    Non-convergence returns the best point with ``converged=False``. A singular
    or indefinite information matrix at the optimum adds the flag
    ``"singular_information"`` and leaves the affected SEs as NaN.
    """
    spec = spec or ModelSpec.for_dataset(dataset)
    config = config or FitConfig()
    if (dataset.p, dataset.k) != (spec.p, spec.k):
        raise ValueError("dataset dimensions do not match the model spec")

    if np.linalg.matrix_rank(dataset.X) < dataset.k:
        raise np.linalg.LinAlgError("cause matrix is rank deficient (collinear causes)")
    start = config.start or _start_values(dataset, spec)
    if not start.is_identified(spec):
        raise ValueError("start values must have the fixed loading equal to 1")
    v0 = start.to_free(spec)
    if v0[-1] <= 0:
        v0[-1] = 1e-8
    j = spec.p - 1 + spec.k

    def f(u):
        with np.errstate(over="ignore"):
            vec = _from_opt(spec, u)
        if not np.all(np.isfinite(vec)):
            return np.inf
        try:
            return -_loglik_vec(dataset, spec, vec)
        except (SingularCovarianceError, np.linalg.LinAlgError):
            return np.inf

    def g(u):
        with np.errstate(over="ignore"):
            vec = _from_opt(spec, u)
        if not np.all(np.isfinite(vec)):
            return np.full(u.size, np.nan)
        try:
            gr = _scores_vec(dataset, spec, vec).sum(axis=0)
        except (SingularCovarianceError, np.linalg.LinAlgError):
            return np.full(u.size, np.nan)
        gr[j:] *= vec[j:]
        return -gr

    def h(u):
        Hm = np.empty((u.size, u.size))
        for i in range(u.size):
            e = np.zeros(u.size)
            e[i] = config.hessian_step * max(1.0, abs(u[i]))
            Hm[:, i] = (g(u + e) - g(u - e)) / (2 * e[i])
        return 0.5 * (Hm + Hm.T)

    u0 = _to_opt(spec, v0)
    loglik_start = -f(u0)
    res = bfgs(f, g, u0, gtol=config.gtol, ftol=config.ftol, max_iter=config.max_iter, hess=h)
    vec = _from_opt(spec, res.x)
    params = ParameterSet.from_free(spec, vec)
    if not res.converged:
        log.warning("MIMIC fit did not converge: %s (|g|=%.3g)", res.message, np.max(np.abs(res.grad)))

    flags = []
    if np.any(params.theta < HEYWOOD_THETA):
        flags.append("heywood")
    q = spec.n_free
    nan = np.full(q, np.nan)
    fit = FitResult(
        spec=spec,
        params=params,
        params_standardized=standardize_loadings(params),
        loglik=-res.fun,
        loglik_start=loglik_start,
        n_obs=dataset.n,
        se_naive=nan,
        se_mlm=nan,
        se_mlr=nan,
        significance=("",) * q,
        converged=res.converged,
        iterations=res.iterations,
        gradient_norm=float(np.max(np.abs(res.grad))),
        flags=tuple(flags),
    )
    return _attach_standard_errors(dataset, fit, config)


def _attach_standard_errors(dataset: Dataset, fit: FitResult, config: FitConfig) -> FitResult:
    spec = fit.spec
    q = spec.n_free
    ses = {m: np.full(q, np.nan) for m in SE_METHODS}
    covs = {}
    flags = list(fit.flags)
    scale = np.nan
    wanted = set(config.se_methods) | {"naive"}
    try:
        for method in SE_METHODS:
            if method not in wanted:
                continue
            cov = _covariance(dataset, fit, method, config.hessian_step)
            if method == "mlm":
                scale = cov.pop("scaling")
            covs[method] = cov["cov"]
            ses[method] = np.sqrt(np.diag(cov["cov"]))
    except InformationMatrixError as exc:
        log.warning("standard errors unavailable: %s", exc)
        flags.append("singular_information")
    except ValueError as exc:
        log.warning("robust standard errors unavailable: %s", exc)
        flags.append("robust_se_unavailable")
    est = fit.estimates
    stars = tuple(
        significance_stars(est[i], {m: ses[m][i] for m in SE_METHODS}) for i in range(q)
    )
    return replace(
        fit,
        se_naive=ses["naive"],
        se_mlm=ses["mlm"],
        se_mlr=ses["mlr"],
        significance=stars,
        mlm_scaling=scale,
        cov=covs,
        flags=tuple(flags),
    )


def _naive_cov(info):
    try:
        evals = np.linalg.eigvalsh(info)
    except np.linalg.LinAlgError as exc:
        raise InformationMatrixError(str(exc)) from exc
    if evals[0] <= evals[-1] * 1e-12:
        raise InformationMatrixError(
            f"observed information not positive definite (min eigenvalue {evals[0]:.3g})"
        )
    cov = np.linalg.inv(info)
    return 0.5 * (cov + cov.T)


def _covariance(dataset, fit, method, step=1e-5):
    spec = fit.spec
    vec = fit.estimates
    q = spec.n_free
    if method != "naive" and dataset.n < q + 2:
        raise ValueError(f"N={dataset.n} too small for robust SEs with {q} free parameters")
    info = -_hessian_vec(dataset, spec, vec, step)
    cov = _naive_cov(info)
    if method == "naive":
        return {"cov": cov}
    if method == "mlr":
        S = _scores_vec(dataset, spec, vec)
        B = S.T @ S
        return {"cov": cov @ B @ cov}
    c = satorra_bentler_scaling(dataset, fit)
    return {"cov": cov * c if np.isfinite(c) else np.full_like(cov, np.nan), "scaling": c}


def robust_se(dataset: Dataset, spec: ModelSpec, fit: FitResult, method: str = "mlr", step: float = 1e-5) -> np.ndarray:
    """Standard errors of the free parameters (natural scale).

    ``naive``: inverse observed information. ``mlr``: sandwich
    ``A^-1 B A^-1`` with ``B`` the outer product of per-observation scores.
    ``mlm``: naive SEs times the square root of the Satorra-Bentler scaling
    factor.
    """
    if method not in SE_METHODS:
        raise ValueError(f"unknown method {method!r}")
    if spec != fit.spec:
        raise ValueError("spec does not match the fitted model")
    return np.sqrt(np.diag(_covariance(dataset, fit, method, step)["cov"]))


# -- Satorra-Bentler scaling ---------------------------------------------------


def _vech_index(p):
    return [(i, j) for j in range(p) for i in range(j, p)]


def _moment_vector(spec, vec):
    lam, beta, theta, sigma = _unpack(spec, vec)
    Om = _omega(lam, theta, sigma)
    return np.concatenate([np.outer(beta, lam).ravel(), [Om[i, j] for i, j in _vech_index(spec.p)]])


def satorra_bentler_scaling(dataset: Dataset, fit: FitResult) -> float:
    """Scaling factor ``tr(U Gamma) / d`` on the reduced-form moments.

    The moments are ``(vec Pi, vech Omega)`` of the unrestricted regression of
    Y on X. ``Gamma`` is their empirical asymptotic covariance built from
    residual fourth moments; ``U`` is the normal-theory residual weight matrix
    of the fitted structure. Equals 1 in expectation under normality. Returns
    NaN when the model has no degrees of freedom.
    """
    spec = fit.spec
    X, Y = dataset.X, dataset.Y
    n, p = Y.shape
    k = X.shape[1]
    vech = _vech_index(p)
    rows = np.array([i for i, _ in vech])
    cols = np.array([j for _, j in vech])
    d = k * p + len(vech) - spec.n_free
    if d <= 0:
        return np.nan

    Sxx = X.T @ X / n
    Sxx_inv = np.linalg.inv(Sxx)
    Pi_hat = np.linalg.solve(X.T @ X, X.T @ Y)
    R = Y - X @ Pi_hat
    Om_hat = R.T @ R / n
    Z = X @ Sxx_inv
    h = np.column_stack(
        [
            (Z[:, :, None] * R[:, None, :]).reshape(n, k * p),
            R[:, rows] * R[:, cols] - Om_hat[rows, cols],
        ]
    )
    Gamma = h.T @ h / n

    vec = fit.estimates
    lam, beta, theta, sigma = _unpack(spec, vec)
    Om = _omega(lam, theta, sigma)
    G_nt = np.zeros_like(Gamma)
    G_nt[: k * p, : k * p] = np.kron(Sxx_inv, Om)
    G_nt[k * p :, k * p :] = (
        Om[np.ix_(rows, rows)] * Om[np.ix_(cols, cols)] + Om[np.ix_(rows, cols)] * Om[np.ix_(cols, rows)]
    )
    V = np.linalg.inv(G_nt)

    q = vec.size
    Delta = np.empty((Gamma.shape[0], q))
    for i in range(q):
        hstep = 1e-6 * max(1.0, abs(vec[i]))
        e = np.zeros(q)
        e[i] = hstep
        Delta[:, i] = (_moment_vector(spec, vec + e) - _moment_vector(spec, vec - e)) / (2 * hstep)
    VD = V @ Delta
    U = V - VD @ np.linalg.solve(Delta.T @ VD, VD.T)
    return float(np.trace(U @ Gamma) / d)


# -- reporting helpers ---------------------------------------------------------


def _p_value(estimate, se):
    if not np.isfinite(se) or se <= 0:
        return np.nan
    return float(2 * stats.norm.sf(abs(estimate) / se))


def significance_stars(estimate: float, se_set) -> str:
    """Star code from a two-sided normal test.

    ``se_set`` is either a single SE or a mapping/sequence of SEs; with a
    mapping the largest of the ``mlm``/``mlr`` entries is used (falling back to
    ``naive`` when neither is available).
    """
    if isinstance(se_set, dict):
        corrected = [se_set.get(m, np.nan) for m in ("mlm", "mlr")]
        corrected = [s for s in corrected if s is not None and np.isfinite(s)]
        se = max(corrected) if corrected else se_set.get("naive", np.nan)
    elif np.ndim(se_set) == 0:
        se = se_set
    else:
        vals = [s for s in np.ravel(se_set) if np.isfinite(s)]
        se = max(vals) if vals else np.nan
    pval = _p_value(estimate, se)
    if not np.isfinite(pval):
        return ""
    if pval < 0.01:
        return "***"
    if pval < 0.05:
        return "**"
    if pval < 0.1:
        return "*"
    return ""


def standardized_estimates(fit: FitResult, method: str = "mlr") -> tuple[np.ndarray, np.ndarray]:
    """Sum-to-one form of all parameters with delta-method SEs.

    Returns ``(estimates, se)`` ordered ``[lambda (p), beta (k), theta (p), sigma]``;
    the fixed loading gets an SE like every other entry since it is no longer
    pinned after normalization.
    """
    spec = fit.spec
    vec = fit.estimates

    def transform(v):
        lam, beta, theta, sigma = _unpack(spec, v)
        s = lam.sum()
        return np.concatenate([lam / s, beta * s, theta, [abs(sigma * s)]])

    est = transform(vec)
    cov = fit.cov.get(method)
    if cov is None:
        return est, np.full(est.size, np.nan)
    q = vec.size
    J = np.empty((est.size, q))
    for i in range(q):
        h = 1e-7 * max(1.0, abs(vec[i]))
        e = np.zeros(q)
        e[i] = h
        J[:, i] = (transform(vec + e) - transform(vec - e)) / (2 * h)
    return est, np.sqrt(np.clip(np.diag(J @ cov @ J.T), 0, None))


def p_values(fit: FitResult, method: str) -> np.ndarray:
    se = fit.se(method)
    return np.array([_p_value(e, s) for e, s in zip(fit.estimates, se)])


def max_corrected_se(fit: FitResult) -> np.ndarray:
    """Larger of the MLM and MLR SEs per parameter, naive where both are missing."""
    se = np.fmax(fit.se_mlm, fit.se_mlr)
    return np.where(np.isnan(se), fit.se_naive, se)
