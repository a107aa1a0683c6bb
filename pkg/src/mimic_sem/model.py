"""MIMIC model domain types and the implied reduced-form moments.

The model for one observation is::

    eta = beta' x + zeta,          zeta ~ N(0, sigma^2)
    y   = lambda * eta + eps,      eps  ~ N(0, diag(theta^2))

which reduces to ``y = Pi' x + v`` with ``Pi = beta lambda'`` and
``Cov(v) = Omega = sigma^2 lambda lambda' + diag(theta^2)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

__all__ = [
    "ModelSpec",
    "ParameterSet",
    "Dataset",
    "ImpliedMoments",
    "implied_moments",
    "standardize_loadings",
    "rescale_latent",
]


def _check_names(names: Sequence[str], n: int, what: str) -> tuple[str, ...]:
    names = tuple(str(s) for s in names)
    if len(names) != n:
        raise ValueError(f"{what}: expected {n} names, got {len(names)}")
    if len(set(names)) != n:
        raise ValueError(f"{what}: duplicate names in {names}")
    return names


@dataclass(frozen=True)
class ModelSpec:
    """Dimensions and wiring of a single-factor MIMIC model.

    ``fixed_loading`` is a zero-based indicator index whose loading is pinned
    to 1 during estimation.
    """

    p: int
    k: int
    fixed_loading: int = 0
    indicator_names: tuple[str, ...] = ()
    cause_names: tuple[str, ...] = ()

    def __post_init__(self):
        if self.p < 2:
            raise ValueError(f"need at least 2 indicators, got p={self.p}")
        if self.k < 1:
            raise ValueError(f"need at least 1 cause, got k={self.k}")
        if not 0 <= self.fixed_loading < self.p:
            raise ValueError(f"fixed_loading={self.fixed_loading} outside [0, {self.p})")
        ind = self.indicator_names or [f"y{i + 1}" for i in range(self.p)]
        cau = self.cause_names or [f"x{j + 1}" for j in range(self.k)]
        object.__setattr__(self, "indicator_names", _check_names(ind, self.p, "indicator_names"))
        object.__setattr__(self, "cause_names", _check_names(cau, self.k, "cause_names"))

    @property
    def n_free(self) -> int:
        """Free parameters: p-1 loadings, k betas, p thetas, sigma."""
        return 2 * self.p + self.k

    @property
    def free_loadings(self) -> np.ndarray:
        return np.array([i for i in range(self.p) if i != self.fixed_loading], dtype=int)

    def param_names(self) -> list[str]:
        free = [f"lambda[{self.indicator_names[i]}]" for i in self.free_loadings]
        return (
            free
            + [f"beta[{c}]" for c in self.cause_names]
            + [f"theta[{n}]" for n in self.indicator_names]
            + ["sigma"]
        )

    @classmethod
    def for_dataset(cls, dataset: "Dataset", fixed_loading: int = 0) -> "ModelSpec":
        return cls(
            p=dataset.p,
            k=dataset.k,
            fixed_loading=fixed_loading,
            indicator_names=dataset.indicator_names,
            cause_names=dataset.cause_names,
        )


@dataclass(frozen=True)
class ParameterSet:
    """Loadings, structural coefficients and error standard deviations."""

    lam: np.ndarray
    beta: np.ndarray
    theta: np.ndarray
    sigma: float

    def __post_init__(self):
        object.__setattr__(self, "lam", np.array(self.lam, dtype=float).ravel())
        object.__setattr__(self, "beta", np.array(self.beta, dtype=float).ravel())
        object.__setattr__(self, "theta", np.array(self.theta, dtype=float).ravel())
        object.__setattr__(self, "sigma", float(self.sigma))
        if self.lam.shape != self.theta.shape:
            raise ValueError("lam and theta must both have length p")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        for a in (self.lam, self.beta, self.theta):
            a.setflags(write=False)

    @property
    def p(self) -> int:
        return self.lam.size

    @property
    def k(self) -> int:
        return self.beta.size

    def to_free(self, spec: ModelSpec) -> np.ndarray:
        """Natural-scale free vector ``[lambda_free, beta, theta, sigma]``.

        Assumes the identified form (loading at ``spec.fixed_loading`` equal to 1).
        """
        return np.concatenate(
            [self.lam[spec.free_loadings], self.beta, self.theta, [self.sigma]]
        )

    @classmethod
    def from_free(cls, spec: ModelSpec, vec: np.ndarray) -> "ParameterSet":
        vec = np.asarray(vec, dtype=float)
        if vec.size != spec.n_free:
            raise ValueError(f"expected {spec.n_free} free parameters, got {vec.size}")
        p, k = spec.p, spec.k
        lam = np.ones(p)
        lam[spec.free_loadings] = vec[: p - 1]
        beta = vec[p - 1 : p - 1 + k]
        theta = vec[p - 1 + k : 2 * p - 1 + k]
        return cls(lam, beta, theta, abs(vec[-1]))

    def is_identified(self, spec: ModelSpec) -> bool:
        return self.lam[spec.fixed_loading] == 1.0


@dataclass(frozen=True)
class Dataset:
    """Indicator matrix ``Y`` (N x p) and cause matrix ``X`` (N x k) for one period.

    ``column_stats`` optionally carries the (mean, sd) used to standardize each
    named column, so raw-scale quantities can be recovered downstream.
    """

    unit_labels: tuple[str, ...]
    Y: np.ndarray
    X: np.ndarray
    period_label: str = ""
    indicator_names: tuple[str, ...] = ()
    cause_names: tuple[str, ...] = ()
    column_stats: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        Y = np.array(self.Y, dtype=float)
        X = np.array(self.X, dtype=float)
        if Y.ndim != 2 or X.ndim != 2:
            raise ValueError("Y and X must be 2-D")
        if Y.shape[0] != X.shape[0]:
            raise ValueError(f"row mismatch: Y has {Y.shape[0]}, X has {X.shape[0]}")
        n, p = Y.shape
        k = X.shape[1]
        if n < p + k + 1:
            raise ValueError(f"N={n} too small for p={p}, k={k} (need N >= p + k + 1)")
        if not (np.isfinite(Y).all() and np.isfinite(X).all()):
            raise ValueError("Y and X must be finite (no missing values)")
        Y.setflags(write=False)
        X.setflags(write=False)
        object.__setattr__(self, "Y", Y)
        object.__setattr__(self, "X", X)
        labels = self.unit_labels or [f"unit{i + 1}" for i in range(n)]
        object.__setattr__(self, "unit_labels", _check_names(labels, n, "unit_labels"))
        ind = self.indicator_names or [f"y{i + 1}" for i in range(p)]
        cau = self.cause_names or [f"x{j + 1}" for j in range(k)]
        object.__setattr__(self, "indicator_names", _check_names(ind, p, "indicator_names"))
        object.__setattr__(self, "cause_names", _check_names(cau, k, "cause_names"))

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def p(self) -> int:
        return self.Y.shape[1]

    @property
    def k(self) -> int:
        return self.X.shape[1]

    def select_causes(self, names: Sequence[str]) -> "Dataset":
        idx = [self.cause_names.index(c) for c in names]
        return replace(self, X=self.X[:, idx], cause_names=tuple(names))


@dataclass(frozen=True)
class ImpliedMoments:
    Pi: np.ndarray  # k x p
    Omega: np.ndarray  # p x p


def implied_moments(spec: ModelSpec, params: ParameterSet) -> ImpliedMoments:
    """Reduced-form coefficients ``Pi = beta lambda'`` and error covariance ``Omega``."""
    if params.p != spec.p or params.k != spec.k:
        raise ValueError(
            f"parameter dimensions (p={params.p}, k={params.k}) "
            f"do not match spec (p={spec.p}, k={spec.k})"
        )
    if np.any(params.theta <= 0):
        raise ValueError("all theta entries must be positive")
    lam = params.lam
    Pi = np.outer(params.beta, lam)
    Omega = params.sigma**2 * np.outer(lam, lam) + np.diag(params.theta**2)
    return ImpliedMoments(Pi=Pi, Omega=Omega)


def rescale_latent(params: ParameterSet, c: float) -> ParameterSet:
    """Apply ``lambda -> c lambda, beta -> beta / c, sigma -> sigma / |c|``.

    Leaves ``Pi`` and ``Omega`` unchanged, so it is the scale indeterminacy of
    the latent variable.
    """
    if c == 0:
        raise ValueError("scale factor must be nonzero")
    return ParameterSet(params.lam * c, params.beta / c, params.theta, params.sigma / abs(c))


def standardize_loadings(params: ParameterSet) -> ParameterSet:
    """Rescale so the loadings sum to one (reporting form)."""
    s = float(params.lam.sum())
    if abs(s) < 1e-12:
        raise ValueError("loadings sum to zero; cannot normalize to sum 1")
    return rescale_latent(params, 1.0 / s)
