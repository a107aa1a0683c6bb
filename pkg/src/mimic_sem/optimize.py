"""BFGS minimizer with a strong-Wolfe line search."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import line_search
from scipy.optimize._linesearch import LineSearchWarning  # not re-exported

__all__ = ["OptimizeResult", "bfgs"]


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    converged: bool
    iterations: int
    message: str


def _backtrack(f, x, fx, g, d, shrink=0.5, c1=1e-4, max_halvings=60):
    slope = float(g @ d)
    t = 1.0
    for _ in range(max_halvings):
        fn = f(x + t * d)
        if np.isfinite(fn) and fn <= fx + c1 * t * slope:
            return t, fn
        t *= shrink
    return None, fx


def _newton_step(fun, grad, hess, x, fx, g, noise=1e-12, max_halvings=8):
    # Near the optimum, decreases in fun drop below rounding noise and the
    # Armijo test fails. A Newton step is accepted if it shrinks the gradient
    # while fun rises by no more than the noise level.
    H = hess(x)
    try:
        np.linalg.cholesky(H)
        d = -np.linalg.solve(H, g)
    except np.linalg.LinAlgError:
        return None, None, fx
    gnorm = np.max(np.abs(g))
    slack = noise * max(1.0, abs(fx)) * max(1, x.size)
    t = 1.0
    for _ in range(max_halvings):
        fn = fun(x + t * d)
        if np.isfinite(fn) and fn <= fx + slack:
            gn = np.asarray(grad(x + t * d), dtype=float)
            if np.all(np.isfinite(gn)) and np.max(np.abs(gn)) < gnorm:
                return t, d, fn
        t *= 0.5
    return None, None, fx


def bfgs(
    fun: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    gtol: float = 1e-6,
    ftol: float = 1e-10,
    max_iter: int = 500,
    hess: Callable[[np.ndarray], np.ndarray] | None = None,
) -> OptimizeResult:
    """Minimize ``fun`` starting from ``x0``.

    Converged when the max-norm of the gradient is below ``gtol`` and the
    relative change of ``fun`` over the last step is below ``ftol``. A start
    that already satisfies the gradient test returns after zero iterations.
    Non-finite objective values are treated as +inf by the line search.
    ``hess``, when given, is used for Newton steps once the line search can no
    longer resolve a decrease in ``fun``.
    """
    x = np.array(x0, dtype=float)
    fx = float(fun(x))
    if not np.isfinite(fx):
        raise ValueError("objective is not finite at the starting point")
    g = np.asarray(grad(x), dtype=float)
    n = x.size
    H = np.eye(n)
    scaled = False
    last_rel = np.inf

    for it in range(max_iter):
        gnorm = np.max(np.abs(g))
        if gnorm < gtol and (it == 0 or last_rel < ftol):
            return OptimizeResult(x, fx, g, True, it, "converged")

        d = -H @ g
        if g @ d >= 0:
            H = np.eye(n)
            scaled = False
            d = -g

        step = None
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", LineSearchWarning)
                out = line_search(fun, grad, x, d, gfk=g, old_fval=fx, c2=0.9, maxiter=40)
            step = out[0]
            if step is not None:
                f_new = out[3]
        except (FloatingPointError, ValueError):
            step = None
        if step is None or not np.isfinite(f_new):
            step = None
            if hess is not None:
                step, dn, f_new = _newton_step(fun, grad, hess, x, fx, g)
                if step is not None:
                    d = dn
            if step is None:
                step, f_new = _backtrack(fun, x, fx, g, d)
            if step is None:
                if scaled:
                    H = np.eye(n)
                    scaled = False
                    continue
                return OptimizeResult(x, fx, g, bool(gnorm < gtol), it, "line search failed")

        s = step * d
        x_new = x + s
        g_new = np.asarray(grad(x_new), dtype=float)
        yv = g_new - g
        sy = float(s @ yv)
        last_rel = abs(f_new - fx) / max(1.0, abs(fx))
        x, fx, g = x_new, float(f_new), g_new
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if not scaled:
                H = np.eye(n) * (sy / float(yv @ yv))
                scaled = True
            rho = 1.0 / sy
            Hy = H @ yv
            H = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * (yv @ Hy) + rho) * np.outer(s, s)

    gnorm = np.max(np.abs(g))
    ok = bool(gnorm < gtol and last_rel < ftol)
    return OptimizeResult(x, fx, g, ok, max_iter, "converged" if ok else "maximum iterations reached")
