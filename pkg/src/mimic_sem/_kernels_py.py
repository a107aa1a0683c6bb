"""NumPy reference implementations of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable, and as the
oracle the extension is tested against.
"""
from __future__ import annotations

import numpy as np

SINGULAR_RTOL = 1e-12
MAX_WIDENINGS = 60


def mardia_sums(Z: np.ndarray) -> tuple[float, float]:
    """``(sum_ij (z_i . z_j)^3, sum_i (z_i . z_i)^2)`` for whitened rows ``Z``."""
    G = Z @ Z.T
    return float(np.sum(G**3)), float(np.sum(np.diag(G) ** 2))


def _local_row(x, x0, q, degree, span):
    n = x.size
    dist = np.abs(x - x0)
    order = np.sort(dist)
    h_scale = 1.0
    for _ in range(MAX_WIDENINGS):
        h = order[q - 1] if span <= 1.0 else order[-1] * span
        h *= h_scale
        if h > 0:
            r = dist / h
            w = np.where(r < 1.0, (1.0 - r**3) ** 3, 0.0)
            B = np.vander((x - x0) / h, degree + 1, increasing=True)
            M = B.T @ (B * w[:, None])
            ev = np.linalg.eigvalsh(M)
            if ev[-1] > 0 and ev[0] > SINGULAR_RTOL * ev[-1]:
                coef = np.linalg.solve(M, np.eye(degree + 1)[0])
                return (B @ coef) * w, q
        if q < n:
            q += 1
        else:
            h_scale *= 1.5
    raise np.linalg.LinAlgError(f"local design at x={x0} stays singular after widening")


def loess_rows(x: np.ndarray, targets: np.ndarray, q: int, degree: int, span: float):
    """Linear-smoother weights: row ``i`` maps ``y`` to the local fit at ``targets[i]``.

    Returns ``(L, q_used)`` where ``q_used[i]`` is the neighbour count after any
    widening needed to make the local design nonsingular.
    """
    x = np.asarray(x, dtype=float)
    targets = np.asarray(targets, dtype=float)
    L = np.empty((targets.size, x.size))
    used = np.empty(targets.size, dtype=np.int64)
    for i, x0 in enumerate(targets):
        L[i], used[i] = _local_row(x, x0, q, degree, span)
    return L, used
