# cython: language_level=3
"""Compiled versions of the kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs
from libc.stdlib cimport malloc, free, qsort

cnp.import_array()

cdef double SINGULAR_RTOL = 1e-12
cdef int MAX_WIDENINGS = 60
cdef int MAXD = 8


def mardia_sums(double[:, ::1] Z):
    cdef Py_ssize_t n = Z.shape[0], p = Z.shape[1]
    cdef Py_ssize_t i, j, c
    cdef double g, cube = 0.0, diag = 0.0
    with nogil:
        for i in range(n):
            g = 0.0
            for c in range(p):
                g = g + Z[i, c] * Z[i, c]
            cube = cube + g * g * g
            diag = diag + g * g
            for j in range(i + 1, n):
                g = 0.0
                for c in range(p):
                    g = g + Z[i, c] * Z[j, c]
                cube = cube + 2.0 * g * g * g
    return cube, diag


cdef int _cmp(const void* a, const void* b) noexcept nogil:
    cdef double da = (<double*>a)[0], db = (<double*>b)[0]
    return (da > db) - (da < db)


cdef int _solve_first(double* M, int m, double* out) noexcept nogil:
    # Solve M z = e_0 by Gaussian elimination with partial pivoting.
    # Returns 1 when M is numerically singular. M is overwritten.
    cdef int r, c, piv, col
    cdef double tmp, f, scale = 0.0
    for r in range(m):
        out[r] = 1.0 if r == 0 else 0.0
        if fabs(M[r * m + r]) > scale:
            scale = fabs(M[r * m + r])
    if scale <= 0.0:
        return 1
    for col in range(m):
        piv = col
        for r in range(col + 1, m):
            if fabs(M[r * m + col]) > fabs(M[piv * m + col]):
                piv = r
        if fabs(M[piv * m + col]) <= SINGULAR_RTOL * scale:
            return 1
        if piv != col:
            for c in range(m):
                tmp = M[col * m + c]
                M[col * m + c] = M[piv * m + c]
                M[piv * m + c] = tmp
            tmp = out[col]
            out[col] = out[piv]
            out[piv] = tmp
        for r in range(col + 1, m):
            f = M[r * m + col] / M[col * m + col]
            for c in range(col, m):
                M[r * m + c] -= f * M[col * m + c]
            out[r] -= f * out[col]
    for r in range(m - 1, -1, -1):
        tmp = out[r]
        for c in range(r + 1, m):
            tmp -= M[r * m + c] * out[c]
        out[r] = tmp / M[r * m + r]
    return 0


cdef int _row(const double* x, Py_ssize_t n, double x0, int q, int degree,
              double span, double* dist, double* sorted_d, double* M,
              double* coef, double* row, int* q_used) noexcept nogil:
    cdef Py_ssize_t j
    cdef int a, b, m = degree + 1, attempt
    cdef double h, r, w, u, pw, h_scale = 1.0, val
    cdef double powers[17]
    for j in range(n):
        dist[j] = fabs(x[j] - x0)
        sorted_d[j] = dist[j]
    qsort(sorted_d, n, sizeof(double), _cmp)
    for attempt in range(MAX_WIDENINGS):
        if span <= 1.0:
            h = sorted_d[q - 1] * h_scale
        else:
            h = sorted_d[n - 1] * span * h_scale
        if h > 0.0:
            for a in range(m * m):
                M[a] = 0.0
            for j in range(n):
                r = dist[j] / h
                if r < 1.0:
                    w = 1.0 - r * r * r
                    w = w * w * w
                    u = (x[j] - x0) / h
                    pw = w
                    for a in range(2 * m - 1):
                        powers[a] = pw
                        pw = pw * u
                    for a in range(m):
                        for b in range(m):
                            M[a * m + b] += powers[a + b]
            if _solve_first(M, m, coef) == 0:
                for j in range(n):
                    r = dist[j] / h
                    if r < 1.0:
                        w = 1.0 - r * r * r
                        w = w * w * w
                        u = (x[j] - x0) / h
                        val = 0.0
                        pw = 1.0
                        for a in range(m):
                            val += coef[a] * pw
                            pw = pw * u
                        row[j] = val * w
                    else:
                        row[j] = 0.0
                q_used[0] = q
                return 0
        if q < n:
            q += 1
        else:
            h_scale *= 1.5
    return 1


def loess_rows(x, targets, int q, int degree, double span):
    if degree + 1 > MAXD:
        raise ValueError(f"degree {degree} too large for the compiled kernel")
    cdef double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] tv = np.ascontiguousarray(targets, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], nt = tv.shape[0], i
    L_arr = np.empty((nt, n), dtype=np.float64)
    used_arr = np.empty(nt, dtype=np.int64)
    cdef double[:, ::1] L = L_arr
    cdef long long[::1] used = used_arr
    cdef double* dist = <double*>malloc(n * sizeof(double))
    cdef double* sorted_d = <double*>malloc(n * sizeof(double))
    cdef double M[64]
    cdef double coef[8]
    cdef int q_used = 0, failed = -1
    if dist == NULL or sorted_d == NULL:
        free(dist)
        free(sorted_d)
        raise MemoryError()
    try:
        with nogil:
            for i in range(nt):
                if _row(&xv[0], n, tv[i], q, degree, span, dist, sorted_d,
                        M, coef, &L[i, 0], &q_used) != 0:
                    failed = i
                    break
                used[i] = q_used
    finally:
        free(dist)
        free(sorted_d)
    if failed >= 0:
        raise np.linalg.LinAlgError(
            f"local design at x={tv[failed]} stays singular after widening")
    return L_arr, used_arr
