# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scaling-iteration kernels.

Drop-in twin of ``setmatch._kernels_numpy``: same entry points, same update
order, same residual definitions, same return values.  The NumPy module is
the correctness oracle for this one; keep them in lockstep.
"""

import numpy as np

from libc.math cimport INFINITY, exp, fabs, isfinite, log


def balanced_scaling(
    const double[:, ::1] K,
    const double[::1] row_target,
    const double[::1] col_target,
    double tol,
    long max_iter,
):
    cdef Py_ssize_t m = K.shape[0]
    cdef Py_ssize_t n = K.shape[1]
    u_arr = np.ones(m)
    v_arr = np.ones(n)
    kv_arr = np.empty(m)
    ktu_arr = np.empty(n)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    cdef double[::1] kv = kv_arr
    cdef double[::1] ktu = ktu_arr
    cdef double residual = INFINITY
    cdef double s, r, ui
    cdef long iterations = 0
    cdef bint converged = False
    cdef bint bad = False
    cdef Py_ssize_t i, j

    with nogil:
        while iterations < max_iter:
            residual = 0.0
            for i in range(m):
                s = 0.0
                for j in range(n):
                    s += K[i, j] * v[j]
                kv[i] = s
                r = fabs(u[i] * s - row_target[i])
                if r > residual:
                    residual = r
            if iterations > 0 and residual <= tol:
                converged = True
                break
            for i in range(m):
                u[i] = row_target[i] / kv[i]
            for j in range(n):
                ktu[j] = 0.0
            for i in range(m):
                ui = u[i]
                for j in range(n):
                    ktu[j] += K[i, j] * ui
            for j in range(n):
                v[j] = col_target[j] / ktu[j]
            iterations += 1
            for i in range(m):
                if not isfinite(u[i]):
                    bad = True
            for j in range(n):
                if not isfinite(v[j]):
                    bad = True
            if bad:
                break
        if not converged and not bad:
            residual = 0.0
            for i in range(m):
                s = 0.0
                for j in range(n):
                    s += K[i, j] * v[j]
                r = fabs(u[i] * s - row_target[i])
                if r > residual:
                    residual = r
            converged = residual <= tol

    if bad:
        raise FloatingPointError(
            "scaling vectors became non-finite; the kernel matrix is too "
            "ill-conditioned for plain-domain iterations"
        )
    return u_arr, v_arr, int(iterations), float(residual), bool(converged)


cdef double _row_residual(
    const double[:, ::1] C,
    const double[::1] f,
    const double[::1] g,
    const double[::1] row_target,
    double inv_eps,
) noexcept nogil:
    """Worst row-marginal violation of the plan implied by (f, g)."""
    cdef Py_ssize_t m = C.shape[0]
    cdef Py_ssize_t n = C.shape[1]
    cdef double residual = 0.0
    cdef double zmax, s, z, r
    cdef Py_ssize_t i, j
    for i in range(m):
        zmax = -INFINITY
        for j in range(n):
            z = (f[i] + g[j] - C[i, j]) * inv_eps
            if z > zmax:
                zmax = z
        s = 0.0
        for j in range(n):
            s += exp((f[i] + g[j] - C[i, j]) * inv_eps - zmax)
        r = fabs(exp(zmax + log(s)) - row_target[i])
        if r > residual:
            residual = r
    return residual


def log_scaling(
    const double[:, ::1] C,
    const double[::1] log_row_target,
    const double[::1] log_col_target,
    double eps,
    double damp_row,
    double damp_col,
    double tol,
    long max_iter,
):
    cdef Py_ssize_t m = C.shape[0]
    cdef Py_ssize_t n = C.shape[1]
    f_arr = np.zeros(m)
    g_arr = np.zeros(n)
    row_target_arr = np.exp(np.asarray(log_row_target))
    scratch_m_arr = np.empty(m)
    colmax_arr = np.empty(n)
    colsum_arr = np.empty(n)
    cdef double[::1] f = f_arr
    cdef double[::1] g = g_arr
    cdef double[::1] row_target = row_target_arr
    cdef double[::1] row_lse = scratch_m_arr
    cdef double[::1] colmax = colmax_arr
    cdef double[::1] colsum = colsum_arr
    cdef bint balanced = damp_row == 1.0 and damp_col == 1.0
    cdef double inv_eps = 1.0 / eps
    cdef double residual = INFINITY
    cdef double zmax, s, z, r, updated, delta_f, delta_g, col_lse
    cdef long iterations = 0
    cdef bint converged = False
    cdef Py_ssize_t i, j

    with nogil:
        while iterations < max_iter:
            delta_f = 0.0
            delta_g = 0.0
            # Row pass: row_lse[i] = logsumexp_j (f_i + g_j - C_ij) / eps.
            for i in range(m):
                zmax = -INFINITY
                for j in range(n):
                    z = (f[i] + g[j] - C[i, j]) * inv_eps
                    if z > zmax:
                        zmax = z
                s = 0.0
                for j in range(n):
                    s += exp((f[i] + g[j] - C[i, j]) * inv_eps - zmax)
                row_lse[i] = zmax + log(s)
            if balanced:
                residual = 0.0
                for i in range(m):
                    r = fabs(exp(row_lse[i]) - row_target[i])
                    if r > residual:
                        residual = r
                if iterations > 0 and residual <= tol:
                    converged = True
                    break
                for i in range(m):
                    f[i] = f[i] + eps * (log_row_target[i] - row_lse[i])
            else:
                for i in range(m):
                    updated = damp_row * (f[i] + eps * (log_row_target[i] - row_lse[i]))
                    r = fabs(updated - f[i])
                    if r > delta_f:
                        delta_f = r
                    f[i] = updated
            # Column pass with the updated f.
            for j in range(n):
                colmax[j] = -INFINITY
                colsum[j] = 0.0
            for i in range(m):
                for j in range(n):
                    z = (f[i] + g[j] - C[i, j]) * inv_eps
                    if z > colmax[j]:
                        colmax[j] = z
            for i in range(m):
                for j in range(n):
                    colsum[j] += exp((f[i] + g[j] - C[i, j]) * inv_eps - colmax[j])
            for j in range(n):
                col_lse = colmax[j] + log(colsum[j])
                if balanced:
                    g[j] = g[j] + eps * (log_col_target[j] - col_lse)
                else:
                    updated = damp_col * (g[j] + eps * (log_col_target[j] - col_lse))
                    r = fabs(updated - g[j])
                    if r > delta_g:
                        delta_g = r
                    g[j] = updated
            iterations += 1
            if not balanced:
                residual = (delta_f if delta_f > delta_g else delta_g) * inv_eps
                if residual <= tol:
                    converged = True
                    break
        if balanced and not converged:
            residual = _row_residual(C, f, g, row_target, inv_eps)
            converged = residual <= tol

    return f_arr, g_arr, int(iterations), float(residual), bool(converged)
