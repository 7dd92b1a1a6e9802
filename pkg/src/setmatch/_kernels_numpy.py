"""NumPy reference implementation of the scaling-iteration kernels.

Two entry points, shared contract with the compiled extension
(``setmatch._fastloops``):

``balanced_scaling``
    Plain-domain diagonal scaling on a Gibbs kernel ``K``.  One iteration
    updates the row scaling against the row target, then the column scaling
    against the column target.  The residual is the worst absolute
    violation of the row marginal, measured before the updates of the
    iteration that observes it; column marginals are exact after every
    iteration by construction.

``log_scaling``
    The same fixed point computed on dual potentials ``(f, g)`` with
    log-sum-exp reductions, immune to underflow of ``exp(-C/eps)``.  With
    damping factors below one it computes KL-relaxed (soft-marginal)
    plans; the residual is then the largest potential update divided by
    ``eps``, which bounds how far the iteration is from its fixed point.

Both functions assume C-contiguous float64 inputs and return
``(row_scaling, col_scaling, iterations, residual, converged)``.
"""

from __future__ import annotations

import numpy as np


def balanced_scaling(
    K: np.ndarray,
    row_target: np.ndarray,
    col_target: np.ndarray,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, np.ndarray, int, float, bool]:
    m = K.shape[0]
    n = K.shape[1]
    u = np.ones(m)
    v = np.ones(n)
    iterations = 0
    residual = np.inf
    converged = False
    while iterations < max_iter:
        Kv = K @ v
        residual = float(np.max(np.abs(u * Kv - row_target)))
        if iterations > 0 and residual <= tol:
            converged = True
            break
        u = row_target / Kv
        v = col_target / (K.T @ u)
        iterations += 1
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise FloatingPointError(
                "scaling vectors became non-finite; the kernel matrix is too "
                "ill-conditioned for plain-domain iterations"
            )
    if not converged:
        residual = float(np.max(np.abs(u * (K @ v) - row_target)))
        converged = residual <= tol
    return u, v, iterations, residual, converged


def _logsumexp_rows(Z: np.ndarray) -> np.ndarray:
    m = Z.max(axis=1)
    return m + np.log(np.exp(Z - m[:, None]).sum(axis=1))


def _logsumexp_cols(Z: np.ndarray) -> np.ndarray:
    m = Z.max(axis=0)
    return m + np.log(np.exp(Z - m[None, :]).sum(axis=0))


def log_scaling(
    C: np.ndarray,
    log_row_target: np.ndarray,
    log_col_target: np.ndarray,
    eps: float,
    damp_row: float,
    damp_col: float,
    tol: float,
    max_iter: int,
) -> tuple[np.ndarray, np.ndarray, int, float, bool]:
    m = C.shape[0]
    n = C.shape[1]
    f = np.zeros(m)
    g = np.zeros(n)
    balanced = damp_row == 1.0 and damp_col == 1.0
    row_target = np.exp(log_row_target)
    iterations = 0
    residual = np.inf
    converged = False
    while iterations < max_iter:
        Z = (f[:, None] + g[None, :] - C) / eps
        row_lse = _logsumexp_rows(Z)
        if balanced:
            # exp(row_lse) is exactly the current row marginal.
            residual = float(np.max(np.abs(np.exp(row_lse) - row_target)))
            if iterations > 0 and residual <= tol:
                converged = True
                break
            f = f + eps * (log_row_target - row_lse)
        else:
            f_new = damp_row * (f + eps * (log_row_target - row_lse))
            delta_f = float(np.max(np.abs(f_new - f)))
            f = f_new
        Z = (f[:, None] + g[None, :] - C) / eps
        col_lse = _logsumexp_cols(Z)
        if balanced:
            g = g + eps * (log_col_target - col_lse)
        else:
            g_new = damp_col * (g + eps * (log_col_target - col_lse))
            delta_g = float(np.max(np.abs(g_new - g)))
            g = g_new
        iterations += 1
        if not balanced:
            residual = max(delta_f, delta_g) / eps
            if residual <= tol:
                converged = True
                break
    if balanced and not converged:
        Z = (f[:, None] + g[None, :] - C) / eps
        residual = float(np.max(np.abs(np.exp(_logsumexp_rows(Z)) - row_target)))
        converged = residual <= tol
    return f, g, iterations, residual, converged
