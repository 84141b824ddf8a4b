"""Compiled inner loops shared by the serial solver, simulator and executor.

All residuals are accumulated left to right over the row's stored entries
and every write has the form ``x[c] + (-(coef * v))``; keeping one spelling
is what makes single-thread runs bit-identical across the three paths.
"""

import numpy as np
from numba import njit

from ._atomics import atomic_add_f64, atomic_add_i64

FULL_ROW = 0
SINGLE_COMPONENT = 1


@njit(cache=True, nogil=True)
def row_residual(row_ptr, col_idx, values, b, x, i):
    s = 0.0
    for k in range(row_ptr[i], row_ptr[i + 1]):
        s += values[k] * x[col_idx[k]]
    return s - b[i]


@njit(cache=True, nogil=True)
def pick_component(row_ptr, i, u):
    """Offset into the row's storage for a uniform draw ``u`` in [0, 1)."""
    lo = row_ptr[i]
    theta = row_ptr[i + 1] - lo
    k = int(u * theta)
    if k >= theta:
        k = theta - 1
    return lo + k


@njit(cache=True, nogil=True)
def rk_sweep(row_ptr, col_idx, values, row_norm_sq, b, x, rows, gamma):
    """Relaxed Kaczmarz projections for each row in ``rows``, in order."""
    for j in range(rows.shape[0]):
        i = rows[j]
        res = row_residual(row_ptr, col_idx, values, b, x, i)
        coef = gamma * res / row_norm_sq[i]
        for k in range(row_ptr[i], row_ptr[i + 1]):
            c = col_idx[k]
            x[c] = x[c] + (-(coef * values[k]))


@njit(cache=True, nogil=True)
def asyrk_worker(
    row_ptr, col_idx, values, row_norm_sq, b, x, rows, uniforms,
    gamma, variant, log_t, log_d, applied,
):
    """One worker's share of row events against the shared vector ``x``.

    Reads of ``x`` are plain unlocked loads; every write is a single-element
    CAS add. When ``log_t`` is non-empty each increment is recorded and
    ``applied[0]`` is bumped atomically, for lost-update auditing.
    """
    logging = log_t.shape[0] > 0
    n_logged = 0
    for j in range(rows.shape[0]):
        i = rows[j]
        res = row_residual(row_ptr, col_idx, values, b, x, i)
        if variant == FULL_ROW:
            coef = gamma * res / row_norm_sq[i]
            for k in range(row_ptr[i], row_ptr[i + 1]):
                d = -(coef * values[k])
                atomic_add_f64(x, col_idx[k], d)
                if logging:
                    log_t[n_logged] = col_idx[k]
                    log_d[n_logged] = d
                    n_logged += 1
                    atomic_add_i64(applied, 0, 1)
        else:
            k = pick_component(row_ptr, i, uniforms[j])
            theta = row_ptr[i + 1] - row_ptr[i]
            d = -(gamma * theta * values[k] * res)
            atomic_add_f64(x, col_idx[k], d)
            if logging:
                log_t[n_logged] = col_idx[k]
                log_d[n_logged] = d
                n_logged += 1
                atomic_add_i64(applied, 0, 1)
    return n_logged


@njit(cache=True, nogil=True)
def _residual_sq(row_ptr, col_idx, values, b, x):
    m = row_ptr.shape[0] - 1
    s = 0.0
    for i in range(m):
        r = row_residual(row_ptr, col_idx, values, b, x, i)
        s += r * r
    return s


@njit(cache=True)
def simulate_chunk(
    row_ptr, col_idx, values, row_norm_sq, b, x, hist, j0,
    rows, uniforms, reads, gamma, variant, r_sq_out, record_r,
):
    """Run Algorithm-1 iterations ``j0 .. j0+len(rows)-1`` in place.

    ``hist`` is a ring buffer of depth tau+1; iterate ``x_j`` lives in slot
    ``j % depth``. ``reads[j - j0]`` is the read index k(j). When
    ``record_r`` is set, ``r_sq_out[j - j0]`` receives ``‖Ax_{j+1} − b‖²``.
    """
    depth = hist.shape[0]
    n = x.shape[0]
    for jj in range(rows.shape[0]):
        j = j0 + jj
        slot = j % depth
        for c in range(n):
            hist[slot, c] = x[c]
        i = rows[jj]
        stale = hist[reads[jj] % depth]
        res = row_residual(row_ptr, col_idx, values, b, stale, i)
        if variant == FULL_ROW:
            coef = gamma * res / row_norm_sq[i]
            for k in range(row_ptr[i], row_ptr[i + 1]):
                c = col_idx[k]
                x[c] = x[c] + (-(coef * values[k]))
        else:
            k = pick_component(row_ptr, i, uniforms[jj])
            theta = row_ptr[i + 1] - row_ptr[i]
            c = col_idx[k]
            x[c] = x[c] + (-(gamma * theta * values[k] * res))
        if record_r:
            r_sq_out[jj] = _residual_sq(row_ptr, col_idx, values, b, x)
    return np.isfinite(x).all()
