# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of dopepool.kernels.pure.

The Gibbs sweep consumes uniforms from the caller's Generator in the same
chunked order and evaluates the same floating-point expression sequence as
the pure backend, so chains agree bit for bit. The MI accumulation differs
from the pure backend only by float summation order.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

from .errors import InvalidModelError

cnp.import_array()

DEF SWEEP_CHUNK = 4096


cdef inline double _sum8(const double* v, long n) noexcept nogil:
    """Eight-accumulator reduction; breaks the serial-add dependency so the
    compiler can vectorize. Summation order is fixed by this code, so
    results are reproducible call to call."""
    cdef double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0
    cdef double a4 = 0.0, a5 = 0.0, a6 = 0.0, a7 = 0.0
    cdef long r = 0
    while r + 8 <= n:
        a0 += v[r]
        a1 += v[r + 1]
        a2 += v[r + 2]
        a3 += v[r + 3]
        a4 += v[r + 4]
        a5 += v[r + 5]
        a6 += v[r + 6]
        a7 += v[r + 7]
        r += 8
    while r < n:
        a0 += v[r]
        r += 1
    return ((a0 + a1) + (a2 + a3)) + ((a4 + a5) + (a6 + a7))


def gibbs_chain(
    int n,
    cnp.uint8_t[::1] is_primary,
    cnp.int32_t[::1] primary_of,
    cnp.int32_t[::1] sec_offsets,
    cnp.int32_t[::1] sec_indices,
    double log_pp,
    double log_1mpp,
    double log_ps,
    double log_1mps,
    double log_pb,
    double log_1mpb,
    int n_pools,
    cnp.int32_t[::1] pool_offsets,
    cnp.int32_t[::1] pool_members,
    cnp.int32_t[::1] ind_pool_offsets,
    cnp.int32_t[::1] ind_pools,
    cnp.uint8_t[::1] data,
    double[:, :, ::1] loglik_table,
    cnp.uint8_t[::1] theta,
    long n_sweeps,
    long record_every,
    object rng,
):
    cdef long n_records = n_sweeps // record_every if record_every > 0 else 0
    records_arr = np.empty((n_records, n), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] records = records_arr
    cdef long rec = 0

    counts_arr = np.zeros(max(n_pools, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] counts = counts_arr
    cdef int i, j, t, cur, new, d
    cdef long s, done = 0, chunk, c, c_others
    cdef double q1, q0, diff, e, p1
    cdef double[:, ::1] u

    for j in range(n_pools):
        c = 0
        for t in range(pool_offsets[j], pool_offsets[j + 1]):
            c += theta[pool_members[t]]
        counts[j] = c

    while done < n_sweeps:
        chunk = min(SWEEP_CHUNK, n_sweeps - done)
        u = rng.random((chunk, n))
        for s in range(chunk):
            for i in range(n):
                if is_primary[i]:
                    q1 = log_pp
                    q0 = log_1mpp
                    for t in range(sec_offsets[i], sec_offsets[i + 1]):
                        if theta[sec_indices[t]]:
                            q1 += log_ps
                            q0 += log_pb
                        else:
                            q1 += log_1mps
                            q0 += log_1mpb
                else:
                    if theta[primary_of[i]]:
                        q1 = log_ps
                        q0 = log_1mps
                    else:
                        q1 = log_pb
                        q0 = log_1mpb
                cur = theta[i]
                for t in range(ind_pool_offsets[i], ind_pool_offsets[i + 1]):
                    j = ind_pools[t]
                    c_others = counts[j] - cur
                    d = data[j]
                    q1 += loglik_table[j, c_others + 1, d]
                    q0 += loglik_table[j, c_others, d]
                if q1 == -INFINITY:
                    if q0 == -INFINITY:
                        raise InvalidModelError(
                            "conditioning state has zero probability for both values "
                            f"of coordinate {i}"
                        )
                    p1 = 0.0
                elif q0 == -INFINITY:
                    p1 = 1.0
                else:
                    diff = q0 - q1
                    if diff >= 0.0:
                        e = exp(-diff)
                        p1 = e / (1.0 + e)
                    else:
                        p1 = 1.0 / (1.0 + exp(diff))
                new = 1 if u[s, i] < p1 else 0
                if new != cur:
                    for t in range(ind_pool_offsets[i], ind_pool_offsets[i + 1]):
                        counts[ind_pools[t]] += 1 if new else -1
                    theta[i] = new
            done += 1
            if record_every > 0 and done % record_every == 0:
                for i in range(n):
                    records[rec, i] = theta[i]
                rec += 1
    return records_arr


def mi_accumulate(object ll_neg_obj, object ll_pos_obj, object outcomes_obj):
    ll_neg_arr = np.ascontiguousarray(ll_neg_obj, dtype=np.float64)
    ll_pos_arr = np.ascontiguousarray(ll_pos_obj, dtype=np.float64)
    y_arr = np.ascontiguousarray(outcomes_obj, dtype=np.uint8)
    cdef long n_samples = ll_neg_arr.shape[0]
    cdef int n_pools = ll_neg_arr.shape[1]
    if n_pools == 0:
        return 0.0, 0.0

    # (K, L) transposed layouts keep the inner r-loops contiguous
    with np.errstate(under="ignore"):
        p_neg_t_arr = np.ascontiguousarray(np.exp(ll_neg_arr).T)
        p_pos_t_arr = np.ascontiguousarray(np.exp(ll_pos_arr).T)
    ll_neg_t_arr = np.ascontiguousarray(ll_neg_arr.T)
    ll_pos_t_arr = np.ascontiguousarray(ll_pos_arr.T)

    cdef double[:, ::1] ll_neg = ll_neg_arr
    cdef double[:, ::1] ll_pos = ll_pos_arr
    cdef cnp.uint8_t[:, ::1] y = y_arr
    cdef double[:, ::1] p_neg_t = p_neg_t_arr
    cdef double[:, ::1] p_pos_t = p_pos_t_arr
    cdef double[:, ::1] ll_neg_t = ll_neg_t_arr
    cdef double[:, ::1] ll_pos_t = ll_pos_t_arr

    terms_arr = np.empty(n_samples, dtype=np.float64)
    cdef double[::1] terms = terms_arr
    scratch_arr = np.empty(n_samples, dtype=np.float64)
    cdef double[::1] scratch = scratch_arr

    cdef long k, r
    cdef int j
    cdef double log_l = log(<double> n_samples)
    cdef double diag_k, total, m, row, psi, mean, sq, se
    cdef const double* sel

    for k in range(n_samples):
        diag_k = 0.0
        for j in range(n_pools):
            diag_k += ll_pos[k, j] if y[k, j] else ll_neg[k, j]

        if n_pools == 1:
            sel = &p_pos_t[0, 0] if y[k, 0] else &p_neg_t[0, 0]
            total = _sum8(sel, n_samples)
        else:
            sel = &p_pos_t[0, 0] if y[k, 0] else &p_neg_t[0, 0]
            for r in range(n_samples):
                scratch[r] = sel[r]
            for j in range(1, n_pools):
                sel = &p_pos_t[j, 0] if y[k, j] else &p_neg_t[j, 0]
                for r in range(n_samples):
                    scratch[r] *= sel[r]
            total = _sum8(&scratch[0], n_samples)

        if total > 0.0:
            terms[k] = diag_k - (log(total) - log_l)
        else:
            # evidence underflowed in linear space: log-sum-exp pass
            m = -INFINITY
            for r in range(n_samples):
                row = 0.0
                for j in range(n_pools):
                    row += ll_pos_t[j, r] if y[k, j] else ll_neg_t[j, r]
                scratch[r] = row
                if row > m:
                    m = row
            total = 0.0
            for r in range(n_samples):
                total += exp(scratch[r] - m)
            terms[k] = diag_k - (m + log(total) - log_l)

    mean = 0.0
    for k in range(n_samples):
        mean += terms[k]
    mean /= n_samples
    psi = mean
    if n_samples > 1:
        sq = 0.0
        for k in range(n_samples):
            sq += (terms[k] - mean) * (terms[k] - mean)
        se = (sq / (n_samples - 1)) ** 0.5 / (<double> n_samples) ** 0.5
    else:
        se = 0.0
    return psi, se
