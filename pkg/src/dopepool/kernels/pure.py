"""Pure-Python/NumPy kernel implementations.

These mirror the compiled core operation for operation. The Gibbs sweep
consumes uniforms in the same order and applies the same floating-point
expression sequence, so chains match the compiled backend bit for bit. The
MI accumulation is vectorized with NumPy and may differ from the compiled
reduction only by summation order.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import InvalidModelError

NEG_INF = float("-inf")

# Sweeps' uniforms are drawn in blocks; block size does not affect the
# stream, only Python call overhead.
_SWEEP_CHUNK = 4096

_MI_BLOCK = 128


def gibbs_chain(
    n,
    is_primary,
    primary_of,
    sec_offsets,
    sec_indices,
    log_pp,
    log_1mpp,
    log_ps,
    log_1mps,
    log_pb,
    log_1mpb,
    n_pools,
    pool_offsets,
    pool_members,
    ind_pool_offsets,
    ind_pools,
    data,
    loglik_table,
    theta,
    n_sweeps,
    record_every,
    rng,
):
    n_records = n_sweeps // record_every if record_every > 0 else 0
    records = np.empty((n_records, n), dtype=np.uint8)
    rec = 0

    counts = np.zeros(max(n_pools, 1), dtype=np.int64)
    for j in range(n_pools):
        c = 0
        for t in range(pool_offsets[j], pool_offsets[j + 1]):
            c += theta[pool_members[t]]
        counts[j] = c

    exp = math.exp
    done = 0
    while done < n_sweeps:
        chunk = min(_SWEEP_CHUNK, n_sweeps - done)
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
                if q1 == NEG_INF:
                    if q0 == NEG_INF:
                        raise InvalidModelError(
                            "conditioning state has zero probability for both values "
                            f"of coordinate {i}"
                        )
                    p1 = 0.0
                elif q0 == NEG_INF:
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
                records[rec] = theta
                rec += 1
    return records


def mi_accumulate(ll_neg, ll_pos, outcomes):
    n_samples, n_pools = ll_neg.shape
    if n_pools == 0:
        return 0.0, 0.0
    outcomes = outcomes.astype(bool, copy=False)
    diag = np.where(outcomes, ll_pos, ll_neg).sum(axis=1)
    with np.errstate(under="ignore"):
        p_neg = np.exp(ll_neg)
        p_pos = np.exp(ll_pos)
    log_l = math.log(n_samples)
    terms = np.empty(n_samples, dtype=np.float64)
    for start in range(0, n_samples, _MI_BLOCK):
        stop = min(start + _MI_BLOCK, n_samples)
        blk = outcomes[start:stop]
        prod = np.ones((stop - start, n_samples), dtype=np.float64)
        for j in range(n_pools):
            sel = np.where(blk[:, j : j + 1], p_pos[None, :, j], p_neg[None, :, j])
            prod *= sel
        sums = prod.sum(axis=1)
        with np.errstate(divide="ignore"):
            terms[start:stop] = diag[start:stop] - (np.log(sums) - log_l)
        # rows whose linear-space evidence underflowed: redo in log space
        for k in np.nonzero(sums <= 0.0)[0]:
            row = np.where(outcomes[start + k], ll_pos, ll_neg).sum(axis=1)
            m = row.max()
            lse = m + math.log(np.exp(row - m).sum())
            terms[start + k] = diag[start + k] - (lse - log_l)
    psi = float(terms.mean())
    se = float(terms.std(ddof=1) / math.sqrt(n_samples)) if n_samples > 1 else 0.0
    return psi, se
