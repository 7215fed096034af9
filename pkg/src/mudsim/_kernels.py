"""Compiled per-symbol loops for the adaptive receivers.

These mirror :func:`mudsim.receivers.ba_sic` and :func:`mudsim.receivers.ba_pic`
operation for operation; the test suite checks them against each other.
"""

import numpy as np
from numba import njit

DIVERGENCE_FACTOR = 1e3


@njit(cache=True)
def _cma_step(W, k, xr, z, mu, ref_norm, diverged):
    if diverged[k]:
        return
    e = abs(z) - 1.0
    sg = 1.0 if z >= 0 else -1.0
    step = mu * e * sg
    nrm = 0.0
    finite = True
    for n in range(W.shape[1]):
        W[k, n] -= step * xr[n]
        nrm += W[k, n] * W[k, n]
        if not np.isfinite(W[k, n]):
            finite = False
    if (not finite) or np.sqrt(nrm) > DIVERGENCE_FACTOR * ref_norm[k]:
        diverged[k] = True


@njit(cache=True)
def _alpha(W, k, cbar):
    s = 0.0
    for n in range(W.shape[1]):
        s += abs(W[k, n])
    return cbar[k] / (s / W.shape[1])


@njit(cache=True)
def ba_sic_kernel(r, C, rot, W, mu):
    """Returns z, est, quad, alpha, order (all M x K) and per-user divergence flags.

    ``W`` (K x N) is updated in place.
    """
    M, N = r.shape
    K = C.shape[0]
    cbar = np.empty(K)
    ref_norm = np.empty(K)
    for k in range(K):
        cbar[k] = np.mean(np.abs(C[k]))
        ref_norm[k] = np.sqrt(np.sum(C[k] * C[k]))
    z = np.zeros((M, K))
    est = np.zeros((M, K))
    quad = np.zeros((M, K))
    alpha = np.zeros((M, K))
    order = np.zeros((M, K), dtype=np.int64)
    diverged = np.zeros(K, dtype=np.bool_)
    resid = np.empty(N, dtype=np.complex128)
    xr = np.empty(N)
    remaining = np.empty(K, dtype=np.bool_)
    for m in range(M):
        for n in range(N):
            resid[n] = r[m, n]
        remaining[:] = True
        for s in range(K):
            best = -1
            best_abs = -1.0
            best_re = 0.0
            best_im = 0.0
            for u in range(K):
                if not remaining[u]:
                    continue
                ph = rot[m, u]
                acc_re = 0.0
                acc_im = 0.0
                for n in range(N):
                    v = ph * resid[n]
                    acc_re += v.real * W[u, n]
                    acc_im += v.imag * W[u, n]
                if abs(acc_re) > best_abs:
                    best_abs = abs(acc_re)
                    best = u
                    best_re = acc_re
                    best_im = acc_im
            u = best
            ph = rot[m, u]
            for n in range(N):
                xr[n] = (ph * resid[n]).real
            _cma_step(W, u, xr, best_re, mu, ref_norm, diverged)
            a = _alpha(W, u, cbar)
            z[m, u] = best_re
            est[m, u] = a * best_re
            quad[m, u] = a * best_im
            alpha[m, u] = a
            order[m, s] = u
            x = a * best_re * np.conj(ph)
            for n in range(N):
                resid[n] -= x * C[u, n]
            remaining[u] = False
    return z, est, quad, alpha, order, diverged


@njit(cache=True)
def ba_pic_kernel(r, C, rot, W, mu, per_stage):
    """Returns z, est, quad, alpha (all S x M x K), the stage-0 CMA error (M x K)
    and per-user divergence flags.

    ``W`` (S x K x N) is updated in place; with ``per_stage`` False only ``W[0]``
    is used; it adapts at stage 0 and later stages despread with the weights
    held at the start of the symbol.
    """
    M, N = r.shape
    K = C.shape[0]
    S = W.shape[0]
    cbar = np.empty(K)
    ref_norm = np.empty(K)
    for k in range(K):
        cbar[k] = np.mean(np.abs(C[k]))
        ref_norm[k] = np.sqrt(np.sum(C[k] * C[k]))
    z = np.zeros((S, M, K))
    est = np.zeros((S, M, K))
    quad = np.zeros((S, M, K))
    alpha = np.zeros((S, M, K))
    err0 = np.zeros((M, K))
    diverged = np.zeros((S, K), dtype=np.bool_)
    total = np.empty(N, dtype=np.complex128)
    inp = np.empty(N, dtype=np.complex128)
    xr = np.empty(N)
    held = np.empty((K, N))
    for m in range(M):
        if not per_stage:
            for k in range(K):
                for n in range(N):
                    held[k, n] = W[0, k, n]
        for l in range(S):
            b = l if per_stage else 0
            adapt = per_stage or l == 0
            if l > 0:
                for n in range(N):
                    total[n] = 0.0
                for j in range(K):
                    xj = est[l - 1, m, j] * np.conj(rot[m, j])
                    for n in range(N):
                        total[n] += xj * C[j, n]
            for k in range(K):
                ph = rot[m, k]
                if l == 0:
                    for n in range(N):
                        inp[n] = r[m, n]
                else:
                    xk = est[l - 1, m, k] * np.conj(ph)
                    for n in range(N):
                        inp[n] = r[m, n] - (total[n] - xk * C[k, n])
                acc_re = 0.0
                acc_im = 0.0
                for n in range(N):
                    v = ph * inp[n]
                    xr[n] = v.real
                    wn = W[b, k, n] if adapt else held[k, n]
                    acc_re += v.real * wn
                    acc_im += v.imag * wn
                if l == 0:
                    err0[m, k] = abs(acc_re) - 1.0
                if adapt:
                    _cma_step(W[b], k, xr, acc_re, mu, ref_norm, diverged[b])
                a = _alpha(W[b], k, cbar)
                z[l, m, k] = acc_re
                est[l, m, k] = a * acc_re
                quad[l, m, k] = a * acc_im
                alpha[l, m, k] = a
    return z, est, quad, alpha, err0, diverged
