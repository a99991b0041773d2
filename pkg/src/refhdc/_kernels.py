"""Compiled inner loops.

``project`` computes ``X @ W`` with every output accumulated over the input
dimension in plain sequential order.  BLAS picks its blocking from the operand
shapes, so one row or one column block of a BLAS product can differ in the
last bits from the same entries of a bigger product; this kernel cannot, which
is what makes sliced encodings concatenate to the full encoding exactly.
"""

import numba
import numpy as np

_COLS = 128


@numba.njit(cache=True, nogil=True)
def project(X, W):
    n, d = X.shape
    D = W.shape[1]
    out = np.zeros((n, D))
    for j0 in range(0, D, _COLS):
        j1 = min(j0 + _COLS, D)
        m = j1 - j0
        i = 0
        # eight rows share each load of W[k, j0:j1]
        while i + 8 <= n:
            o0 = out[i, j0:j1]
            o1 = out[i + 1, j0:j1]
            o2 = out[i + 2, j0:j1]
            o3 = out[i + 3, j0:j1]
            o4 = out[i + 4, j0:j1]
            o5 = out[i + 5, j0:j1]
            o6 = out[i + 6, j0:j1]
            o7 = out[i + 7, j0:j1]
            for k in range(d):
                a0 = X[i, k]
                a1 = X[i + 1, k]
                a2 = X[i + 2, k]
                a3 = X[i + 3, k]
                a4 = X[i + 4, k]
                a5 = X[i + 5, k]
                a6 = X[i + 6, k]
                a7 = X[i + 7, k]
                w = W[k, j0:j1]
                for j in range(m):
                    wj = w[j]
                    o0[j] += a0 * wj
                    o1[j] += a1 * wj
                    o2[j] += a2 * wj
                    o3[j] += a3 * wj
                    o4[j] += a4 * wj
                    o5[j] += a5 * wj
                    o6[j] += a6 * wj
                    o7[j] += a7 * wj
            i += 8
        while i < n:
            o0 = out[i, j0:j1]
            for k in range(d):
                a0 = X[i, k]
                w = W[k, j0:j1]
                for j in range(m):
                    o0[j] += a0 * w[j]
            i += 1
    return out


@numba.njit(cache=True, nogil=True)
def _distances(P, norms, h, hnorm, out):
    scores = P @ h
    for c in range(P.shape[0]):
        if norms[c] < 1e-12 or hnorm < 1e-12:
            out[c] = 1.0
        else:
            cos = scores[c] / (norms[c] * hnorm)
            if cos > 1.0:
                cos = 1.0
            elif cos < -1.0:
                cos = -1.0
            out[c] = 1.0 - cos


@numba.njit(cache=True, nogil=True)
def retrain_pass(P, H, y, alpha):
    """One sequential pass over the rows of ``H``, updating ``P`` in place.

    A row of class t predicted as q != t moves p_t toward it by
    alpha * (1 - dist_t) and p_q away from it by alpha * (1 - dist_q).
    Returns the number of mispredicted rows.
    """
    C = P.shape[0]
    norms = np.empty(C)
    for c in range(C):
        norms[c] = np.sqrt(np.dot(P[c], P[c]))
    dist = np.empty(C)
    wrong = 0
    for i in range(H.shape[0]):
        h = H[i]
        hnorm = np.sqrt(np.dot(h, h))
        _distances(P, norms, h, hnorm, dist)
        q = 0
        for c in range(1, C):
            if dist[c] < dist[q]:
                q = c
        t = y[i]
        if q == t:
            continue
        wrong += 1
        gain = alpha * (1.0 - dist[t])
        loss = alpha * (1.0 - dist[q])
        pt = P[t]
        pq = P[q]
        for j in range(h.shape[0]):
            pt[j] += gain * h[j]
            pq[j] -= loss * h[j]
        norms[t] = np.sqrt(np.dot(pt, pt))
        norms[q] = np.sqrt(np.dot(pq, pq))
    return wrong
