# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: HMM forward-backward, Viterbi, edit distance.

Same contracts as ``_fallback``; see that module for argument layout.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY

cnp.import_array()


cdef inline double _lse_pair(double a, double b) nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        return a + log(1.0 + exp(b - a))
    return b + log(1.0 + exp(a - b))


def _forward_backward(const double[:, ::1] emit, const double[::1] start_w,
                         const double[::1] final_w, const cnp.int64_t[::1] in_ptr,
                         const cnp.int64_t[::1] in_src, const double[::1] in_w,
                         const cnp.int64_t[::1] out_ptr, const cnp.int64_t[::1] out_dst,
                         const double[::1] out_w):
    cdef Py_ssize_t T = emit.shape[0], G = emit.shape[1]
    cdef Py_ssize_t t, s, a
    cdef double m, acc, v, log_z
    alpha_arr = np.empty((T, G))
    beta_arr = np.empty((T, G))
    gamma_arr = np.zeros((T, G))
    cdef double[:, ::1] alpha = alpha_arr
    cdef double[:, ::1] beta = beta_arr
    cdef double[:, ::1] gamma = gamma_arr

    with nogil:
        for s in range(G):
            alpha[0, s] = start_w[s] + emit[0, s]
        for t in range(1, T):
            for s in range(G):
                m = -INFINITY
                for a in range(in_ptr[s], in_ptr[s + 1]):
                    v = alpha[t - 1, in_src[a]] + in_w[a]
                    if v > m:
                        m = v
                if m == -INFINITY:
                    alpha[t, s] = -INFINITY
                    continue
                acc = 0.0
                for a in range(in_ptr[s], in_ptr[s + 1]):
                    acc += exp(alpha[t - 1, in_src[a]] + in_w[a] - m)
                alpha[t, s] = m + log(acc) + emit[t, s]
        m = -INFINITY
        for s in range(G):
            v = alpha[T - 1, s] + final_w[s]
            if v > m:
                m = v
        if m == -INFINITY:
            log_z = -INFINITY
        else:
            acc = 0.0
            for s in range(G):
                acc += exp(alpha[T - 1, s] + final_w[s] - m)
            log_z = m + log(acc)

    if log_z == -INFINITY:
        return -np.inf, gamma_arr

    with nogil:
        for s in range(G):
            beta[T - 1, s] = final_w[s]
        for t in range(T - 2, -1, -1):
            for s in range(G):
                m = -INFINITY
                for a in range(out_ptr[s], out_ptr[s + 1]):
                    v = out_w[a] + emit[t + 1, out_dst[a]] + beta[t + 1, out_dst[a]]
                    if v > m:
                        m = v
                if m == -INFINITY:
                    beta[t, s] = -INFINITY
                    continue
                acc = 0.0
                for a in range(out_ptr[s], out_ptr[s + 1]):
                    acc += exp(out_w[a] + emit[t + 1, out_dst[a]] + beta[t + 1, out_dst[a]] - m)
                beta[t, s] = m + log(acc)
        for t in range(T):
            for s in range(G):
                v = alpha[t, s] + beta[t, s]
                if v != -INFINITY:
                    gamma[t, s] = exp(v - log_z)
    return log_z, gamma_arr


def _viterbi(const double[:, ::1] emit, const double[::1] start_w,
                const double[::1] final_w, const cnp.int64_t[::1] in_ptr,
                const cnp.int64_t[::1] in_src, const double[::1] in_w):
    cdef Py_ssize_t T = emit.shape[0], G = emit.shape[1]
    cdef Py_ssize_t t, s, a, best_src, src
    cdef double best, v, score
    prev_arr = np.empty(G)
    cur_arr = np.empty(G)
    back_arr = np.full((T, G), -1, dtype=np.int64)
    path_arr = np.empty(T, dtype=np.int64)
    cdef double[::1] prev = prev_arr
    cdef double[::1] cur = cur_arr
    cdef cnp.int64_t[:, ::1] back = back_arr
    cdef cnp.int64_t[::1] path = path_arr

    with nogil:
        for s in range(G):
            prev[s] = start_w[s] + emit[0, s]
        for t in range(1, T):
            for s in range(G):
                best = -INFINITY
                best_src = -1
                for a in range(in_ptr[s], in_ptr[s + 1]):
                    src = in_src[a]
                    v = prev[src] + in_w[a]
                    if v == -INFINITY:
                        continue
                    if v > best or (v == best and src < best_src):
                        best = v
                        best_src = src
                back[t, s] = best_src
                cur[s] = best + emit[t, s]
            for s in range(G):
                prev[s] = cur[s]
        score = -INFINITY
        best_src = -1
        for s in range(G):
            v = prev[s] + final_w[s]
            if v > score:
                score = v
                best_src = s
    if score == -INFINITY:
        return -np.inf, path_arr
    path[T - 1] = best_src
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return score, path_arr


def hmm_forward_backward(emit, start_w, final_w, in_ptr, in_src, in_w, out_ptr, out_dst, out_w):
    """Compiled forward-backward; same contract as the fallback."""
    return _forward_backward(*_dense(emit, start_w, final_w), *_index(in_ptr, in_src),
                             *_dense(in_w), *_index(out_ptr, out_dst), *_dense(out_w))


def hmm_viterbi(emit, start_w, final_w, in_ptr, in_src, in_w):
    """Compiled Viterbi; same contract as the fallback."""
    return _viterbi(*_dense(emit, start_w, final_w), *_index(in_ptr, in_src), *_dense(in_w))


def _dense(*arrays):
    return [np.ascontiguousarray(a, dtype=np.float64) for a in arrays]


def _index(*arrays):
    return [np.ascontiguousarray(a, dtype=np.int64) for a in arrays]


def edit_ops(ref, hyp):
    cdef cnp.int64_t[::1] r = np.ascontiguousarray(ref, dtype=np.int64)
    cdef cnp.int64_t[::1] h = np.ascontiguousarray(hyp, dtype=np.int64)
    cdef Py_ssize_t n = r.shape[0], m = h.shape[0], i, j
    cdef long subs = 0, ins = 0, dels = 0, d, up, left, best, neq
    cost_arr = np.empty((n + 1, m + 1), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] cost = cost_arr
    with nogil:
        for i in range(n + 1):
            cost[i, 0] = i
        for j in range(m + 1):
            cost[0, j] = j
        for i in range(1, n + 1):
            for j in range(1, m + 1):
                d = cost[i - 1, j - 1] + (r[i - 1] != h[j - 1])
                up = cost[i - 1, j] + 1
                left = cost[i, j - 1] + 1
                best = d
                if up < best:
                    best = up
                if left < best:
                    best = left
                cost[i, j] = best
        i = n
        j = m
        while i > 0 or j > 0:
            if i > 0 and j > 0:
                neq = r[i - 1] != h[j - 1]
                if cost[i, j] == cost[i - 1, j - 1] + neq:
                    subs += neq
                    i -= 1
                    j -= 1
                    continue
            if i > 0 and cost[i, j] == cost[i - 1, j] + 1:
                dels += 1
                i -= 1
            else:
                ins += 1
                j -= 1
    return subs, ins, dels
