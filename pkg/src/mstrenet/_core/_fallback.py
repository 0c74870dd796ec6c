"""Reference implementations of the hot kernels in numpy / plain Python.

These are used when the compiled extension is unavailable, and double as the
baseline in ``benchmarks/bench_core.py``.  Graph arguments use the compressed
layout produced by :meth:`mstrenet.graph.HmmGraph.compiled`: incoming arcs
grouped by destination (``in_*``) and outgoing arcs grouped by source
(``out_*``).
"""

import numpy as np

NEG_INF = -np.inf


def _segment_logsumexp(values, seg, n):
    m = np.full(n, NEG_INF)
    np.maximum.at(m, seg, values)
    safe = np.where(np.isfinite(m), m, 0.0)
    acc = np.zeros(n)
    np.add.at(acc, seg, np.exp(values - safe[seg]))
    with np.errstate(divide="ignore"):
        out = safe + np.log(acc)
    out[~np.isfinite(m)] = NEG_INF
    return out


def _logsumexp(x):
    m = np.max(x)
    if not np.isfinite(m):
        return NEG_INF
    return float(m + np.log(np.sum(np.exp(x - m))))


def _expand_ptr(ptr):
    return np.repeat(np.arange(len(ptr) - 1), np.diff(ptr))


def hmm_forward_backward(emit, start_w, final_w, in_ptr, in_src, in_w, out_ptr, out_dst, out_w):
    """Log-domain forward-backward over a compiled graph.

    Returns ``(log_z, gamma)`` where ``gamma`` is the T x G matrix of state
    posteriors.  ``log_z`` is ``-inf`` when no complete path exists.
    """
    T, G = emit.shape
    in_dst = _expand_ptr(in_ptr)
    out_src = _expand_ptr(out_ptr)
    alpha = np.empty((T, G))
    alpha[0] = start_w + emit[0]
    for t in range(1, T):
        alpha[t] = emit[t] + _segment_logsumexp(alpha[t - 1][in_src] + in_w, in_dst, G)
    log_z = _logsumexp(alpha[T - 1] + final_w)
    if not np.isfinite(log_z):
        return NEG_INF, np.zeros((T, G))
    beta = np.empty((T, G))
    beta[T - 1] = final_w
    for t in range(T - 2, -1, -1):
        vals = out_w + emit[t + 1][out_dst] + beta[t + 1][out_dst]
        beta[t] = _segment_logsumexp(vals, out_src, G)
    with np.errstate(invalid="ignore"):
        gamma = np.exp(alpha + beta - log_z)
    gamma[~np.isfinite(gamma)] = 0.0
    return log_z, gamma


def hmm_viterbi(emit, start_w, final_w, in_ptr, in_src, in_w):
    """Best path through a compiled graph; ties go to the lowest state id.

    Incoming arcs must be ordered by (destination, source).
    """
    T, G = emit.shape
    in_dst = _expand_ptr(in_ptr)
    delta = start_w + emit[0]
    back = np.full((T, G), -1, dtype=np.int64)
    for t in range(1, T):
        scores = delta[in_src] + in_w
        best = np.full(G, NEG_INF)
        np.maximum.at(best, in_dst, scores)
        hit = np.flatnonzero((scores == best[in_dst]) & np.isfinite(scores))
        # arcs are sorted by (dst, src): first hit per destination is the lowest src
        dsts, first = np.unique(in_dst[hit], return_index=True)
        back[t, dsts] = in_src[hit[first]]
        delta = best + emit[t]
    total = delta + final_w
    score = float(np.max(total))
    path = np.empty(T, dtype=np.int64)
    if not np.isfinite(score):
        return NEG_INF, path
    path[T - 1] = int(np.flatnonzero(total == score)[0])
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return score, path


def edit_ops(ref, hyp):
    """Levenshtein counts ``(subs, ins, dels)`` with unit costs.

    The traceback prefers a diagonal move (match or substitution), then a
    deletion, then an insertion.
    """
    n, m = len(ref), len(hyp)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        cost[i][0] = i
    for j in range(m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row, prev = cost[i], cost[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (ri != hyp[j - 1])
            row[j] = min(diag, prev[j] + 1, row[j - 1] + 1)
    subs = ins = dels = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and cost[i][j] == cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            subs += ref[i - 1] != hyp[j - 1]
            i -= 1
            j -= 1
        elif i > 0 and cost[i][j] == cost[i - 1][j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return int(subs), ins, dels
