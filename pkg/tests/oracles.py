"""Independent reference implementations used by the tests.

Each one is deliberately naive (enumeration or plain recursion) and shares
no code with the package beyond the data types it reads.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np


def enumerate_paths(graph, T: int):
    """Yield ``(emitting_states, log_weight)`` for every route of exactly T
    emitting frames through ``graph``, epsilon states included.

    Distinct epsilon routes producing the same emitting sequence are yielded
    separately so summing them matches the weighted-graph semantics.
    """
    succ: dict[int, list] = {}
    for src, dst, w in graph.arcs:
        succ.setdefault(src, []).append((dst, w))

    def walk(state, w, seq):
        if graph.labels[state] is not None:
            seq = seq + (state,)
            if len(seq) > T:
                return
        if len(seq) == T and state in graph.final:
            yield seq, w + graph.final[state]
        for dst, dw in succ.get(state, ()):
            yield from walk(dst, w + dw, seq)

    for s, w in graph.start.items():
        yield from walk(s, w, ())


def _lse(values):
    values = list(values)
    if not values:
        return -math.inf
    m = max(values)
    return m + math.log(sum(math.exp(v - m) for v in values))


def brute_logz_and_occ(graph, loglikes, kappa: float = 1.0):
    """log of the summed path score and per-frame label posteriors."""
    loglikes = np.asarray(loglikes, dtype=np.float64)
    T, S = loglikes.shape
    scored = []
    for seq, w in enumerate_paths(graph, T):
        s = w + kappa * sum(loglikes[t, graph.labels[st]] for t, st in enumerate(seq))
        scored.append((seq, s))
    log_z = _lse(s for _, s in scored)
    occ = np.zeros((T, S))
    for seq, s in scored:
        p = math.exp(s - log_z)
        for t, st in enumerate(seq):
            occ[t, graph.labels[st]] += p
    return log_z, occ, len(scored)


def brute_best_path(graph, loglikes, kappa: float = 1.0):
    """Highest-scoring emitting-state sequence and its score.

    Epsilon routes that produce the same emitting sequence are summed first,
    matching a graph whose epsilon states have been folded into arcs.
    """
    loglikes = np.asarray(loglikes, dtype=np.float64)
    by_seq: dict = {}
    for seq, w in enumerate_paths(graph, loglikes.shape[0]):
        by_seq.setdefault(seq, []).append(w)
    best, best_seq = -math.inf, None
    for seq in sorted(by_seq):
        s = _lse(by_seq[seq]) + kappa * sum(loglikes[t, graph.labels[st]]
                                            for t, st in enumerate(seq))
        if s > best:
            best, best_seq = s, seq
    return best, best_seq


def edit_distance(ref, hyp) -> int:
    """Plain recursive Levenshtein distance with unit costs."""
    ref, hyp = tuple(ref), tuple(hyp)

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1,
                   d(i - 1, j - 1) + (ref[i - 1] != hyp[j - 1]))

    return d(len(ref), len(hyp))


def _compositions(total: int, parts: int):
    """All ways to write ``total`` as an ordered sum of ``parts`` positive ints."""
    for cuts in itertools.combinations(range(1, total), parts - 1):
        bounds = (0, *cuts, total)
        yield [b - a for a, b in zip(bounds, bounds[1:])]


def chain_best_score(phones, loglikes, self_loop_prob: float) -> float:
    """Best score of a left-to-right chain over ``phones`` by enumerating
    every segmentation of the frames."""
    T = len(loglikes)
    n = len(phones)
    if n > T:
        return -math.inf
    stay, leave = math.log(self_loop_prob), math.log1p(-self_loop_prob)
    best = -math.inf
    for lengths in _compositions(T, n):
        s, t = 0.0, 0
        for ph, ln in zip(phones, lengths):
            s += sum(loglikes[t + i][ph] for i in range(ln))
            t += ln
        s += (T - n) * stay + (n - 1) * leave
        best = max(best, s)
    return best


def brute_force_decode(loglikes, prons_by_word: dict, lm_logprob_fn, lm_scale: float,
                       word_insertion_penalty: float, self_loop_prob: float = 0.5):
    """Exhaustive argmax over every word sequence whose phones fit in T frames.

    ``prons_by_word`` maps a word to a list of phone-state tuples;
    ``lm_logprob_fn(words)`` returns the natural-log sentence probability.
    Returns ``(best_score, [all word sequences reaching it within 1e-9])``.
    """
    T = len(loglikes)
    words = list(prons_by_word)
    results = []

    def extend(seq, n_phones):
        if seq:
            total_ac = -math.inf
            for combo in itertools.product(*(prons_by_word[w] for w in seq)):
                phones = [p for pron in combo for p in pron]
                total_ac = max(total_ac, chain_best_score(phones, loglikes, self_loop_prob))
            if math.isfinite(total_ac):
                score = (total_ac + lm_scale * lm_logprob_fn(seq)
                         + word_insertion_penalty * len(seq))
                results.append((score, list(seq)))
        for w in words:
            shortest = min(len(p) for p in prons_by_word[w])
            if n_phones + shortest <= T:
                extend(seq + (w,), n_phones + shortest)

    extend((), 0)
    best = max(s for s, _ in results)
    return best, [seq for s, seq in results if s >= best - 1e-9]
