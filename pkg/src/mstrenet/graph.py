"""Phone-state HMM graphs and the dynamic programs over them.

A path of length T visits one emitting state per frame.  Its score is

    start_w[s_1] + sum_t kappa * loglike[t, label(s_t)] + sum of arc weights + final_w[s_T]

Graphs may contain epsilon (non-emitting) states while being built; they are
removed by :meth:`HmmGraph.compiled` before any dynamic program runs.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .lexicon import SIL, Lexicon, state_of
from .text import DOMAIN_TAGS, PSEUDO_WORDS

NEG_INF = -math.inf


@dataclass
class CompiledGraph:
    labels: np.ndarray
    start_w: np.ndarray
    final_w: np.ndarray
    in_ptr: np.ndarray
    in_src: np.ndarray
    in_w: np.ndarray
    out_ptr: np.ndarray
    out_dst: np.ndarray
    out_w: np.ndarray
    origin: np.ndarray  # original state id of each compiled state

    @property
    def num_states(self) -> int:
        return len(self.labels)


@dataclass
class HmmGraph:
    """Directed graph of phone states; ``label=None`` marks an epsilon state."""

    labels: list = field(default_factory=list)
    arcs: list = field(default_factory=list)  # (src, dst, log weight)
    start: dict = field(default_factory=dict)  # state -> log weight
    final: dict = field(default_factory=dict)
    info: list = field(default_factory=list)  # per-state annotation (word index, phone)
    _compiled: CompiledGraph | None = field(default=None, repr=False, compare=False)

    def add_state(self, label, info=None) -> int:
        self.labels.append(label)
        self.info.append(info)
        self._compiled = None
        return len(self.labels) - 1

    def add_arc(self, src: int, dst: int, logw: float = 0.0) -> None:
        if not math.isfinite(logw):
            raise ValueError("arc weights must be finite")
        self.arcs.append((src, dst, float(logw)))
        self._compiled = None

    def validate(self, num_states: int | None = None) -> None:
        if not self.start or not self.final:
            raise ValueError("graph needs at least one start and one final state")
        if num_states is not None:
            for lab in self.labels:
                if lab is not None and not 0 <= lab < num_states:
                    raise ValueError(f"state label {lab} outside [0, {num_states})")

    def compiled(self) -> CompiledGraph:
        if self._compiled is None:
            self._compiled = _compile(self)
        return self._compiled


def _logadd(a: float, b: float) -> float:
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    m = max(a, b)
    return m + math.log(math.exp(a - m) + math.exp(b - m))


def _compile(g: HmmGraph) -> CompiledGraph:
    g.validate()
    n = len(g.labels)
    emitting = [s for s in range(n) if g.labels[s] is not None]
    new_id = {s: i for i, s in enumerate(emitting)}
    succ = defaultdict(list)
    for src, dst, w in g.arcs:
        succ[src].append((dst, w))

    def eps_closure(weighted):
        """Emitting states reachable through epsilon states, with summed weights."""
        out: dict[int, float] = {}
        stack = list(weighted)
        depth = 0
        while stack:
            depth += 1
            if depth > 1_000_000:
                raise ValueError("epsilon cycle in graph")
            s, w = stack.pop()
            if g.labels[s] is not None:
                out[s] = _logadd(out.get(s, NEG_INF), w)
                continue
            final = g.final.get(s)
            if final is not None:
                out[-1] = _logadd(out.get(-1, NEG_INF), w + final)
            stack.extend((d, w + dw) for d, dw in succ[s])
        return out

    G = len(emitting)
    start_w = np.full(G, NEG_INF)
    for s, w in eps_closure(list(g.start.items())).items():
        if s >= 0:
            start_w[new_id[s]] = _logadd(start_w[new_id[s]], w)
    final_w = np.full(G, NEG_INF)
    arcs: dict[tuple[int, int], float] = {}
    for s in emitting:
        if s in g.final:
            final_w[new_id[s]] = _logadd(final_w[new_id[s]], g.final[s])
        for d, w in eps_closure(succ[s]).items():
            if d == -1:
                final_w[new_id[s]] = _logadd(final_w[new_id[s]], w)
            else:
                key = (new_id[s], new_id[d])
                arcs[key] = _logadd(arcs.get(key, NEG_INF), w)
    src = np.array([k[0] for k in arcs], dtype=np.int64)
    dst = np.array([k[1] for k in arcs], dtype=np.int64)
    w = np.array(list(arcs.values()), dtype=np.float64)
    by_dst = np.lexsort((src, dst))
    by_src = np.lexsort((dst, src))
    in_ptr = np.concatenate([[0], np.cumsum(np.bincount(dst, minlength=G))]).astype(np.int64)
    out_ptr = np.concatenate([[0], np.cumsum(np.bincount(src, minlength=G))]).astype(np.int64)
    return CompiledGraph(
        labels=np.array([g.labels[s] for s in emitting], dtype=np.int64),
        start_w=start_w, final_w=final_w,
        in_ptr=in_ptr, in_src=np.ascontiguousarray(src[by_dst]), in_w=np.ascontiguousarray(w[by_dst]),
        out_ptr=out_ptr, out_dst=np.ascontiguousarray(dst[by_src]), out_w=np.ascontiguousarray(w[by_src]),
        origin=np.array(emitting, dtype=np.int64),
    )


def _emissions(cg: CompiledGraph, loglikes: np.ndarray, kappa: float) -> np.ndarray:
    loglikes = np.asarray(loglikes, dtype=np.float64)
    if loglikes.ndim != 2 or loglikes.shape[0] < 1:
        raise ValueError(f"loglikes must be T x S with T >= 1, got {loglikes.shape}")
    if cg.labels.size and cg.labels.max() >= loglikes.shape[1]:
        raise ValueError(f"graph label {cg.labels.max()} >= loglike width {loglikes.shape[1]}")
    return np.ascontiguousarray(kappa * loglikes[:, cg.labels])


def forward_backward(graph: HmmGraph, loglikes, kappa: float = 1.0):
    """Total log score over all length-T paths and per-frame state occupancies.

    Occupancies are summed over graph states sharing a label, giving a
    T x S matrix whose rows sum to one.
    """
    cg = graph.compiled()
    emit = _emissions(cg, loglikes, kappa)
    log_z, gamma = _core.hmm_forward_backward(
        emit, cg.start_w, cg.final_w, cg.in_ptr, cg.in_src, cg.in_w,
        cg.out_ptr, cg.out_dst, cg.out_w)
    if not math.isfinite(log_z):
        raise ValueError("graph admits no path")
    occ = np.zeros((emit.shape[0], np.shape(loglikes)[1]))
    np.add.at(occ.T, cg.labels, np.asarray(gamma).T)
    return float(log_z), occ


@dataclass
class AlignmentPath:
    states: np.ndarray  # original graph state per frame
    labels: np.ndarray  # phone-state id per frame
    score: float
    words: list  # (word, first_frame, last_frame)


def viterbi_path(graph: HmmGraph, loglikes, kappa: float = 1.0):
    cg = graph.compiled()
    emit = _emissions(cg, loglikes, kappa)
    score, path = _core.hmm_viterbi(emit, cg.start_w, cg.final_w, cg.in_ptr, cg.in_src, cg.in_w)
    if not math.isfinite(score):
        return NEG_INF, None
    return float(score), cg.origin[np.asarray(path)]


def forced_align(graph: HmmGraph, loglikes, kappa: float = 1.0) -> AlignmentPath:
    """Viterbi state sequence through ``graph``; ties go to the lowest state id."""
    score, states = viterbi_path(graph, loglikes, kappa)
    if states is None:
        raise ValueError("alignment failed")
    labels = np.array([graph.labels[s] for s in states], dtype=np.int64)
    words = []
    prev_index = None
    for t, s in enumerate(states):
        info = graph.info[s] or {}
        index = info.get("word_index")
        if index is None:
            prev_index = None
            continue
        if index != prev_index:
            words.append([info["word"], t, t])
        else:
            words[-1][2] = t
        prev_index = index
    return AlignmentPath(np.asarray(states), labels, score, [tuple(w) for w in words])


def path_score(graph: HmmGraph, states, loglikes, kappa: float = 1.0) -> float:
    """Score of an explicit emitting-state sequence, ``-inf`` if inadmissible."""
    cg = graph.compiled()
    pos = {int(o): i for i, o in enumerate(cg.origin)}
    try:
        idx = [pos[int(s)] for s in states]
    except KeyError:
        return NEG_INF
    arcs = {}
    for d in range(cg.num_states):
        for a in range(cg.in_ptr[d], cg.in_ptr[d + 1]):
            arcs[(int(cg.in_src[a]), d)] = cg.in_w[a]
    loglikes = np.asarray(loglikes)
    total = cg.start_w[idx[0]] + cg.final_w[idx[-1]]
    for t, s in enumerate(idx):
        total += kappa * loglikes[t, cg.labels[s]]
        if t:
            w = arcs.get((idx[t - 1], s))
            if w is None:
                return NEG_INF
            total += w
    return float(total)


def build_align_graph(transcript, lex: Lexicon, self_loop_prob: float = 0.5,
                      optional_silence: bool = True, silence_prob: float = 0.5) -> HmmGraph:
    """Expand a word sequence into a phone-state graph.

    Alternative pronunciations become parallel branches.  With
    ``optional_silence`` a skippable silence-class state sits between two
    consecutive real words; it uses the phone of the transcript's boundary
    tag (``SIL`` when untagged).
    """
    if not 0.0 < self_loop_prob < 1.0:
        raise ValueError("self_loop_prob must be in (0, 1)")
    tokens = list(transcript)
    for tok in tokens:
        if tok not in lex:
            raise KeyError(f"token {tok!r} missing from lexicon")
    gap_phone = SIL
    if tokens and tokens[0] in PSEUDO_WORDS:
        gap_phone = lex.pronunciations(tokens[0])[0][0]
    stay, leave = math.log(self_loop_prob), math.log1p(-self_loop_prob)

    g = HmmGraph()
    boundary = g.add_state(None)
    g.start[boundary] = 0.0
    for i, word in enumerate(tokens):
        if (optional_silence and i > 0 and word not in PSEUDO_WORDS
                and tokens[i - 1] not in PSEUDO_WORDS):
            sil = g.add_state(state_of(gap_phone), {"word": None, "phone": gap_phone})
            after = g.add_state(None)
            g.add_arc(boundary, sil, math.log(silence_prob))
            g.add_arc(sil, sil, stay)
            g.add_arc(sil, after, leave)
            g.add_arc(boundary, after, math.log1p(-silence_prob))
            boundary = after
        nxt = g.add_state(None)
        prons = lex.pronunciations(word)
        enter = -math.log(len(prons))
        for b, pron in enumerate(prons):
            prev = boundary
            for pos, ph in enumerate(pron):
                s = g.add_state(state_of(ph), {"word": word, "word_index": i, "branch": b,
                                               "pos": pos, "phone": ph})
                g.add_arc(prev, s, enter if pos == 0 else leave)
                g.add_arc(s, s, stay)
                prev = s
            g.add_arc(prev, nxt, leave)
        boundary = nxt
    g.final[boundary] = 0.0
    return g


def linear_graph(labels, self_loop_prob: float = 0.5) -> HmmGraph:
    """Left-to-right chain over ``labels`` with self-loops (numerator graphs)."""
    labels = list(labels)
    if not labels:
        raise ValueError("empty label sequence")
    stay, leave = math.log(self_loop_prob), math.log1p(-self_loop_prob)
    g = HmmGraph()
    prev = None
    for lab in labels:
        s = g.add_state(int(lab))
        g.add_arc(s, s, stay)
        if prev is None:
            g.start[s] = 0.0
        else:
            g.add_arc(prev, s, leave)
        prev = s
    g.final[prev] = 0.0
    return g


def collapse_repeats(labels) -> list[int]:
    out: list[int] = []
    for lab in labels:
        lab = int(lab)
        if not out or out[-1] != lab:
            out.append(lab)
    return out


def phone_bigram_graph(sequences, self_loop_prob: float = 0.5) -> HmmGraph:
    """Denominator graph: one state per phone, arcs weighted by a maximum-likelihood
    phone bigram (with sentence boundaries) estimated from ``sequences``."""
    counts: dict = defaultdict(lambda: defaultdict(int))
    for seq in sequences:
        seq = collapse_repeats(seq)
        if not seq:
            continue
        for a, b in zip(["<s>"] + seq, seq + ["</s>"]):
            counts[a][b] += 1
    if not counts:
        raise ValueError("no phone sequences to build a denominator graph from")
    phones = sorted({p for seq in counts.values() for p in seq if p != "</s>"})
    stay, leave = math.log(self_loop_prob), math.log1p(-self_loop_prob)
    g = HmmGraph()
    sid = {p: g.add_state(p) for p in phones}
    for a, row in counts.items():
        total = sum(row.values())
        for b, c in row.items():
            lp = math.log(c / total)
            if a == "<s>":
                g.start[sid[b]] = lp
            elif b == "</s>":
                g.final[sid[a]] = leave + lp
            else:
                g.add_arc(sid[a], sid[b], leave + lp)
    for p in phones:
        g.add_arc(sid[p], sid[p], stay)
    return g


def domain_phone(domain: str, lex: Lexicon) -> int:
    return state_of(lex.pronunciations(DOMAIN_TAGS[domain])[0][0])
