"""Token-passing Viterbi decoding with an n-gram LM, WER scoring and the
real-time-factor harness."""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .lexicon import Lexicon, state_of
from .lm import EOS, NgramModel
from .text import strip_tags

NEG_INF = -math.inf


@dataclass
class DecodeResult:
    words: list[str]
    score: float


def viterbi_decode(loglikes, lex: Lexicon, lm: NgramModel, lm_scale: float = 10.0,
                   word_insertion_penalty: float = 0.0, beam: float = math.inf,
                   kappa: float = 1.0, self_loop_prob: float = 0.5,
                   vocabulary=None, silence_words=()) -> DecodeResult:
    """Best word sequence under ``kappa * acoustics + lm_scale * log P(W) + penalty * |W|``.

    Every phone is one HMM state with self-loop ``self_loop_prob``; moving to
    the next phone (within or across words) costs ``log(1 - self_loop_prob)``.
    A hypothesis must end on the last phone of a word.  ``beam=inf`` searches
    the full lexicon x LM graph exactly.

    ``silence_words`` (e.g. the two pseudo-words) may be entered between any
    words at no LM or insertion cost, leave the LM history alone and are
    dropped from the output.
    """
    if lm_scale < 0:
        raise ValueError("lm_scale must be >= 0")
    words = list(vocabulary) if vocabulary is not None else lex.words()
    if not words:
        raise ValueError("empty lexicon")
    silent = set(silence_words)
    words += [w for w in silence_words if w not in words]
    ll = kappa * np.asarray(loglikes, dtype=np.float64)
    T = ll.shape[0]
    if T < 1:
        raise ValueError("no frames to decode")
    prons = [[tuple(state_of(p) for p in pron) for pron in lex.pronunciations(w)] for w in words]
    stay, leave = math.log(self_loop_prob), math.log1p(-self_loop_prob)
    lm_cache: dict = {}

    def lm_score(word_index, hist):
        key = (word_index, hist)
        val = lm_cache.get(key)
        if val is None:
            w = words[word_index]
            if w in silent:
                val = (0.0, hist)
            else:
                val = (lm_scale * lm.logprob(w, hist) + word_insertion_penalty,
                       lm.next_history(hist, w))
            lm_cache[key] = val
        return val

    def enter(tokens, t, hist, base, trace):
        frame = ll[t]
        for wi in range(len(words)):
            add, new_hist = lm_score(wi, hist)
            link = (trace, wi)
            for pi, pron in enumerate(prons[wi]):
                key = (new_hist, wi, pi, 0)
                s = base + add + frame[pron[0]]
                cur = tokens.get(key)
                if cur is None or s > cur[0]:
                    tokens[key] = (s, link)

    tokens: dict = {}
    enter(tokens, 0, lm.history([]), 0.0, None)
    for t in range(1, T):
        frame = ll[t]
        nxt: dict = {}
        ends: dict = {}
        for key, (score, trace) in tokens.items():
            hist, wi, pi, pos = key
            pron = prons[wi][pi]
            s = score + stay + frame[pron[pos]]
            cur = nxt.get(key)
            if cur is None or s > cur[0]:
                nxt[key] = (s, trace)
            if pos + 1 < len(pron):
                k2 = (hist, wi, pi, pos + 1)
                s = score + leave + frame[pron[pos + 1]]
                cur = nxt.get(k2)
                if cur is None or s > cur[0]:
                    nxt[k2] = (s, trace)
            else:
                cur = ends.get(hist)
                if cur is None or score > cur[0]:
                    ends[hist] = (score, trace)
        for hist, (score, trace) in ends.items():
            enter(nxt, t, hist, score + leave, trace)
        if math.isfinite(beam) and nxt:
            best = max(v[0] for v in nxt.values())
            nxt = {k: v for k, v in nxt.items() if v[0] >= best - beam}
        tokens = nxt

    best_score, best_trace = NEG_INF, None
    for (hist, wi, pi, pos), (score, trace) in tokens.items():
        if pos + 1 != len(prons[wi][pi]):
            continue
        s = score + lm_scale * lm.logprob(EOS, hist)
        if s > best_score:
            best_score, best_trace = s, trace
    if best_trace is None:
        raise ValueError("no complete hypothesis survived the beam")
    out = []
    while best_trace is not None:
        best_trace, wi = best_trace
        if words[wi] not in silent:
            out.append(words[wi])
    return DecodeResult(out[::-1], best_score)


@dataclass
class WerReport:
    substitutions: int
    insertions: int
    deletions: int
    ref_word_count: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        return self.errors / self.ref_word_count

    def __add__(self, other: "WerReport") -> "WerReport":
        return WerReport(self.substitutions + other.substitutions,
                         self.insertions + other.insertions,
                         self.deletions + other.deletions,
                         self.ref_word_count + other.ref_word_count)

    def summary(self) -> str:
        return (f"%WER {100 * self.wer:.2f} [ {self.errors} / {self.ref_word_count}, "
                f"{self.insertions} ins, {self.deletions} del, {self.substitutions} sub ]")


def compute_wer(reference, hypothesis) -> WerReport:
    """Unit-cost Levenshtein alignment; ``<silence>``/``<music>`` are ignored."""
    ref = strip_tags(reference)
    hyp = strip_tags(hypothesis)
    if not ref:
        raise ValueError("empty reference")
    ids: dict[str, int] = {}
    r = np.array([ids.setdefault(w, len(ids)) for w in ref], dtype=np.int64)
    h = np.array([ids.setdefault(w, len(ids)) for w in hyp], dtype=np.int64)
    s, i, d = _core.edit_ops(r, h)
    return WerReport(int(s), int(i), int(d), len(ref))


def corpus_wer(pairs) -> WerReport:
    total = WerReport(0, 0, 0, 0)
    for ref, hyp in pairs:
        total = total + compute_wer(ref, hyp)
    return total


@dataclass
class RtfReport:
    audio_seconds: float
    processing_seconds: list[float] = field(default_factory=list)
    threads: int = 1

    @property
    def iterations(self) -> int:
        return len(self.processing_seconds)

    @property
    def rtfs(self) -> list[float]:
        return [p / self.audio_seconds for p in self.processing_seconds]

    @property
    def mean_rtf(self) -> float:
        return float(np.mean(self.rtfs))


def best_path_decoder(posteriors: np.ndarray) -> list[int]:
    """Frame-level argmax with repeats collapsed; the default decode step in RTF runs."""
    best = np.argmax(posteriors, axis=1)
    return [int(b) for i, b in enumerate(best) if i == 0 or b != best[i - 1]]


def measure_rtf(model, features, iterations: int = 5, decoder=best_path_decoder,
                pin_cpu: bool = True, clock=time.perf_counter) -> RtfReport:
    """Processing time over audio duration for forward + decode, one report
    entry per pass over ``features``.  Runs with BLAS limited to one thread
    and, where the OS allows, pinned to one CPU."""
    from threadpoolctl import threadpool_limits

    from .arch import model_forward

    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    features = list(features)
    if not features:
        raise ValueError("empty feature list")
    audio = sum(f.duration_s for f in features)
    report = RtfReport(audio_seconds=audio, threads=1)
    old_affinity = None
    if pin_cpu and hasattr(os, "sched_setaffinity"):
        old_affinity = os.sched_getaffinity(0)
        os.sched_setaffinity(0, {min(old_affinity)})
    try:
        with threadpool_limits(limits=1):
            for _ in range(iterations):
                start = clock()
                for f in features:
                    post = model_forward(model, f)
                    if decoder is not None:
                        decoder(post)
                elapsed = clock() - start
                report.processing_seconds.append(max(elapsed, 1e-12))
    finally:
        if old_affinity is not None:
            os.sched_setaffinity(0, old_affinity)
    return report


def write_ctm(path, alignments: dict, frame_shift_s: float) -> None:
    """``alignments`` maps utterance id -> list of ``(word, first_frame, last_frame)``."""
    with open(path, "w", encoding="utf-8") as f:
        for utt, words in alignments.items():
            for word, first, last in words:
                start = first * frame_shift_s
                dur = (last - first + 1) * frame_shift_s
                f.write(f"{utt} 1 {start:.3f} {dur:.3f} {word}\n")
