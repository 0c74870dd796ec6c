"""Add-k smoothed n-gram language model.

For a history ``h`` with count ``c(h)`` the model assigns
``P(w | h) = (c(h, w) + k) / (c(h) + k |V|)`` where ``V`` holds the training
words plus ``</s>`` and ``<unk>``.  Histories never seen in training get the
uniform distribution ``1 / |V|``, which is the same formula at ``c(h) = 0``.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

BOS, EOS, UNK = "<s>", "</s>", "<unk>"
LN10 = math.log(10.0)


@dataclass(frozen=True)
class NgramModel:
    order: int
    k: float
    vocab: tuple[str, ...]
    # natural-log probabilities
    seen: dict = field(repr=False)
    floor: dict = field(repr=False)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def _map(self, token: str) -> str:
        return token if token in self._vocab_set else UNK

    @property
    def _vocab_set(self):
        s = self.__dict__.get("_vs")
        if s is None:
            s = frozenset(self.vocab)
            object.__setattr__(self, "_vs", s)
        return s

    def history(self, tokens) -> tuple[str, ...]:
        """The conditioning history for the next token after ``tokens``."""
        n = self.order - 1
        if n == 0:
            return ()
        padded = [BOS] * n + [self._map(t) for t in tokens]
        return tuple(padded[-n:])

    def logprob(self, word: str, hist: tuple[str, ...]) -> float:
        word = word if word == EOS else self._map(word)
        lp = self.seen.get((hist, word))
        if lp is not None:
            return lp
        lp = self.floor.get(hist)
        if lp is not None:
            return lp
        return -math.log(self.vocab_size)

    def next_history(self, hist: tuple[str, ...], word: str) -> tuple[str, ...]:
        if self.order == 1:
            return ()
        return (hist + (self._map(word),))[1:]


def train_ngram(corpus, order: int = 2, k: float = 0.1) -> NgramModel:
    if order < 1:
        raise ValueError("order must be >= 1")
    if not k > 0:
        raise ValueError("k must be > 0")
    corpus = [list(s) for s in corpus]
    if not corpus:
        raise ValueError("empty corpus")
    words = sorted({w for s in corpus for w in s} - {BOS, EOS, UNK})
    vocab = tuple(words) + (EOS, UNK)
    V = len(vocab)
    joint: Counter = Counter()
    hist_count: Counter = Counter()
    n = order - 1
    for sent in corpus:
        padded = [BOS] * n + sent + [EOS]
        for i in range(n, len(padded)):
            hist = tuple(padded[i - n:i])
            joint[(hist, padded[i])] += 1
            hist_count[hist] += 1
    seen = {key: math.log((c + k) / (hist_count[key[0]] + k * V)) for key, c in joint.items()}
    floor = {h: math.log(k / (c + k * V)) for h, c in hist_count.items()}
    return NgramModel(order, float(k), vocab, seen, floor)


def lm_logprob(model: NgramModel, tokens) -> float:
    """Natural-log probability of ``tokens`` followed by ``</s>``."""
    hist = model.history([])
    total = 0.0
    for tok in tokens:
        total += model.logprob(tok, hist)
        hist = model.next_history(hist, tok)
    return total + model.logprob(EOS, hist)


def write_lm(path, model: NgramModel) -> None:
    """ARPA-like text: header, vocabulary, per-history floors, seen n-grams.

    Every record is ``log10prob<TAB>tokens``; floors are written for the
    history alone.  Values are printed with ``repr`` so they reload exactly.
    """
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"\\order={model.order}\n\\k={model.k!r}\n\\vocab={len(model.vocab)}\n")
        f.write("\\vocab:\n")
        for w in model.vocab:
            f.write(f"{w}\n")
        f.write("\\floors:\n")
        for h in sorted(model.floor):
            f.write(f"{model.floor[h] / LN10!r}\t{' '.join(h)}\n")
        f.write(f"\\{model.order}-grams:\n")
        for (h, w) in sorted(model.seen):
            f.write(f"{model.seen[(h, w)] / LN10!r}\t{' '.join(h + (w,))}\n")
        f.write("\\end\\\n")


def read_lm(path) -> NgramModel:
    with open(path, encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f]
    try:
        order = int(lines[0].split("=", 1)[1])
        k = float(lines[1].split("=", 1)[1])
        nv = int(lines[2].split("=", 1)[1])
        assert lines[3] == "\\vocab:"
        vocab = tuple(lines[4:4 + nv])
        i = 4 + nv
        assert lines[i] == "\\floors:"
        i += 1
        floor, seen = {}, {}
        while not lines[i].startswith("\\"):
            val, _, toks = lines[i].partition("\t")
            floor[tuple(toks.split())] = float(val) * LN10
            i += 1
        assert lines[i] == f"\\{order}-grams:"
        i += 1
        while lines[i] != "\\end\\":
            val, _, toks = lines[i].partition("\t")
            parts = tuple(toks.split())
            seen[(parts[:-1], parts[-1])] = float(val) * LN10
            i += 1
    except (IndexError, ValueError, AssertionError) as exc:
        raise ValueError(f"{path}: malformed LM file") from exc
    return NgramModel(order, k, vocab, seen, floor)
