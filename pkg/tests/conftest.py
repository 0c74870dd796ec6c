import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mstrenet.graph import HmmGraph  # noqa: E402
from oracles import enumerate_paths  # noqa: E402


def random_graph(rng, num_labels=3, max_states=4, with_epsilon=True, T=4, max_paths=100):
    """Small random graph admitting between 1 and ``max_paths`` length-T routes."""
    while True:
        g = HmmGraph()
        n = int(rng.integers(1, max_states + 1))
        for _ in range(n):
            g.add_state(int(rng.integers(num_labels)))
        if with_epsilon and rng.random() < 0.5:
            g.add_state(None)
        total = len(g.labels)
        for src in range(total):
            for dst in range(total):
                if rng.random() < 0.45 and not (g.labels[src] is None and g.labels[dst] is None):
                    g.add_arc(src, dst, math.log(rng.uniform(0.1, 1.0)))
        g.start = {s: math.log(rng.uniform(0.2, 1.0))
                   for s in range(total) if rng.random() < 0.5}
        g.final = {s: math.log(rng.uniform(0.2, 1.0))
                   for s in range(total) if rng.random() < 0.5}
        if not g.start or not g.final:
            continue
        count = 0
        for _ in enumerate_paths(g, T):
            count += 1
            if count > max_paths:
                break
        if 1 <= count <= max_paths:
            return g


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def tiny_chunks(num_utts=10, seed=0, noise=0.1, chunk_frames=140):
    """Planted-phone utterances for the tiny preset (8 bands, 8 states), chunked."""
    from mstrenet.features import synth_features
    from mstrenet.trainer import make_chunks, subsample_labels

    rng = np.random.default_rng(seed)
    chunks = []
    for u in range(num_utts):
        spec = [(int(rng.integers(0, 8)), int(rng.integers(2, 5)) * 3) for _ in range(6)]
        feats, labels = synth_features(spec, bands=8, noise_level=noise, seed=seed * 100 + u)
        chunks += make_chunks(feats, subsample_labels(labels), chunk_frames,
                              utterance_id=f"u{u}")
    return chunks


DECODE_PHONES = ("AA1", "B", "IY1", "K", "S", "T")


def decode_instance(rng):
    """Random vocabulary of at most four words, bigram LM and loglikes with T <= 8."""
    from mstrenet.lexicon import Lexicon, state_of
    from mstrenet.lm import train_ngram

    T = int(rng.integers(3, 9))
    names = ["ALPHA", "BRAVO", "CHARLIE", "DELTA"][:int(rng.integers(2, 5))]
    entries = {}
    for i, w in enumerate(names):
        short_ok = i == 0 and T <= 6
        prons = []
        for _ in range(int(rng.integers(1, 3))):
            n = int(rng.integers(1 if short_ok else 2, 4))
            prons.append(tuple(DECODE_PHONES[j] for j in rng.integers(0, len(DECODE_PHONES), n)))
        entries[w] = prons
    lex = Lexicon(entries)
    corpus = [[names[j] for j in rng.integers(0, len(names), int(rng.integers(1, 4)))]
              for _ in range(5)]
    lm = train_ngram(corpus, order=2, k=0.5)
    loglikes = np.full((T, 42), -50.0)
    for p in DECODE_PHONES:
        loglikes[:, state_of(p)] = rng.normal(scale=2.0, size=T)
    prons_by_word = {w: [tuple(state_of(p) for p in pron) for pron in lex.pronunciations(w)]
                     for w in names}
    return loglikes, lex, lm, prons_by_word


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, ok: bool, detail: str = "") -> None:
    """Print and keep one PASS/FAIL line per acceptance criterion."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}"
    if detail:
        line += f" ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
