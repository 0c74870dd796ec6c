import math

import numpy as np
import pytest

from mstrenet.features import gaussian_loglikes, synth_features
from mstrenet.graph import (HmmGraph, build_align_graph, collapse_repeats, forced_align,
                            forward_backward, linear_graph, path_score, phone_bigram_graph,
                            viterbi_path)
from mstrenet.lexicon import MUS, SIL, parse_lexicon, state_of

LEX = parse_lexicon("CAT  K AE1 T\nA  AH0\nA(2)  EY1\nDOG  D AO1 G\n")


def _chain_labels(g):
    cg = g.compiled()
    return [int(x) for x in cg.labels]


def test_music_tagged_chain():
    g = build_align_graph(["<music>", "CAT", "<music>"], LEX)
    assert _chain_labels(g) == [state_of(p) for p in (MUS, "K", "AE1", "T", MUS)]
    cg = g.compiled()
    loops = {int(cg.in_src[a]) for d in range(cg.num_states)
             for a in range(cg.in_ptr[d], cg.in_ptr[d + 1]) if cg.in_src[a] == d}
    assert loops == set(range(cg.num_states))
    # exactly one left-to-right route
    assert path_score(g, list(cg.origin), np.zeros((5, 42))) > -math.inf


def test_alternative_pronunciations_branch():
    g = build_align_graph(["A"], LEX)
    cg = g.compiled()
    assert sorted(_chain_labels(g)) == sorted([state_of("AH0"), state_of("EY1")])
    assert np.all(np.isfinite(cg.start_w)) and np.all(np.isfinite(cg.final_w))
    assert np.allclose(np.exp(cg.start_w), 0.5)


def test_tags_only_graph():
    assert _chain_labels(build_align_graph(["<silence>", "<silence>"], LEX)) == [state_of(SIL)] * 2


def test_missing_token_named():
    with pytest.raises(KeyError, match="HORSE"):
        build_align_graph(["CAT", "HORSE"], LEX)


def test_optional_silence_between_words_uses_tag_phone():
    g = build_align_graph(["<music>", "CAT", "DOG", "<music>"], LEX)
    labels = _chain_labels(g)
    assert labels.count(state_of(MUS)) == 3
    phones = [MUS, "K", "AE1", "T", MUS, "D", "AO1", "G", MUS]
    ll = np.full((len(phones), 42), -10.0)
    for t, p in enumerate(phones):
        ll[t, state_of(p)] = 0.0
    assert [int(x) for x in forced_align(g, ll).labels] == [state_of(p) for p in phones]
    ll = np.delete(ll, 4, axis=0)
    assert state_of(MUS) not in forced_align(g, ll).labels[1:-1]


def test_forward_backward_single_state():
    g = HmmGraph()
    s = g.add_state(0)
    g.add_arc(s, s, 0.0)
    g.start, g.final = {s: 0.0}, {s: 0.0}
    ll = np.array([[0.3], [-1.2], [2.0]])
    log_z, occ = forward_backward(g, ll)
    assert log_z == pytest.approx(0.3 - 1.2 + 2.0)
    np.testing.assert_allclose(occ, 1.0)


def test_forward_backward_parallel_paths():
    g = HmmGraph()
    a, b = g.add_state(0), g.add_state(1)
    for s in (a, b):
        g.add_arc(s, s, 0.0)
        g.start[s] = 0.0
        g.final[s] = 0.0
    _, occ = forward_backward(g, np.zeros((4, 2)))
    np.testing.assert_allclose(occ, 0.5)


def test_no_path_errors():
    g = linear_graph([0, 1, 2])
    with pytest.raises(ValueError, match="graph admits no path"):
        forward_backward(g, np.zeros((2, 3)))
    with pytest.raises(ValueError, match="alignment failed"):
        forced_align(g, np.zeros((2, 3)))


def test_forced_align_planted_boundary():
    a, b = state_of("AA1"), state_of("B")
    feats, labels = synth_features([(a, 10), (b, 10)], bands=16)
    ll = gaussian_loglikes(feats, [a, b], 42)
    ali = forced_align(linear_graph([a, b]), ll)
    assert list(ali.labels) == list(labels)
    one = forced_align(linear_graph([a]), ll)
    assert set(one.labels) == {a}


def test_forced_align_words():
    feats, labels = synth_features([(state_of(p), 3) for p in (SIL, "K", "AE1", "T", SIL)],
                                   bands=16)
    ll = gaussian_loglikes(feats, sorted(set(labels)), 42)
    ali = forced_align(build_align_graph(["<silence>", "CAT", "<silence>"], LEX), ll)
    assert ali.words == [("<silence>", 0, 2), ("CAT", 3, 11), ("<silence>", 12, 14)]
    assert ali.score == pytest.approx(path_score(build_align_graph(
        ["<silence>", "CAT", "<silence>"], LEX), ali.states, ll))


def test_viterbi_path_no_path():
    assert viterbi_path(linear_graph([0, 1]), np.zeros((1, 2))) == (-math.inf, None)


def test_collapse_and_bigram():
    assert collapse_repeats([1, 1, 2, 2, 2, 1]) == [1, 2, 1]
    g = phone_bigram_graph([[0, 0, 1], [0, 2]])
    assert math.exp(g.start[0]) == pytest.approx(1.0)
    log_z, occ = forward_backward(g, np.zeros((3, 3)))
    np.testing.assert_allclose(occ.sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        phone_bigram_graph([[]])
