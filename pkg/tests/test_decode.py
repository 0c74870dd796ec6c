import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mstrenet.arch import build_model
from mstrenet.decode import (RtfReport, best_path_decoder, compute_wer, corpus_wer, measure_rtf,
                             viterbi_decode, write_ctm)
from mstrenet.features import FeatureMatrix
from mstrenet.lexicon import Lexicon, parse_lexicon, state_of
from mstrenet.lm import lm_logprob, train_ngram
from conftest import decode_instance
from oracles import brute_force_decode, edit_distance


@pytest.mark.parametrize("seed", range(12))
def test_exact_search_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    ll, lex, lm, prons = decode_instance(rng)
    scale, wip = float(rng.uniform(0, 3)), float(rng.uniform(-2, 1))
    result = viterbi_decode(ll, lex, lm, scale, wip, beam=math.inf)
    best, ties = brute_force_decode(ll, prons, lambda ws: lm_logprob(lm, ws), scale, wip)
    assert result.score == pytest.approx(best, abs=1e-9)
    assert result.words in ties


def test_single_word_no_lm_repeats_per_segment():
    lex = parse_lexicon("LA  L AA1\n")
    lm = train_ngram([["LA"]], 2, 0.1)
    ll = np.full((6, 42), -20.0)
    for t, p in enumerate(["L", "AA1", "L", "AA1", "L", "AA1"]):
        ll[t, state_of(p)] = 0.0
    assert viterbi_decode(ll, lex, lm, lm_scale=0.0).words == ["LA"] * 3


def test_lm_breaks_acoustic_tie():
    lex = Lexicon({"SEA": [("S", "IY1")], "SEE": [("S", "IY1")]})
    lm = train_ngram([["SEE"], ["SEE"], ["SEA"]], 2, 0.1)
    ll = np.zeros((4, 42))
    for scale in (0.01, 1.0, 10.0):
        assert viterbi_decode(ll, lex, lm, lm_scale=scale).words == ["SEE"]


def test_silence_words_are_free_and_dropped():
    lex = parse_lexicon("HI  HH AY1\n")
    lm = train_ngram([["HI"]], 2, 0.1)
    ll = np.full((6, 42), -20.0)
    for t, p in enumerate(["MUS", "MUS", "HH", "AY1", "MUS", "MUS"]):
        ll[t, state_of(p)] = 0.0
    out = viterbi_decode(ll, lex, lm, silence_words=("<music>",))
    assert out.words == ["HI"]


def test_beam_pruning_keeps_easy_answer():
    rng = np.random.default_rng(3)
    ll, lex, lm, _ = decode_instance(rng)
    exact = viterbi_decode(ll, lex, lm, 1.0, beam=math.inf)
    assert viterbi_decode(ll, lex, lm, 1.0, beam=1e6).words == exact.words


def test_decode_errors():
    lm = train_ngram([["A"]], 2, 0.1)
    with pytest.raises(ValueError, match="empty lexicon"):
        viterbi_decode(np.zeros((3, 42)), Lexicon(), lm)
    with pytest.raises(ValueError):
        viterbi_decode(np.zeros((3, 42)), parse_lexicon("A  AH0\n"), lm, lm_scale=-1)


def test_wer_examples():
    assert compute_wer(["A", "B"], ["A", "B"]).wer == 0.0
    r = compute_wer(["A", "B", "C"], ["A", "X", "C"])
    assert (r.substitutions, r.insertions, r.deletions) == (1, 0, 0)
    assert r.wer == pytest.approx(1 / 3)
    r = compute_wer(list("ABCDE"), [])
    assert r.deletions == 5 and r.wer == 1.0
    assert compute_wer(["<music>", "A", "<music>"], ["A"]).wer == 0.0
    with pytest.raises(ValueError, match="empty reference"):
        compute_wer([], ["A"])
    assert "%WER 33.33 [ 1 / 3" in compute_wer(["A", "B", "C"], ["A", "C"]).summary()


@given(st.lists(st.sampled_from("ABCD"), min_size=1, max_size=10),
       st.lists(st.sampled_from("ABCDE"), max_size=10))
@settings(max_examples=200, deadline=None)
def test_wer_matches_recursion(ref, hyp):
    r = compute_wer(ref, hyp)
    assert r.errors == edit_distance(ref, hyp)
    assert len(hyp) == len(ref) - r.deletions + r.insertions


def test_corpus_wer_sums():
    total = corpus_wer([(["A", "B"], ["A"]), (["C"], ["D", "E"])])
    assert (total.errors, total.ref_word_count) == (3, 3)


def test_rtf_definition():
    report = RtfReport(30.0, [3.0])
    assert report.rtfs == [0.1] and report.mean_rtf == pytest.approx(0.1)


def test_measure_rtf_with_fake_clock():
    ticks = iter(np.arange(0, 100, 1.5))
    feats = FeatureMatrix(np.zeros((300, 8)))
    report = measure_rtf(build_model("tiny"), [feats], iterations=5, clock=lambda: next(ticks),
                         pin_cpu=False)
    assert report.iterations == 5 and report.audio_seconds == pytest.approx(3.0)
    assert report.rtfs == pytest.approx([0.5] * 5)
    with pytest.raises(ValueError):
        measure_rtf(build_model("tiny"), [], iterations=5)


def test_measure_rtf_real_clock():
    report = measure_rtf(build_model("tiny"), [FeatureMatrix(np.zeros((200, 8)))], iterations=2)
    assert report.iterations == 2 and all(r > 0 for r in report.rtfs)


def test_best_path_decoder():
    post = np.eye(3)[[0, 0, 2, 2, 1]]
    assert best_path_decoder(post) == [0, 2, 1]


def test_ctm(tmp_path):
    write_ctm(tmp_path / "a.ctm", {"u": [("HI", 0, 3), ("YOU", 4, 4)]}, 0.03)
    assert (tmp_path / "a.ctm").read_text() == "u 1 0.000 0.120 HI\nu 1 0.120 0.030 YOU\n"
