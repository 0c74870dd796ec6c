import pytest
from hypothesis import given, settings, strategies as st

from mstrenet.text import (is_valid_transcript, normalize_lyrics, number_to_words,
                           read_transcripts, strip_tags, tag_utterance, write_transcripts,
                           domain_of)


@pytest.mark.parametrize("raw, expected", [
    ("don't Stop!!", ["DON'T", "STOP"]),
    ("4 ever", ["FOUR", "EVER"]),
    ("", []),
    ("yeahhhh", ["YEAHH"]),
    ("can- not", ["CANNOT"]),
    ("to-ge-ther", ["TOGETHER"]),
    ("better", ["BETTER"]),
    ("Café déjà vu", ["CAFE", "DEJA", "VU"]),
    ("401 ways", ["FOUR", "HUNDRED", "ONE", "WAYS"]),
    ("'' ' hey", ["HEY"]),
])
def test_normalize_examples(raw, expected):
    assert normalize_lyrics(raw) == expected


@pytest.mark.parametrize("n, words", [
    (0, "ZERO"), (13, "THIRTEEN"), (40, "FORTY"), (401, "FOUR HUNDRED ONE"),
    (1000, "ONE THOUSAND"), (999999, "NINE HUNDRED NINETY NINE THOUSAND NINE HUNDRED NINETY NINE"),
    (20017, "TWENTY THOUSAND SEVENTEEN"),
])
def test_number_words(n, words):
    assert number_to_words(n) == words.split()


def test_number_out_of_range():
    with pytest.raises(ValueError):
        number_to_words(1_000_000)


@given(st.text(max_size=60))
@settings(max_examples=300, deadline=None)
def test_normalize_idempotent_and_clean(raw):
    once = normalize_lyrics(raw)
    assert normalize_lyrics(" ".join(once)) == once
    assert is_valid_transcript(once) or not once


@pytest.mark.parametrize("domain, tag", [("monophonic", "<silence>"), ("polyphonic", "<music>")])
def test_tagging_shapes(domain, tag):
    assert tag_utterance(["W1", "W2"], domain) == [tag, "W1", "W2", tag]
    assert tag_utterance([], domain) == [tag, tag]
    tagged = tag_utterance(["WORD"], domain)
    assert domain_of(tagged) == domain
    assert strip_tags(tagged) == ["WORD"]
    assert is_valid_transcript(tagged)


def test_double_tagging_and_bad_domain():
    with pytest.raises(ValueError, match="double tagging"):
        tag_utterance(["<music>", "A"], "polyphonic")
    with pytest.raises(ValueError):
        tag_utterance(["A"], "karaoke")


def test_transcript_validity():
    assert not is_valid_transcript(["<music>", "A", "<silence>"])
    assert not is_valid_transcript(["A", "<music>", "B"])
    assert not is_valid_transcript(["lower"])
    assert domain_of(["A"]) is None


def test_transcript_file_roundtrip(tmp_path):
    data = {"u1": ["<music>", "HELLO", "<music>"], "u2": []}
    write_transcripts(tmp_path / "t.txt", data)
    assert (tmp_path / "t.txt").read_text() == "u1\t<music> HELLO <music>\nu2\t\n"
    assert read_transcripts(tmp_path / "t.txt") == data
    (tmp_path / "bad.txt").write_text("no tab here\n")
    with pytest.raises(ValueError, match="bad.txt:1"):
        read_transcripts(tmp_path / "bad.txt")
