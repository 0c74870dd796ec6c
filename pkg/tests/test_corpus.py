import json

import numpy as np
import pytest

from mstrenet.arch import preset_config
from mstrenet.corpus import (ConfigError, DataError, DecoderSettings, RunConfig, demo_lexicon,
                             equal_alignment, load_manifest, make_demo_corpus)
from mstrenet.lexicon import state_of
from mstrenet.trainer import TrainConfig


def _write_manifest(tmp_path, records):
    path = tmp_path / "m.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


def test_manifest_loads_and_resolves(tmp_path):
    (tmp_path / "a.fbk").write_bytes(b"")
    path = _write_manifest(tmp_path, [{"utterance_id": "a", "audio_or_feature_path": "a.fbk",
                                       "raw_lyrics": "Hello 2 you", "domain": "polyphonic"}])
    (rec,) = load_manifest(path)
    assert rec.path == str(tmp_path / "a.fbk")
    assert rec.tagged_transcript() == ["<music>", "HELLO", "TWO", "YOU", "<music>"]


@pytest.mark.parametrize("records, message", [
    ([{"utterance_id": "a", "audio_or_feature_path": "a.fbk", "domain": "monophonic"}] * 2,
     "duplicate"),
    ([{"utterance_id": "a", "audio_or_feature_path": "a.fbk", "domain": "choral"}], "domain"),
    ([{"utterance_id": "a", "audio_or_feature_path": "zz.fbk", "domain": "monophonic"}],
     "no such file"),
    ([{"utterance_id": "a"}], "bad manifest record"),
])
def test_manifest_errors(tmp_path, records, message):
    (tmp_path / "a.fbk").write_bytes(b"")
    with pytest.raises(DataError, match=message):
        load_manifest(_write_manifest(tmp_path, records))


def test_run_config_roundtrip():
    cfg = RunConfig(preset_config("tiny"), TrainConfig(epochs=3), DecoderSettings(beam=7.5))
    text = cfg.to_json()
    again = RunConfig.from_json(text)
    assert again == cfg and again.to_json() == text
    assert RunConfig.from_json(RunConfig().to_json()) == RunConfig()


@pytest.mark.parametrize("text", ["{", "{}", '{"model": {}, "train": {}, "decoder": {}}'])
def test_run_config_errors(text):
    with pytest.raises(ConfigError):
        RunConfig.from_json(text)


def test_equal_alignment():
    lex = demo_lexicon()
    labels = equal_alignment(["<silence>", "LOVE", "<silence>"], lex, 10)
    assert len(labels) == 10
    expected = [state_of(p) for p in ("SIL", "L", "AH1", "V", "SIL")]
    assert [int(x) for x in labels[::2]] == expected
    with pytest.raises(DataError):
        equal_alignment(["LOVE"], lex, 2)


def test_demo_corpus_deterministic():
    a, b = make_demo_corpus(4, 5), make_demo_corpus(4, 5)
    for x, y in zip(a, b):
        assert x.transcript == y.transcript
        np.testing.assert_array_equal(x.features.frames, y.features.frames)
        assert len(x.labels) == -(-x.features.num_frames // 3)
    assert {u.domain for u in a} == {"monophonic", "polyphonic"}
