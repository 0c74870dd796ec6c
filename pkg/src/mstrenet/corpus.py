"""Manifests, run configuration, flat-start alignment and the synthetic
demo corpus used by ``mstre e2e-demo``."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .arch import MstreConfig, preset_config
from .features import FeatureMatrix, extract_fbank, read_features, read_wav, synth_features
from .lexicon import Lexicon, parse_lexicon, state_of
from .text import DOMAINS, normalize_lyrics, tag_utterance
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


class DataError(ValueError):
    pass


@dataclass
class ManifestRecord:
    utterance_id: str
    path: str
    raw_lyrics: str
    domain: str

    def tagged_transcript(self) -> list[str]:
        return tag_utterance(normalize_lyrics(self.raw_lyrics), self.domain)


def load_manifest(path) -> list[ManifestRecord]:
    """JSON-lines manifest; relative paths resolve against the manifest's directory."""
    path = Path(path)
    base = path.parent
    records, seen = [], set()
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            rec = ManifestRecord(d["utterance_id"], d["audio_or_feature_path"],
                                 d.get("raw_lyrics", ""), d["domain"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}:{lineno}: bad manifest record ({exc})") from None
        if rec.utterance_id in seen:
            raise DataError(f"{path}:{lineno}: duplicate utterance id {rec.utterance_id}")
        if rec.domain not in DOMAINS:
            raise DataError(f"{path}:{lineno}: domain must be one of {DOMAINS}")
        resolved = Path(rec.path) if Path(rec.path).is_absolute() else base / rec.path
        if not resolved.exists():
            raise DataError(f"{path}:{lineno}: no such file {resolved}")
        rec.path = str(resolved)
        seen.add(rec.utterance_id)
        records.append(rec)
    return records


def write_manifest(path, records) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps({"utterance_id": r.utterance_id, "audio_or_feature_path": r.path,
                                "raw_lyrics": r.raw_lyrics, "domain": r.domain},
                               sort_keys=True) + "\n")


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def load_features(record: ManifestRecord, bands: int = 40) -> FeatureMatrix:
    if record.path.lower().endswith(".wav"):
        return extract_fbank(read_wav(record.path), bands=bands)
    return read_features(record.path)


@dataclass
class DecoderSettings:
    lm_scale: float = 10.0
    word_insertion_penalty: float = 0.0
    beam: float = 16.0
    lm_order: int = 2
    lm_k: float = 0.1


@dataclass
class RunConfig:
    model: MstreConfig = field(default_factory=lambda: preset_config("M_multi_9b"))
    train: TrainConfig = field(default_factory=TrainConfig)
    decoder: DecoderSettings = field(default_factory=DecoderSettings)

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "train": self.train.to_dict(),
                "decoder": vars(self.decoder).copy()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            return cls(MstreConfig.from_dict(d["model"]), TrainConfig(**d["train"]),
                       DecoderSettings(**d["decoder"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid run config: {exc}") from None

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid run config JSON: {exc}") from None
        return cls.from_dict(d)


def equal_alignment(transcript, lex: Lexicon, num_frames: int) -> np.ndarray:
    """Flat-start labels: the first pronunciation of each token, frames shared
    out as evenly as possible over its phones."""
    phones = [state_of(p) for tok in transcript for p in lex.pronunciations(tok)[0]]
    if num_frames < len(phones):
        raise DataError(f"{num_frames} frames cannot hold {len(phones)} phones")
    bounds = np.linspace(0, num_frames, len(phones) + 1).round().astype(int)
    labels = np.empty(num_frames, dtype=np.int64)
    for ph, a, b in zip(phones, bounds[:-1], bounds[1:]):
        labels[a:b] = ph
    return labels


DEMO_LEXICON = """\
BABY  B EY1 B IY0
DANCE  D AE1 N S
HEART  HH AA1 R T
LOVE  L AH1 V
NIGHT  N AY1 T
SING  S IH1 NG
TONIGHT  T AH0 N AY1 T
YOU  Y UW1
"""

# word bigram used to draw demo sentences: each word lists its likely successors
DEMO_GRAMMAR = {
    "<s>": ["LOVE", "SING", "DANCE", "BABY"],
    "LOVE": ["YOU", "TONIGHT"],
    "SING": ["TONIGHT", "BABY"],
    "DANCE": ["TONIGHT", "BABY"],
    "BABY": ["LOVE", "SING", "DANCE"],
    "YOU": ["BABY", "TONIGHT", "</s>"],
    "TONIGHT": ["</s>"],
    "HEART": ["</s>"],
    "NIGHT": ["</s>"],
}


@dataclass
class DemoUtterance:
    utterance_id: str
    raw_lyrics: str
    domain: str
    features: FeatureMatrix
    labels: np.ndarray  # subsampled true state per frame
    transcript: list[str]  # tagged


def demo_lexicon() -> Lexicon:
    return parse_lexicon(DEMO_LEXICON)


def _demo_sentence(rng) -> list[str]:
    words, cur = [], "<s>"
    while True:
        cur = DEMO_GRAMMAR[cur][rng.integers(len(DEMO_GRAMMAR[cur]))]
        if cur == "</s>" or len(words) == 5:
            return words
        words.append(cur)


def make_demo_corpus(n: int, seed: int, bands: int = 16, noise: float = 0.4,
                     subsample: int = 3) -> list[DemoUtterance]:
    """Synthetic tagged utterances: planted phone segments with boundary
    non-vocal segments of the domain's silence-class phone."""
    rng = np.random.default_rng(seed)
    lex = demo_lexicon()
    out = []
    for i in range(n):
        words = _demo_sentence(rng)
        while not words:
            words = _demo_sentence(rng)
        domain = DOMAINS[i % 2]
        raw = " ".join(w.lower() for w in words)
        if rng.random() < 0.5:
            raw = raw.capitalize() + "!"
        tagged = tag_utterance(normalize_lyrics(raw), domain)
        spec = []
        for tok in tagged:
            pron = lex.pronunciations(tok)[0]
            for ph in pron:
                span = int(rng.integers(4, 8)) if tok.startswith("<") else int(rng.integers(2, 5))
                spec.append((state_of(ph), span * subsample))
        feats, frame_labels = synth_features(spec, bands=bands, noise_level=noise,
                                             seed=seed * 1000 + i)
        out.append(DemoUtterance(f"demo{i:03d}", raw, domain, feats,
                                 frame_labels[::subsample], tagged))
    return out

