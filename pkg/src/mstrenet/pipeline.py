"""Glue between the modules: training from alignments, realignment with a
trained model, decoding and the end-to-end demo run."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .arch import MstreModel, build_model, model_forward, preset_config, save_checkpoint
from .corpus import (DecoderSettings, RunConfig, demo_lexicon, equal_alignment, file_sha256,
                     make_demo_corpus)
from .decode import compute_wer, corpus_wer, viterbi_decode, write_ctm
from .graph import build_align_graph, forced_align
from .lexicon import Lexicon, expand_vowel_variants, serialize_lexicon
from .lm import NgramModel, train_ngram, write_lm
from .text import PSEUDO_WORDS, strip_tags, write_transcripts
from .trainer import TrainConfig, make_chunks, state_priors, train


def loglikes_from_posteriors(posteriors: np.ndarray, priors: np.ndarray) -> np.ndarray:
    """Hybrid pseudo log-likelihoods: log posterior minus log prior."""
    return np.log(np.maximum(posteriors, 1e-30)) - np.log(priors)


def num_subsampled(num_frames: int, factor: int) -> int:
    return -(-num_frames // factor)


def align_utterance(model: MstreModel, features, transcript, lex: Lexicon,
                    priors: np.ndarray, kappa: float = 1.0):
    loglikes = loglikes_from_posteriors(model_forward(model, features), priors)
    return forced_align(build_align_graph(transcript, lex), loglikes, kappa)


def train_on_alignments(model: MstreModel, items, cfg: TrainConfig, log=None):
    """``items`` is an iterable of ``(utt_id, features, subsampled_labels)``."""
    chunks = []
    for utt, feats, labels in items:
        chunks += make_chunks(feats, labels, cfg.chunk_frames, model.config.subsample_factor, utt)
    return train(model, chunks, cfg, log=log)


def decode_utterance(model: MstreModel, features, lex: Lexicon, lm: NgramModel,
                     priors: np.ndarray, settings: DecoderSettings, vocabulary=None):
    loglikes = loglikes_from_posteriors(model_forward(model, features), priors)
    beam = settings.beam if settings.beam > 0 else math.inf
    return viterbi_decode(loglikes, lex, lm, settings.lm_scale, settings.word_insertion_penalty,
                          beam, vocabulary=vocabulary, silence_words=PSEUDO_WORDS).words


def write_run_record(run_dir, command: str, seed, manifest=None, **extra) -> None:
    """``run.json``: what, with which seed, on which exact manifest."""
    record = {"command": command, "seed": seed,
              "manifest": str(manifest) if manifest else None,
              "manifest_sha256": file_sha256(manifest) if manifest else None, **extra}
    (Path(run_dir) / "run.json").write_text(json.dumps(record, sort_keys=True, indent=1) + "\n")


def demo_run_config(seed: int) -> RunConfig:
    return RunConfig(
        model=preset_config("tiny", input_bands=16, num_states=42),
        train=TrainConfig(epochs=12, minibatch_size=1, lr_start=0.3, lr_end=0.03, seed=seed),
        decoder=DecoderSettings(lm_scale=2.0, word_insertion_penalty=0.0, beam=30.0),
    )


def run_e2e_demo(run_dir, seed: int = 7, n_train: int = 18, n_test: int = 6, log=print) -> dict:
    """Synthesize a corpus, flat-start train, realign, retrain, decode and score.

    Everything written under ``run_dir`` is a function of ``seed`` alone.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg = demo_run_config(seed)
    (run_dir / "config.json").write_text(cfg.to_json())
    corpus = make_demo_corpus(n_train + n_test, seed, bands=cfg.model.input_bands)
    train_set, test_set = corpus[:n_train], corpus[n_train:]
    lex = expand_vowel_variants(demo_lexicon())
    (run_dir / "lexicon.txt").write_text(serialize_lexicon(lex))
    with open(run_dir / "manifest.jsonl", "w") as f:
        for u in corpus:
            f.write(json.dumps({"utterance_id": u.utterance_id, "raw_lyrics": u.raw_lyrics,
                                "domain": u.domain, "split": "train" if u in train_set else "test",
                                "audio_or_feature_path": "<synthetic>"}, sort_keys=True) + "\n")
    write_run_record(run_dir, "e2e-demo", seed, run_dir / "manifest.jsonl")

    factor = cfg.model.subsample_factor
    labels = {u.utterance_id: equal_alignment(u.transcript, lex, num_subsampled(u.features.num_frames, factor))
              for u in train_set}
    model = build_model(cfg.model, seed=seed)
    train_log = open(run_dir / "train.log", "w")
    log_line = lambda e, lr, loss: train_log.write(f"{e}\t{lr:.6g}\t{loss:.6f}\n")  # noqa: E731
    alignments = {}
    for _ in range(2):
        items = [(u.utterance_id, u.features, labels[u.utterance_id]) for u in train_set]
        model = train_on_alignments(model, items, cfg.train, log=log_line).model
        priors = state_priors(labels.values(), cfg.model.num_states)
        for u in train_set:
            ali = align_utterance(model, u.features, u.transcript, lex, priors)
            labels[u.utterance_id] = ali.labels
            alignments[u.utterance_id] = ali.words
    train_log.close()
    save_checkpoint(run_dir / "model.mstr", model)
    frame_shift = corpus[0].features.frame_hop_ms * factor / 1000.0
    write_ctm(run_dir / "align.ctm", alignments, frame_shift)
    ali_acc = float(np.mean(np.concatenate([labels[u.utterance_id] == u.labels for u in train_set])))

    lm = train_ngram([strip_tags(u.transcript) for u in train_set], cfg.decoder.lm_order,
                     cfg.decoder.lm_k)
    write_lm(run_dir / "lm.txt", lm)
    refs, hyps = {}, {}
    for u in test_set:
        refs[u.utterance_id] = strip_tags(u.transcript)
        hyps[u.utterance_id] = decode_utterance(model, u.features, lex, lm, priors, cfg.decoder)
    write_transcripts(run_dir / "ref.txt", refs)
    write_transcripts(run_dir / "hyp.txt", hyps)
    report = format_score_table(refs, hyps)
    (run_dir / "wer.txt").write_text(report)
    total = corpus_wer((refs[k], hyps[k]) for k in refs)
    summary = {"wer": total.wer, "alignment_accuracy": ali_acc, "report": report}
    log(report, end="")
    log(f"training alignment frame accuracy vs planted truth: {100 * ali_acc:.2f}%")
    return summary


def format_score_table(refs: dict, hyps: dict) -> str:
    lines = [f"{'utterance':<16}{'ref':>5}{'sub':>5}{'ins':>5}{'del':>5}{'wer%':>9}"]
    total = None
    for utt, ref in refs.items():
        r = compute_wer(ref, hyps.get(utt, []))
        total = r if total is None else total + r
        lines.append(f"{utt:<16}{r.ref_word_count:>5}{r.substitutions:>5}{r.insertions:>5}"
                     f"{r.deletions:>5}{100 * r.wer:>9.2f}")
    lines.append(f"corpus WER {100 * total.wer:.2f}%  S={total.substitutions} "
                 f"I={total.insertions} D={total.deletions} N={total.ref_word_count}")
    lines.append(total.summary())
    return "\n".join(lines) + "\n"
