"""``mstre`` command-line entry point.

Exit codes: 0 ok, 2 usage, 3 config, 4 data, 5 numeric failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, _core
from .arch import (PRESETS, build_model, count_params, load_checkpoint, param_audit,
                   preset_config, receptive_field_ms, save_checkpoint)
from .corpus import (ConfigError, DataError, RunConfig, equal_alignment, load_features,
                     load_manifest)
from .decode import measure_rtf, write_ctm
from .features import (FeatureMatrix, extract_fbank, read_wav, speed_perturb, write_features,
                       write_features_csv)
from .lexicon import add_oov, expand_vowel_variants, parse_lexicon, serialize_lexicon
from .lm import read_lm, train_ngram, write_lm
from .pipeline import (align_utterance, decode_utterance, format_score_table, num_subsampled,
                       run_e2e_demo, train_on_alignments, write_run_record)
from .text import DOMAINS, PSEUDO_WORDS, normalize_lyrics, read_transcripts, tag_utterance, \
    write_transcripts
from .trainer import state_priors

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4, 5


class NumericError(RuntimeError):
    pass


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("MSTRE_THREADS", "1")))
    except ValueError:
        return 1


def _map_utterances(fn, items):
    """Ordered map over utterances, using up to MSTRE_THREADS workers."""
    n = _workers()
    if n == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(fn, items))


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None


def _load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return RunConfig.from_json(text)


def _load_lexicon(path):
    try:
        return parse_lexicon(_read_text(path))
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _run_dir(path) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_run(run_dir):
    run_dir = Path(run_dir)
    try:
        model = load_checkpoint(run_dir / "model.mstr")
        priors = np.loadtxt(run_dir / "priors.txt", ndmin=1)
    except OSError as exc:
        raise DataError(f"{run_dir} is not a trained run directory: {exc}") from None
    cfg = _load_config(run_dir / "config.json")
    return model, priors, cfg


# --- subcommands -----------------------------------------------------------

def cmd_normalize(args) -> int:
    """Lines are ``UTT<TAB>raw lyrics`` (or bare lyrics, numbered line-NNNNN)."""
    out, changes = {}, []
    for lineno, line in enumerate(_read_text(args.input).splitlines(), 1):
        if not line.strip():
            continue
        utt, sep, raw = line.partition("\t")
        if not sep:
            utt, raw = f"line-{lineno:05d}", line
        tokens = normalize_lyrics(raw)
        if args.domain:
            tokens = tag_utterance(tokens, args.domain)
        out[utt] = tokens
        if " ".join(tokens) != raw:
            changes.append(f"{utt}\t{raw}\t{' '.join(tokens)}\n")
    write_transcripts(args.output, out)
    sidecar = args.changes or f"{args.output}.changes"
    with open(sidecar, "w", encoding="utf-8") as f:
        f.write("# utterance\traw\tnormalized (review by hand)\n")
        f.writelines(changes)
    print(f"{len(out)} lines normalized, {len(changes)} changed; review {sidecar}")
    return EXIT_OK


def cmd_lexicon(args) -> int:
    lex = _load_lexicon(args.input)
    added = []
    if args.transcripts:
        words = sorted({w for toks in read_transcripts(args.transcripts).values() for w in toks
                        if w not in PSEUDO_WORDS})
        added = add_oov(lex, words)
    if args.expand_vowels:
        lex = expand_vowel_variants(lex)
    Path(args.output).write_text(serialize_lexicon(lex), encoding="utf-8")
    for w in added:
        print(f"OOV {w}\t{' '.join(lex.pronunciations(w)[0])}")
    print(f"{len(lex.words())} words written to {args.output}")
    return EXIT_OK


def cmd_lm(args) -> int:
    if not 1 <= args.order <= 4:
        raise ConfigError("--order must be between 1 and 4")
    corpus = [[w for w in toks if w not in PSEUDO_WORDS]
              for toks in read_transcripts(args.transcripts).values()]
    write_lm(args.output, train_ngram(corpus, args.order, args.k))
    print(f"order-{args.order} LM over {len(corpus)} sentences written to {args.output}")
    return EXIT_OK


def cmd_features(args) -> int:
    audio = read_wav(args.input)
    if args.speed != 1.0:
        audio = speed_perturb(audio, args.speed)
    feats = extract_fbank(audio, bands=args.bands)
    if args.csv:
        write_features_csv(args.output, feats)
    else:
        write_features(args.output, feats)
    print(f"{feats.num_frames} frames x {feats.band_count} bands written to {args.output}")
    return EXIT_OK


def cmd_rf(args) -> int:
    rf = receptive_field_ms(args.l, args.tau, args.layers)
    print(int(rf) if float(rf).is_integer() else rf)
    return EXIT_OK


def cmd_params(args) -> int:
    cfg = preset_config(args.preset)
    audit = param_audit(cfg)
    width = max(len(name) for name, _ in audit)
    for name, n in audit:
        print(f"{name:<{width}}  {n:>10,}")
    total = sum(n for _, n in audit)
    print(f"{'total':<{width}}  {total:>10,}")
    if args.verify and count_params(build_model(cfg)) != total:
        raise NumericError("audit disagrees with the instantiated model")
    return EXIT_OK


def _manifest_features(records, bands):
    return _map_utterances(lambda r: load_features(r, bands), records)


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    overrides = {"seed": args.seed}
    if args.epochs is not None:
        overrides["epochs"] = args.epochs
    try:
        cfg.train = replace(cfg.train, **overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    records = load_manifest(args.manifest)
    lex = _load_lexicon(args.lexicon)
    feats = _manifest_features(records, cfg.model.input_bands)
    run = _run_dir(args.out)
    (run / "config.json").write_text(cfg.to_json())
    write_run_record(run, "train", args.seed, args.manifest, passes=args.passes)
    factor = cfg.model.subsample_factor
    labels = {}
    try:
        for r, f in zip(records, feats):
            labels[r.utterance_id] = equal_alignment(r.tagged_transcript(), lex,
                                                     num_subsampled(f.num_frames, factor))
    except KeyError as exc:
        raise DataError(f"{exc.args[0]}; run `mstre lexicon --transcripts` first") from None
    model = build_model(cfg.model, seed=args.seed)
    with open(run / "train.log", "w") as log:
        def log_line(epoch, lr, loss):
            if not math.isfinite(loss):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            log.write(f"{epoch}\t{lr:.6g}\t{loss:.6f}\n")
            print(f"epoch {epoch}\tlr {lr:.3g}\tloss {loss:.4f}")

        for p in range(args.passes):
            items = [(r.utterance_id, f, labels[r.utterance_id]) for r, f in zip(records, feats)]
            model = train_on_alignments(model, items, cfg.train, log=log_line).model
            priors = state_priors(labels.values(), cfg.model.num_states)
            if p + 1 < args.passes:
                alis = _map_utterances(
                    lambda rf: align_utterance(model, rf[1], rf[0].tagged_transcript(), lex, priors),
                    list(zip(records, feats)))
                labels = {r.utterance_id: a.labels for r, a in zip(records, alis)}
    save_checkpoint(run / "model.mstr", model)
    np.savetxt(run / "priors.txt", priors)
    print(f"model written to {run / 'model.mstr'}")
    return EXIT_OK


def cmd_align(args) -> int:
    model, priors, cfg = _load_run(args.run_dir)
    records = load_manifest(args.manifest)
    lex = _load_lexicon(args.lexicon)
    feats = _manifest_features(records, cfg.model.input_bands)

    def one(rf):
        r, f = rf
        try:
            return align_utterance(model, f, r.tagged_transcript(), lex, priors)
        except ValueError as exc:
            raise NumericError(f"{r.utterance_id}: {exc}") from None

    alis = _map_utterances(one, list(zip(records, feats)))
    out = Path(args.output or Path(args.run_dir) / "align.ctm")
    shift = feats[0].frame_hop_ms * cfg.model.subsample_factor / 1000.0 if feats else 0.03
    write_ctm(out, {r.utterance_id: a.words for r, a in zip(records, alis)}, shift)
    print(f"{len(alis)} utterances aligned, CTM written to {out}")
    return EXIT_OK


def cmd_decode(args) -> int:
    model, priors, cfg = _load_run(args.run_dir)
    settings = cfg.decoder
    for name in ("lm_scale", "word_insertion_penalty", "beam"):
        if getattr(args, name) is not None:
            setattr(settings, name, getattr(args, name))
    records = load_manifest(args.manifest)
    lex = _load_lexicon(args.lexicon)
    try:
        lm = read_lm(args.lm)
    except OSError as exc:
        raise DataError(f"cannot read {args.lm}: {exc.strerror}") from None
    feats = _manifest_features(records, cfg.model.input_bands)

    def one(rf):
        r, f = rf
        try:
            return decode_utterance(model, f, lex, lm, priors, settings)
        except ValueError as exc:
            raise NumericError(f"{r.utterance_id}: {exc}") from None

    hyps = dict(zip((r.utterance_id for r in records),
                    _map_utterances(one, list(zip(records, feats)))))
    out = Path(args.output or Path(args.run_dir) / "hyp.txt")
    write_transcripts(out, hyps)
    print(f"{len(hyps)} utterances decoded, hypotheses written to {out}")
    return EXIT_OK


def cmd_score(args) -> int:
    refs = read_transcripts(args.ref)
    hyps = read_transcripts(args.hyp)
    missing = [u for u in hyps if u not in refs]
    if missing:
        raise DataError(f"hypotheses without reference: {', '.join(missing[:5])}")
    report = format_score_table(refs, hyps)
    print(report, end="")
    if args.output:
        Path(args.output).write_text(report)
    return EXIT_OK


def cmd_bench_rtf(args) -> int:
    os.environ["MSTRE_THREADS"] = "1"
    rng = np.random.default_rng(args.seed)
    means = {}
    lines = [f"backend {_core.BACKEND}; {args.iterations} iterations; "
             f"{args.seconds:g} s of audio per pass; single thread"]
    for name in args.presets:
        cfg = preset_config(name)
        model = build_model(cfg, seed=args.seed)
        frames = int(round(args.seconds * 100))
        feats = FeatureMatrix(rng.standard_normal((frames, cfg.input_bands)))
        report = measure_rtf(model, [feats], iterations=args.iterations)
        means[name] = report.mean_rtf
        rtfs = " ".join(f"{r:.4f}" for r in report.rtfs)
        lines.append(f"{name:<12} params {count_params(model):>10,}  mean RTF {report.mean_rtf:.4f}"
                     f"  [{rtfs}]")
    if "M_multi_9b" in means and "M_single_9" in means:
        lines.append(f"M_multi_9b / M_single_9 wall-clock ratio: "
                     f"{means['M_multi_9b'] / means['M_single_9']:.3f}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if args.out:
        run = _run_dir(args.out)
        (run / "rtf.txt").write_text(text)
        write_run_record(run, "bench-rtf", args.seed, presets=list(args.presets))
    return EXIT_OK


def cmd_e2e_demo(args) -> int:
    summary = run_e2e_demo(args.out, seed=args.seed)
    print(f"run directory: {args.out}")
    if not math.isfinite(summary["wer"]):
        raise NumericError("non-finite WER")
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def _seed(p):
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mstre", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("normalize", help="normalize raw lyrics into transcripts")
    p.add_argument("--input", required=True, help="raw lines, optionally UTT<TAB>text")
    p.add_argument("--output", required=True, help="transcript file to write")
    p.add_argument("--changes", help="change-log sidecar (default OUTPUT.changes)")
    p.add_argument("--domain", choices=DOMAINS, help="add the domain's boundary tags")
    p.set_defaults(fn=cmd_normalize)

    p = sub.add_parser("lexicon", help="expand a pronunciation lexicon")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--expand-vowels", action="store_true", help="add vowel-doubled variants")
    p.add_argument("--transcripts", help="add rule-based pronunciations for OOV words here")
    p.set_defaults(fn=cmd_lexicon)

    p = sub.add_parser("lm", help="train an add-k n-gram LM on transcripts")
    p.add_argument("--transcripts", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--k", type=float, default=0.1)
    p.set_defaults(fn=cmd_lm)

    p = sub.add_parser("features", help="log-mel filterbank features from a WAV file")
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--bands", type=int, default=40)
    p.add_argument("--speed", type=float, default=1.0, help="speed perturbation factor")
    p.add_argument("--csv", action="store_true", help="write CSV with a header row")
    p.set_defaults(fn=cmd_features)

    p = sub.add_parser("rf", help="receptive field in ms of a dilated stream")
    p.add_argument("--l", type=float, required=True, help="frame length in ms")
    p.add_argument("--tau", type=int, required=True, help="dilation")
    p.add_argument("--layers", type=int, required=True)
    p.set_defaults(fn=cmd_rf)

    p = sub.add_parser("params", help="parameter-count audit of a preset")
    p.add_argument("--preset", choices=sorted(PRESETS), default="M_multi_9b")
    p.add_argument("--verify", action="store_true", help="cross-check against a built model")
    p.set_defaults(fn=cmd_params)

    p = sub.add_parser("train", help="flat-start CE training from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--config", help="run config JSON (default: built-in)")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--epochs", type=int, help="override the configured epochs")
    p.add_argument("--passes", type=int, default=2, help="train/realign passes")
    _seed(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("align", help="forced alignment to CTM with a trained run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--output", help="CTM path (default RUN_DIR/align.ctm)")
    p.set_defaults(fn=cmd_align)

    p = sub.add_parser("decode", help="decode a manifest with a trained run")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--lexicon", required=True)
    p.add_argument("--lm", required=True)
    p.add_argument("--output", help="hypothesis transcripts (default RUN_DIR/hyp.txt)")
    p.add_argument("--lm-scale", dest="lm_scale", type=float)
    p.add_argument("--word-insertion-penalty", dest="word_insertion_penalty", type=float)
    p.add_argument("--beam", type=float, help="0 for an exhaustive search")
    p.set_defaults(fn=cmd_decode)

    p = sub.add_parser("score", help="WER of hypotheses against references")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--output", help="also write the report here")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("bench-rtf", help="single-thread real-time factor per preset")
    p.add_argument("--presets", nargs="+", choices=sorted(PRESETS),
                   default=["M_single_9", "M_multi_9a", "M_multi_9b", "M_multi_9c", "M_multi_9d"])
    p.add_argument("--iterations", type=int, default=5)
    p.add_argument("--seconds", type=float, default=2.0, help="audio per pass")
    p.add_argument("--out", help="run directory for rtf.txt")
    _seed(p)
    p.set_defaults(fn=cmd_bench_rtf)

    p = sub.add_parser("e2e-demo", help="synthetic corpus: train, align, decode, score")
    p.add_argument("--out", default="e2e-run", help="run directory (default ./e2e-run)")
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(fn=cmd_e2e_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, exc
    except (NumericError, FloatingPointError) as exc:
        code, msg = EXIT_NUMERIC, exc
    except (DataError, OSError, KeyError, ValueError) as exc:
        code, msg = EXIT_DATA, exc
    print(f"mstre {args.command}: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
