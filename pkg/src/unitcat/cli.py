"""Command-line front end for every pipeline stage.

Exit codes: 0 success, 1 usage error, 2 input/config validation error,
3 runtime failure (missing artifacts, I/O).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .archive import ArchiveWriter, read_archive
from .audio import load_wav
from .config import validate_config
from .corpus import (
    DEFAULT_SILENCE_LABELS,
    derive_vad,
    group_alignments,
    load_alignment,
    load_manifest,
)
from .features import (
    SpecAugmentParams,
    apply_vad_filter,
    compute_fbank,
    frame_count,
    frame_sizes,
    sliding_mean_normalize,
    spec_augment,
    FRAME_SHIFT_S,
    FRAME_WIDTH_S,
)
from .kws import KeywordSpec, frr_at_far, kws_roc, load_labels, load_posteriors, utterance_confidence
from .pipeline import PipelineError, parse_stages, run_pipeline, segment_corpus
from .rng import derive_seed
from .scoring import (
    compute_det_metrics,
    format_roc,
    format_scores,
    load_trials,
    parse_scores,
    roc_svg,
    score_trials,
)
from .segmentation import list_library_speakers, load_library
from .synthesis import augment_corpus, synthesize_corpus
from .tdnn import AamParams, TdnnConfig, forward, init_tdnn, load_params, save_params, train_step
from .toydata import DEFAULT_UNITS, default_speaker_specs, make_toy_corpus

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit(2); usage errors are 1 here
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _units_arg(raw: str) -> tuple[str, ...]:
    units = tuple(raw.split())
    if not units:
        raise argparse.ArgumentTypeError("expected at least one unit")
    return units


def _snr_arg(raw: str) -> tuple[float, ...]:
    try:
        return tuple(float(p) for p in raw.split(",") if p.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad SNR list {raw!r}") from None


def build_parser() -> _Parser:
    parser = _Parser(prog="unitcat", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-toy", parents=[], help="generate a synthetic fixture corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--speakers", type=int, default=5)
    p.add_argument("--units", type=_units_arg, default=DEFAULT_UNITS)
    p.add_argument("--uncovered", default="", help="comma list of speakers missing a unit")

    p = sub.add_parser("segment", help="build per-speaker unit libraries")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ali", required=True)
    p.add_argument("--units", type=_units_arg, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--audio-root", default=None)
    p.add_argument("--silence", type=_units_arg, default=tuple(sorted(DEFAULT_SILENCE_LABELS)))

    p = sub.add_parser("synth", help="synthesize utterances from unit libraries")
    p.add_argument("--libdir", required=True)
    p.add_argument("--transcript", type=_units_arg, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--noise-dir", default=None)
    p.add_argument("--snr-list", type=_snr_arg, default=())
    p.add_argument("--rir-dir", default=None)

    p = sub.add_parser("featurize", help="extract normalized fbank features")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="archive base path (.bin/.tsv)")
    p.add_argument("--audio-root", default=None)
    p.add_argument("--ali", default=None, help="alignments for VAD filtering")
    p.add_argument("--cmn-window", type=int, default=300)
    p.add_argument("--specaug", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--freq-mask-width", type=int, default=8)
    p.add_argument("--num-freq-masks", type=int, default=1)
    p.add_argument("--time-mask-width", type=int, default=20)
    p.add_argument("--num-time-masks", type=int, default=1)

    p = sub.add_parser("train-toy", help="smoke-train the embedding network")
    p.add_argument("--features", required=True, help="feature archive base path")
    p.add_argument("--manifest", required=True, help="manifest providing speaker labels")
    p.add_argument("--out", required=True, help="parameter file to write")
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("extract", help="extract embeddings with trained parameters")
    p.add_argument("--params", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True, help="embedding archive base path")

    p = sub.add_parser("score", help="score trials against an embedding archive")
    p.add_argument("--trials", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="compute EER and minDCF from a score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--p-target", type=float, default=0.01)
    p.add_argument("--c-miss", type=float, default=1.0)
    p.add_argument("--c-fa", type=float, default=1.0)
    p.add_argument("--roc", default=None, help="write the sweep as TSV here")

    p = sub.add_parser("plot-roc", help="render a sweep TSV as SVG")
    p.add_argument("--roc", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--title", default="DET")

    p = sub.add_parser("kws-eval", help="keyword confidence ROC over posterior archives")
    p.add_argument("--pos", required=True, help="positive posterior archive base")
    p.add_argument("--neg", required=True, help="negative posterior archive base")
    p.add_argument("--labels", required=True)
    p.add_argument("--keyword", type=_units_arg, required=True)
    p.add_argument("--smooth", type=int, default=30)
    p.add_argument("--search", type=int, default=100)
    p.add_argument("--exclude-first", action="store_true")
    p.add_argument("--out", required=True)

    p = sub.add_parser("run", help="run pipeline stages from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--stages", default=None, help="comma list, or 'none' to only validate")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")

    return parser


# --- command handlers -----------------------------------------------------


def _cmd_make_toy(args) -> int:
    uncovered = tuple(s for s in args.uncovered.split(",") if s)
    specs = default_speaker_specs(args.speakers, args.units, uncovered)
    corpus = make_toy_corpus(args.out, specs, args.units)
    for spec in corpus.specs:
        counts = " ".join(f"{u}:{spec.unit_counts.get(u, 0)}" for u in corpus.units)
        print(f"{spec.speaker_id}: {counts}")
    print(f"wrote {len(corpus.records)} utterances to {corpus.root}")
    return EXIT_OK


def _cmd_segment(args) -> int:
    manifest = Path(args.manifest)
    audio_root = Path(args.audio_root) if args.audio_root else manifest.parent
    lines = segment_corpus(
        manifest,
        Path(args.ali),
        audio_root,
        args.units,
        frozenset(args.silence),
        Path(args.out),
    )
    print("\n".join(lines))
    return EXIT_OK


def _cmd_synth(args) -> int:
    libdir = Path(args.libdir)
    speakers = list_library_speakers(libdir)
    if not speakers:
        raise PipelineError(f"no unit libraries under {libdir}")
    libs = [load_library(libdir / spk) for spk in speakers]
    report = synthesize_corpus(
        libs, args.transcript, args.seed, out_dir=args.out, workers=args.workers
    )
    for spk, count in sorted(report.per_speaker_counts.items()):
        print(f"{spk}: {count} utterances")
    for spk, missing in report.skipped:
        print(f"skipped {spk}: missing {' '.join(missing)}")
    if (args.noise_dir and args.snr_list) or args.rir_dir:
        noise_paths = sorted(Path(args.noise_dir).glob("*.wav")) if args.noise_dir else None
        rir_paths = sorted(Path(args.rir_dir).glob("*.wav")) if args.rir_dir else None
        records = [s.record for s in report.utterances]
        out_records, rows = augment_corpus(
            records,
            args.out,
            Path(args.out) / "augmented",
            derive_seed(args.seed, "augment"),
            noise_paths=noise_paths,
            snr_list=list(args.snr_list) or None,
            rir_paths=rir_paths,
        )
        print(f"augmented copies: {len(out_records)}")
    return EXIT_OK


def _cmd_featurize(args) -> int:
    manifest_path = Path(args.manifest)
    audio_root = Path(args.audio_root) if args.audio_root else manifest_path.parent
    records = load_manifest(manifest_path)
    alignments = group_alignments(load_alignment(args.ali)) if args.ali else None
    sa_params = (
        SpecAugmentParams(
            args.freq_mask_width, args.num_freq_masks, args.time_mask_width, args.num_time_masks
        )
        if args.specaug
        else None
    )
    with ArchiveWriter(args.out) as writer:
        for rec in records:
            wav = load_wav(audio_root / rec.audio_path)
            if rec.channel_index is not None:
                wav = wav.channel(rec.channel_index)
            feats = compute_fbank(wav)
            if alignments is not None:
                win, shift = frame_sizes(wav.sample_rate)
                vad = derive_vad(
                    alignments.get(rec.utterance_id, []),
                    FRAME_SHIFT_S,
                    FRAME_WIDTH_S,
                    frame_count(wav.num_samples, win, shift),
                )
                feats = apply_vad_filter(feats, vad)
            feats = sliding_mean_normalize(feats, args.cmn_window)
            if sa_params is not None:
                feats = spec_augment(
                    feats, sa_params, derive_seed(args.seed, "specaug", rec.utterance_id)
                )
            writer.add(rec.utterance_id, feats)
    print(f"featurized {len(records)} utterances -> {args.out}.bin")
    return EXIT_OK


def _cmd_train_toy(args) -> int:
    archive = read_archive(args.features)
    speaker_of = {r.utterance_id: r.speaker_id for r in load_manifest(args.manifest)}
    missing = [u for u in archive if u not in speaker_of]
    if missing:
        raise PipelineError(f"feature ids missing from manifest: {', '.join(missing[:5])}")
    speakers = sorted({speaker_of[u] for u in archive})
    if len(speakers) < 2:
        raise PipelineError(f"training needs at least 2 speakers, found {len(speakers)}")
    class_index = {s: i for i, s in enumerate(speakers)}
    batch = [
        (records[0].astype(np.float64), class_index[speaker_of[utt_id]])
        for utt_id, records in archive.items()
    ]
    params = init_tdnn(TdnnConfig(num_classes=len(speakers)), derive_seed(args.seed, "init"))
    aam = AamParams()
    first = None
    loss = float("nan")
    for _ in range(args.steps):
        params, loss = train_step(params, batch, args.lr, aam)
        if first is None:
            first = loss
    save_params(args.out, params)
    print(f"classes: {len(speakers)}  steps: {args.steps}")
    print(f"first_loss: {first:.6f}  final_loss: {loss:.6f}")
    return EXIT_OK


def _cmd_extract(args) -> int:
    params = load_params(args.params)
    with ArchiveWriter(args.out) as writer:
        for utt_id, records in read_archive(args.features).items():
            for feats in records:
                embedding, _ = forward(params, feats.astype(np.float64))
                writer.add(utt_id, embedding)
    print(f"wrote embeddings -> {args.out}.bin")
    return EXIT_OK


def _cmd_score(args) -> int:
    trials = load_trials(args.trials)
    score_set = score_trials(trials, read_archive(args.embeddings))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_scores(trials, score_set), encoding="utf-8")
    print(f"scored {len(trials)} trials -> {out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    score_set = parse_scores(Path(args.scores).read_text(encoding="utf-8"))
    metrics = compute_det_metrics(score_set, args.p_target, args.c_miss, args.c_fa)
    print(f"eer_percent = {100.0 * metrics.eer:.4f}")
    print(f"eer_threshold = {metrics.eer_threshold:.6f}")
    print(f"min_dcf = {metrics.min_dcf:.6f}")
    print(f"dcf_threshold = {metrics.dcf_threshold:.6f}")
    if args.roc:
        roc_path = Path(args.roc)
        roc_path.parent.mkdir(parents=True, exist_ok=True)
        roc_path.write_text(format_roc(metrics.roc), encoding="utf-8")
    return EXIT_OK


def _cmd_plot_roc(args) -> int:
    points = []
    for lineno, line in enumerate(
        Path(args.roc).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if lineno == 1 and line.startswith("threshold"):
            continue
        if not line.strip():
            continue
        threshold, far, frr = (float(x) for x in line.split("\t"))
        points.append((threshold, far, frr))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(roc_svg(points, args.title), encoding="utf-8")
    print(f"wrote {out}")
    return EXIT_OK


def _cmd_kws_eval(args) -> int:
    labels = load_labels(args.labels)
    spec = KeywordSpec.from_labels(args.keyword, labels, args.smooth, args.search)
    positives = [
        utterance_confidence(stream, spec, args.exclude_first)
        for stream in load_posteriors(args.pos, args.labels).values()
    ]
    negatives = [
        utterance_confidence(stream, spec, args.exclude_first)
        for stream in load_posteriors(args.neg, args.labels).values()
    ]
    points = kws_roc(positives, negatives)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(format_roc(points), encoding="utf-8")
    for far_target in (0.01, 0.001):
        print(f"frr_at_far_{far_target:g} = {frr_at_far(points, far_target):.6f}")
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = validate_config(Path(args.config).read_text(encoding="utf-8"))
    if args.seed is not None:
        cfg.seed = args.seed
    stages = parse_stages(args.stages)
    report = run_pipeline(cfg, stages, workers=args.workers)
    print(report, end="")
    return EXIT_OK


_HANDLERS = {
    "make-toy": _cmd_make_toy,
    "segment": _cmd_segment,
    "synth": _cmd_synth,
    "featurize": _cmd_featurize,
    "train-toy": _cmd_train_toy,
    "extract": _cmd_extract,
    "score": _cmd_score,
    "eval": _cmd_eval,
    "plot-roc": _cmd_plot_roc,
    "kws-eval": _cmd_kws_eval,
    "run": _cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ValueError as exc:
        print(f"unitcat: validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (PipelineError, OSError) as exc:
        print(f"unitcat: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # anything unexpected is still a runtime failure
        print(f"unitcat: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
