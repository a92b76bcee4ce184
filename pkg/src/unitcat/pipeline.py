"""End-to-end pipeline: segment, synth, augment, featurize, train,
extract, score, eval.

Every stage reads its inputs from the previous stage's directory under
cfg.out_dir and writes deterministic artifacts: all randomness derives
from the config seed, parallel work is mapped in a fixed order and written
by the parent, and no artifact contains a timestamp, so rerunning with any
worker count reproduces the tree byte for byte.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .archive import ArchiveWriter, read_archive
from .audio import load_wav
from .config import ConfigError, PipelineConfig
from .corpus import group_alignments, load_alignment, load_manifest
from .features import SpecAugmentParams, compute_fbank, sliding_mean_normalize, spec_augment
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
from .segmentation import (
    UnitLibrary,
    build_library,
    extract_segments,
    library_stats,
    list_library_speakers,
    load_library,
    save_library,
)
from .synthesis import synthesize_corpus, unique_units, augment_corpus
from .tdnn import AamParams, TdnnConfig, forward, init_tdnn, load_params, save_params, train_step

STAGES = ("segment", "synth", "augment", "featurize", "train", "extract", "score", "eval")


class PipelineError(RuntimeError):
    pass


def parse_stages(raw: str | None) -> tuple[str, ...]:
    """None selects every stage; '' or 'none' selects no stage."""
    if raw is None:
        return STAGES
    names = [s.strip() for s in raw.split(",") if s.strip()]
    if raw.strip().lower() in ("", "none"):
        return ()
    unknown = [n for n in names if n not in STAGES]
    if unknown:
        raise ConfigError(f"unknown stage name(s): {', '.join(unknown)}")
    return tuple(s for s in STAGES if s in names)


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise PipelineError(f"missing {hint}: {path}")
    return path


def _pmap(fn, items: list, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def run_pipeline(
    cfg: PipelineConfig, stages: tuple[str, ...] = STAGES, workers: int = 1
) -> str:
    out = Path(cfg.out_dir)
    report: list[str] = []
    if not stages:
        return "config valid; no stages requested\n"
    for stage in stages:
        runner = _STAGE_RUNNERS[stage]
        lines = runner(cfg, out, workers)
        report.append(f"[{stage}]")
        report.extend(lines)
        report.append("")
    text = "".join(line + "\n" for line in report)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text, encoding="utf-8")
    return text


# --- stages ---------------------------------------------------------------


def segment_corpus(
    manifest_path: Path,
    alignment_path: Path,
    audio_root: Path,
    transcript: tuple[str, ...],
    silence_labels,
    libdir: Path,
) -> list[str]:
    """Chunk every manifest utterance and persist one library per speaker;
    returns per-speaker summary lines."""
    manifest = load_manifest(_require(manifest_path, "corpus manifest"))
    alignments = group_alignments(load_alignment(_require(alignment_path, "alignment file")))
    by_speaker: dict[str, list] = {}
    for rec in manifest:
        if rec.utterance_id not in alignments:
            raise PipelineError(f"no alignment entries for utterance {rec.utterance_id!r}")
        wav = load_wav(audio_root / rec.audio_path)
        if rec.channel_index is not None:
            wav = wav.channel(rec.channel_index)
        segs = extract_segments(
            wav, alignments[rec.utterance_id], rec.speaker_id, silence_labels
        )
        by_speaker.setdefault(rec.speaker_id, []).extend(segs)

    units = unique_units(transcript)
    lines = []
    for speaker in sorted(by_speaker):
        segs = by_speaker[speaker]
        lib = (
            build_library(segs, units)
            if segs
            else UnitLibrary(speaker_id=speaker, table={})
        )
        save_library(libdir, lib)
        stats = library_stats(lib, units)
        counts = " ".join(f"{u}:{stats.counts[u]}" for u in units)
        lines.append(
            f"{speaker}: {counts} covered={'yes' if stats.covered else 'no'} "
            f"max_count={stats.max_count}"
        )
    lines.append(f"speakers: {len(by_speaker)}")
    return lines


def _stage_segment(cfg: PipelineConfig, out: Path, workers: int) -> list[str]:
    corpus = Path(cfg.corpus_dir)
    return segment_corpus(
        corpus / "manifest.tsv",
        corpus / "ali.ctm",
        corpus,
        cfg.transcript,
        cfg.silence_labels,
        out / "libraries",
    )


def _stage_synth(cfg: PipelineConfig, out: Path, workers: int) -> list[str]:
    libdir = _require(out / "libraries", "unit library directory")
    speakers = list_library_speakers(libdir)
    if not speakers:
        raise PipelineError(f"no unit libraries under {libdir}")
    libs = [load_library(libdir / spk) for spk in speakers]
    result = synthesize_corpus(
        libs,
        cfg.transcript,
        derive_seed(cfg.seed, "synth"),
        out_dir=out / "synth",
        workers=workers,
    )
    lines = [
        f"{spk}: {n} utterances" for spk, n in sorted(result.per_speaker_counts.items())
    ]
    for spk, missing in result.skipped:
        lines.append(f"skipped {spk}: missing {' '.join(missing)}")
    lines.append(f"synthesized: {len(result.utterances)}")
    return lines


def _stage_augment(cfg: PipelineConfig, out: Path, workers: int) -> list[str]:
    if not (cfg.noise_dir and cfg.snr_list) and not cfg.rir_dir:
        return ["nothing configured, skipped"]
    synth_dir = _require(out / "synth", "synthesized corpus")
    records = load_manifest(_require(synth_dir / "manifest.tsv", "synthesized manifest"))
    noise_paths = sorted(Path(cfg.noise_dir).glob("*.wav")) if cfg.noise_dir else []
    rir_paths = sorted(Path(cfg.rir_dir).glob("*.wav")) if cfg.rir_dir else []
    if cfg.noise_dir and not noise_paths:
        raise PipelineError(f"no .wav files under noise_dir {cfg.noise_dir}")
    if cfg.rir_dir and not rir_paths:
        raise PipelineError(f"no .wav files under rir_dir {cfg.rir_dir}")
    out_records, rows = augment_corpus(
        records,
        synth_dir,
        out / "augmented",
        derive_seed(cfg.seed, "augment"),
        noise_paths=noise_paths or None,
        snr_list=list(cfg.snr_list) or None,
        rir_paths=rir_paths or None,
    )
    clipped = sum(r.clipped for r in rows)
    return [f"augmented copies: {len(out_records)}", f"clipped samples: {clipped}"]


def _featurize_one(args) -> tuple[str, np.ndarray, np.ndarray | None]:
    utt_id, wav_path, cmn_window, sa_params, sa_seed = args
    feats = sliding_mean_normalize(compute_fbank(load_wav(wav_path)), cmn_window)
    masked = spec_augment(feats, sa_params, sa_seed) if sa_params is not None else None
    return utt_id, feats, masked


def _feature_inputs(cfg: PipelineConfig, out: Path) -> list[tuple[str, Path]]:
    synth_dir = _require(out / "synth", "synthesized corpus")
    records = load_manifest(_require(synth_dir / "manifest.tsv", "synthesized manifest"))
    inputs = [(r.utterance_id, synth_dir / r.audio_path) for r in records]
    aug_manifest = out / "augmented" / "manifest.tsv"
    if aug_manifest.exists():
        for r in load_manifest(aug_manifest):
            inputs.append((r.utterance_id, out / "augmented" / r.audio_path))
    return inputs


def _stage_featurize(cfg: PipelineConfig, out: Path, workers: int) -> list[str]:
    inputs = _feature_inputs(cfg, out)
    sa_params = (
        SpecAugmentParams(
            cfg.freq_mask_width, cfg.num_freq_masks, cfg.time_mask_width, cfg.num_time_masks
        )
        if cfg.spec_augment
        else None
    )
    tasks = [
        (
            utt_id,
            str(path),
            cfg.cmn_window,
            sa_params,
            derive_seed(cfg.seed, "specaug", utt_id),
        )
        for utt_id, path in inputs
    ]
    results = _pmap(_featurize_one, tasks, workers)
    feat_dir = out / "features"
    frames = 0
    with ArchiveWriter(feat_dir / "features") as plain:
        for utt_id, feats, _ in results:
            plain.add(utt_id, feats)
            frames += len(feats)
    lines = [f"utterances: {len(results)}", f"frames: {frames}"]
    if sa_params is not None:
        with ArchiveWriter(feat_dir / "train") as masked_archive:
            for utt_id, _, masked in results:
                masked_archive.add(utt_id, masked)
        lines.append("masking: on")
    return lines


def _speaker_labels(out: Path) -> dict[str, str]:
    labels: dict[str, str] = {}
    for manifest in (out / "synth" / "manifest.tsv", out / "augmented" / "manifest.tsv"):
        if manifest.exists():
            for rec in load_manifest(manifest):
                labels[rec.utterance_id] = rec.speaker_id
    return labels


def _stage_train(cfg: PipelineConfig, out: Path, workers: int) -> list[str]:
    base = out / "features" / ("train" if cfg.spec_augment else "features")
    _require(base.with_suffix(".tsv"), "feature archive")
    archive = read_archive(base)
    speaker_of = _speaker_labels(out)
    speakers = sorted({speaker_of[u] for u in archive if u in speaker_of})
    if len(speakers) < 2:
        raise PipelineError(f"training needs at least 2 speakers, found {len(speakers)}")
    class_index = {s: i for i, s in enumerate(speakers)}
    batch = []
    for utt_id, records in archive.items():
        if utt_id not in speaker_of:
            raise PipelineError(f"feature record {utt_id!r} is missing from the manifests")
        batch.append((records[0].astype(np.float64), class_index[speaker_of[utt_id]]))

    params = init_tdnn(TdnnConfig(num_classes=len(speakers)), derive_seed(cfg.seed, "init"))
    aam = AamParams()
    first_loss = None
    loss = float("nan")
    for _ in range(cfg.train_steps):
        params, loss = train_step(params, batch, cfg.learn_rate, aam)
        if first_loss is None:
            first_loss = loss
    save_params(out / "model" / "params.bin", params)
    return [
        f"classes: {len(speakers)}",
        f"utterances: {len(batch)}",
        f"steps: {cfg.train_steps}",
        f"first_loss: {first_loss:.6f}",
        f"final_loss: {loss:.6f}",
    ]


_EXTRACT_PARAMS = None


def _set_extract_params(params) -> None:
    global _EXTRACT_PARAMS
    _EXTRACT_PARAMS = params


def _extract_one(args) -> tuple[str, np.ndarray]:
    utt_id, feats = args
    embedding, _ = forward(_EXTRACT_PARAMS, feats.astype(np.float64))
    return utt_id, embedding


def _stage_extract(cfg: PipelineConfig, out: Path, workers: int) -> list[str]:
    params = load_params(_require(out / "model" / "params.bin", "trained parameters"))
    base = out / "features" / "features"
    _require(base.with_suffix(".tsv"), "feature archive")
    archive = read_archive(base)
    tasks = [(utt_id, records[0]) for utt_id, records in archive.items()]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_set_extract_params, initargs=(params,)
        ) as pool:
            results = list(pool.map(_extract_one, tasks))
    else:
        _set_extract_params(params)
        results = [_extract_one(t) for t in tasks]
    with ArchiveWriter(out / "embeddings" / "embeddings") as writer:
        for utt_id, embedding in results:
            writer.add(utt_id, embedding)
    return [f"embeddings: {len(results)}"]


def _stage_score(cfg: PipelineConfig, out: Path, workers: int) -> list[str]:
    trials = load_trials(_require(Path(cfg.corpus_dir) / "trials.tsv", "trial list"))
    emb_base = out / "embeddings" / "embeddings"
    _require(emb_base.with_suffix(".tsv"), "embedding archive")
    embeddings = read_archive(emb_base)
    score_set = score_trials(trials, embeddings)
    scores_dir = out / "scores"
    scores_dir.mkdir(parents=True, exist_ok=True)
    (scores_dir / "scores.txt").write_text(format_scores(trials, score_set), encoding="utf-8")
    n_target = int(np.count_nonzero(score_set.is_target))
    return [
        f"trials: {len(trials)}",
        f"targets: {n_target}",
        f"nontargets: {len(trials) - n_target}",
    ]


def _stage_eval(cfg: PipelineConfig, out: Path, workers: int) -> list[str]:
    scores_path = _require(out / "scores" / "scores.txt", "score file")
    score_set = parse_scores(scores_path.read_text(encoding="utf-8"))
    metrics = compute_det_metrics(score_set, cfg.p_target, cfg.c_miss, cfg.c_fa)
    eval_dir = out / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    (eval_dir / "roc.tsv").write_text(format_roc(metrics.roc), encoding="utf-8")
    (eval_dir / "roc.svg").write_text(roc_svg(metrics.roc), encoding="utf-8")
    summary = [
        f"eer_percent = {100.0 * metrics.eer:.4f}",
        f"eer_threshold = {metrics.eer_threshold:.6f}",
        f"min_dcf = {metrics.min_dcf:.6f}",
        f"dcf_threshold = {metrics.dcf_threshold:.6f}",
    ]
    (eval_dir / "metrics.txt").write_text(
        "".join(line + "\n" for line in summary), encoding="utf-8"
    )
    return summary


_STAGE_RUNNERS = {
    "segment": _stage_segment,
    "synth": _stage_synth,
    "augment": _stage_augment,
    "featurize": _stage_featurize,
    "train": _stage_train,
    "extract": _stage_extract,
    "score": _stage_score,
    "eval": _stage_eval,
}
