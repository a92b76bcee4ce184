"""Fixed-transcript synthesis by seeded unit selection and concatenation.

For each covered speaker the planner draws, per transcript position, a
uniform random candidate from that unit's library list (with replacement),
and the renderer concatenates the chosen slices verbatim: no crossfade, no
gap, no gain change. Additive-noise and reverberation augmentation of
rendered audio lives here too.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import Waveform, load_wav, read_wav, save_wav, write_wav
from .corpus import UtteranceRecord, save_manifest
from .rng import SplitMix64, derive_seed
from .segmentation import UnitLibrary, library_stats


class CoverageError(ValueError):
    """A library lacks candidates for a transcript unit."""


class AugmentError(ValueError):
    pass


@dataclass
class SynthesisPlan:
    speaker_id: str
    transcript: tuple[str, ...]
    choices: tuple[int, ...]
    seed_record: int

    def __post_init__(self) -> None:
        if len(self.choices) != len(self.transcript):
            raise ValueError(
                f"{len(self.choices)} choices for {len(self.transcript)} transcript units"
            )


@dataclass
class SynthesizedUtterance:
    record: UtteranceRecord
    plan: SynthesisPlan
    waveform: Waveform


@dataclass
class SynthesisReport:
    utterances: list[SynthesizedUtterance]
    per_speaker_counts: dict[str, int]
    skipped: list[tuple[str, tuple[str, ...]]]  # (speaker_id, missing units)


def unique_units(transcript: tuple[str, ...]) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for u in transcript:
        seen.setdefault(u)
    return tuple(seen)


def synth_utterance_id(speaker_id: str, index: int) -> str:
    return f"{speaker_id}-synth-{index:03d}"


def plan_synthesis(
    lib: UnitLibrary, transcript: tuple[str, ...], count: int, seed: int
) -> list[SynthesisPlan]:
    """Exactly `count` plans; each slot uniform over that unit's candidates.

    Draws come from a per-utterance stream derived from (seed, speaker,
    utterance index), so plans are reproducible item by item.
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    for u in unique_units(transcript):
        if lib.count(u) == 0:
            raise CoverageError(
                f"speaker {lib.speaker_id!r} has no segments for unit {u!r}"
            )
    plans = []
    for i in range(count):
        stream_seed = derive_seed(seed, lib.speaker_id, i)
        rng = SplitMix64(stream_seed)
        choices = tuple(rng.next_below(lib.count(u)) for u in transcript)
        plans.append(SynthesisPlan(lib.speaker_id, tuple(transcript), choices, stream_seed))
    return plans


def render(plan: SynthesisPlan, lib: UnitLibrary) -> Waveform:
    """Concatenate the plan's chosen segment slices in transcript order."""
    chosen = []
    for unit, idx in zip(plan.transcript, plan.choices):
        candidates = lib.table.get(unit, [])
        if not 0 <= idx < len(candidates):
            raise CoverageError(
                f"choice {idx} out of range for unit {unit!r} "
                f"with {len(candidates)} candidates"
            )
        chosen.append(candidates[idx])
    rates = {s.sample_rate for s in chosen}
    if len(rates) != 1:
        raise ValueError(f"chosen segments mix sample rates {sorted(rates)}")
    samples = np.concatenate([s.samples for s in chosen])
    return Waveform(samples, chosen[0].sample_rate)


def _synthesize_speaker(
    args: tuple[UnitLibrary, tuple[str, ...], int],
) -> list[tuple[str, SynthesisPlan, bytes]]:
    lib, transcript, seed = args
    stats = library_stats(lib, unique_units(transcript))
    out = []
    for i, plan in enumerate(plan_synthesis(lib, transcript, stats.max_count, seed)):
        out.append((synth_utterance_id(lib.speaker_id, i), plan, write_wav(render(plan, lib))))
    return out


def synthesize_corpus(
    libraries: list[UnitLibrary],
    transcript: tuple[str, ...],
    seed: int,
    out_dir: str | Path | None = None,
    workers: int = 1,
) -> SynthesisReport:
    """Render per covered speaker exactly max-unit-count utterances.

    Speakers whose library misses any transcript unit are skipped and
    reported. Output is deterministic for a fixed seed regardless of
    worker count: per-utterance seeds are derived from (seed, speaker,
    index) and artifacts are written by the parent in library order.
    """
    units = unique_units(transcript)
    covered = []
    skipped = []
    counts: dict[str, int] = {}
    for lib in libraries:
        stats = library_stats(lib, units)
        if stats.covered:
            covered.append(lib)
            counts[lib.speaker_id] = stats.max_count
        else:
            missing = tuple(u for u in units if stats.counts[u] == 0)
            skipped.append((lib.speaker_id, missing))

    tasks = [(lib, tuple(transcript), seed) for lib in covered]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            per_speaker = list(pool.map(_synthesize_speaker, tasks))
    else:
        per_speaker = [_synthesize_speaker(t) for t in tasks]

    utterances = []
    for lib, rendered in zip(covered, per_speaker):
        for utt_id, plan, wav_bytes in rendered:
            record = UtteranceRecord(
                utterance_id=utt_id,
                speaker_id=lib.speaker_id,
                transcript=tuple(transcript),
                audio_path=f"wav/{utt_id}.wav",
            )
            utterances.append(SynthesizedUtterance(record, plan, read_wav(wav_bytes)))

    report = SynthesisReport(utterances, counts, skipped)
    if out_dir is not None:
        _write_synthesis_artifacts(Path(out_dir), report)
    return report


def _write_synthesis_artifacts(out_dir: Path, report: SynthesisReport) -> None:
    wav_dir = out_dir / "wav"
    wav_dir.mkdir(parents=True, exist_ok=True)
    for s in report.utterances:
        save_wav(out_dir / s.record.audio_path, s.waveform)
    save_manifest(out_dir / "manifest.tsv", [s.record for s in report.utterances])
    plan_lines = [
        f"{s.record.utterance_id}\t{s.plan.speaker_id}"
        f"\t{' '.join(s.plan.transcript)}"
        f"\t{' '.join(str(c) for c in s.plan.choices)}"
        f"\t{s.plan.seed_record:016x}"
        for s in report.utterances
    ]
    (out_dir / "plans.tsv").write_text(
        "".join(line + "\n" for line in plan_lines), encoding="utf-8"
    )
    skip_lines = [f"{spk}\t{' '.join(missing)}" for spk, missing in report.skipped]
    (out_dir / "skips.tsv").write_text(
        "".join(line + "\n" for line in skip_lines), encoding="utf-8"
    )


# --- acoustic augmentation ----------------------------------------------


def _mono_float(w: Waveform, what: str) -> np.ndarray:
    if w.channels != 1:
        raise AugmentError(f"{what} must be mono, got {w.channels} channels")
    return w.mono().astype(np.float64)


def _mix_noise_core(
    speech: Waveform, noise: Waveform, snr_db: float, seed: int
) -> tuple[Waveform, int]:
    if speech.sample_rate != noise.sample_rate:
        raise AugmentError(
            f"sample-rate mismatch: speech {speech.sample_rate}, noise {noise.sample_rate}"
        )
    s = _mono_float(speech, "speech")
    n_all = _mono_float(noise, "noise")
    if len(n_all) == 0:
        raise AugmentError("empty noise waveform")
    offset = SplitMix64(seed).next_below(len(n_all))
    idx = (offset + np.arange(len(s))) % len(n_all)
    n = n_all[idx]
    p_speech = float(np.mean(s * s))
    p_noise = float(np.mean(n * n))
    if p_speech == 0.0:
        raise AugmentError("zero-power speech: SNR gain undefined")
    if p_noise == 0.0:
        raise AugmentError("zero-power noise segment: SNR gain undefined")
    gain = float(np.sqrt(p_speech / (p_noise * 10.0 ** (snr_db / 10.0))))
    mixed = s + gain * n
    rounded = np.rint(mixed)
    clipped = int(np.count_nonzero((rounded > 32767) | (rounded < -32768)))
    out = np.clip(rounded, -32768, 32767).astype(np.int16)
    return Waveform(out, speech.sample_rate), clipped


def mix_noise(speech: Waveform, noise: Waveform, snr_db: float, seed: int) -> Waveform:
    """Add a seeded, gain-scaled noise segment at the requested SNR.

    The noise segment starts at a seeded random offset and wraps around if
    the noise is shorter than the speech; powers are measured over the
    mixed region, so the realized SNR matches snr_db exactly before
    rounding. Samples saturate to int16.
    """
    return _mix_noise_core(speech, noise, snr_db, seed)[0]


def _convolve_rir_core(speech: Waveform, rir: np.ndarray) -> tuple[Waveform, int]:
    kernel = np.asarray(rir, dtype=np.float64)
    if kernel.ndim != 1 or len(kernel) == 0:
        raise AugmentError("rir must be a non-empty 1-D sample sequence")
    if float(np.max(np.abs(kernel))) == 0.0:
        raise AugmentError("rir has zero peak")
    s = _mono_float(speech, "speech")
    # direct-form linear convolution, truncated to the input length
    out = np.convolve(s, kernel)[: len(s)]
    out_peak = float(np.max(np.abs(out)))
    if out_peak == 0.0:
        raise AugmentError("convolved signal has zero peak, cannot renormalize")
    in_peak = float(np.max(np.abs(s)))
    out *= in_peak / out_peak
    rounded = np.rint(out)
    clipped = int(np.count_nonzero((rounded > 32767) | (rounded < -32768)))
    final = np.clip(rounded, -32768, 32767).astype(np.int16)
    return Waveform(final, speech.sample_rate), clipped


def convolve_rir(speech: Waveform, rir: np.ndarray) -> Waveform:
    """Convolve with an impulse response, renormalized to the input's peak."""
    return _convolve_rir_core(speech, rir)[0]


@dataclass
class AugmentationRow:
    utterance_id: str
    kind: str  # "noise" or "reverb"
    snr_db: float | None
    clipped: int


def augment_corpus(
    records: list[UtteranceRecord],
    audio_root: str | Path,
    out_dir: str | Path,
    seed: int,
    noise_paths: list[Path] | None = None,
    snr_list: list[float] | None = None,
    rir_paths: list[Path] | None = None,
) -> tuple[list[UtteranceRecord], list[AugmentationRow]]:
    """Write noisy / reverberant copies of a manifest's utterances.

    One copy per (utterance, SNR) plus one reverb copy per utterance when
    RIRs are given. Noise and RIR files are chosen by per-utterance seeded
    draws, so output is deterministic. Returns the augmented records and
    the per-copy report rows (clipped-sample counts included).
    """
    audio_root = Path(audio_root)
    out_dir = Path(out_dir)
    out_records: list[UtteranceRecord] = []
    report: list[AugmentationRow] = []
    for rec in records:
        speech = load_wav(audio_root / rec.audio_path)
        if noise_paths and snr_list:
            for snr in snr_list:
                pick_rng = SplitMix64(derive_seed(seed, "noise-pick", rec.utterance_id, str(snr)))
                noise = load_wav(noise_paths[pick_rng.next_below(len(noise_paths))])
                mix_seed = derive_seed(seed, "noise-mix", rec.utterance_id, str(snr))
                mixed, clipped = _mix_noise_core(speech, noise, snr, mix_seed)
                new_id = f"{rec.utterance_id}-noise{snr:g}"
                path = f"wav/{new_id}.wav"
                save_wav(out_dir / path, mixed)
                out_records.append(
                    UtteranceRecord(new_id, rec.speaker_id, rec.transcript, path)
                )
                report.append(AugmentationRow(new_id, "noise", snr, clipped))
        if rir_paths:
            pick_rng = SplitMix64(derive_seed(seed, "rir-pick", rec.utterance_id))
            rir_wav = load_wav(rir_paths[pick_rng.next_below(len(rir_paths))])
            kernel = rir_wav.mono().astype(np.float64) / 32768.0
            reverbed, clipped = _convolve_rir_core(speech, kernel)
            new_id = f"{rec.utterance_id}-reverb"
            path = f"wav/{new_id}.wav"
            save_wav(out_dir / path, reverbed)
            out_records.append(
                UtteranceRecord(new_id, rec.speaker_id, rec.transcript, path)
            )
            report.append(AugmentationRow(new_id, "reverb", None, clipped))
    save_manifest(out_dir / "manifest.tsv", out_records)
    report_lines = [
        f"{r.utterance_id}\t{r.kind}\t{'' if r.snr_db is None else f'{r.snr_db:g}'}\t{r.clipped}"
        for r in report
    ]
    (out_dir / "augment_report.tsv").write_text(
        "".join(line + "\n" for line in report_lines), encoding="utf-8"
    )
    return out_records, report
