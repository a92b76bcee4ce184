"""Corpus metadata: alignment files, VAD labels, utterance manifests.

Alignment files are CTM-like text, five whitespace-separated fields per
line: utterance_id channel start duration unit. Manifests are TSV with
columns utterance_id, speaker_id, transcript (space-joined units),
audio_path and an optional channel index.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_SILENCE_LABELS = frozenset({"sil", "spn"})

# Adjacent entries written with 2-3 decimals can differ from exact adjacency
# by float rounding (0.1 + 0.2 > 0.3); only larger overlaps are real.
_OVERLAP_EPS = 1e-9


class AlignmentError(ValueError):
    pass


class ManifestError(ValueError):
    pass


@dataclass
class AlignmentEntry:
    utterance_id: str
    unit: str
    start: float
    duration: float

    @property
    def end(self) -> float:
        return self.start + self.duration


@dataclass
class VadLabels:
    """Per-frame speech flags under a fixed framing."""

    flags: np.ndarray
    frame_shift: float
    frame_width: float

    def __post_init__(self) -> None:
        self.flags = np.asarray(self.flags, dtype=bool)

    def __len__(self) -> int:
        return len(self.flags)


@dataclass
class UtteranceRecord:
    utterance_id: str
    speaker_id: str
    transcript: tuple[str, ...]
    audio_path: str
    channel_index: int | None = None


# --- alignments ---------------------------------------------------------


def parse_alignment(text: str) -> list[AlignmentEntry]:
    """Parse CTM-like alignment text; order preserved, empty lines skipped."""
    entries = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) != 5:
            raise AlignmentError(
                f"line {lineno}: expected 5 fields "
                f"(utterance_id channel start duration unit), got {len(fields)}"
            )
        utterance_id, _channel, start_s, duration_s, unit = fields
        try:
            start = float(start_s)
            duration = float(duration_s)
        except ValueError:
            raise AlignmentError(
                f"line {lineno}: non-numeric time field in {start_s!r} / {duration_s!r}"
            ) from None
        if start < 0:
            raise AlignmentError(f"line {lineno}: negative start time {start}")
        if duration <= 0:
            raise AlignmentError(f"line {lineno}: non-positive duration {duration}")
        entries.append(AlignmentEntry(utterance_id, unit, start, duration))
    return entries


def format_alignment(entries: list[AlignmentEntry]) -> str:
    lines = [
        f"{e.utterance_id} 1 {e.start:.6g} {e.duration:.6g} {e.unit}" for e in entries
    ]
    return "".join(line + "\n" for line in lines)


def load_alignment(path: str | Path) -> list[AlignmentEntry]:
    return parse_alignment(Path(path).read_text(encoding="utf-8"))


def group_alignments(entries: list[AlignmentEntry]) -> dict[str, list[AlignmentEntry]]:
    """Entries grouped per utterance, file order preserved within groups."""
    groups: dict[str, list[AlignmentEntry]] = {}
    for e in entries:
        groups.setdefault(e.utterance_id, []).append(e)
    return groups


def check_non_overlapping(entries: list[AlignmentEntry]) -> None:
    """Raise if any two entries of one utterance overlap in time."""
    ordered = sorted(entries, key=lambda e: e.start)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end - _OVERLAP_EPS:
            raise AlignmentError(
                f"utterance {cur.utterance_id!r}: entry {cur.unit!r} at {cur.start} "
                f"overlaps {prev.unit!r} ending at {prev.end}"
            )


# --- VAD ----------------------------------------------------------------


def derive_vad(
    entries: list[AlignmentEntry],
    frame_shift: float,
    frame_width: float,
    num_frames: int,
    silence_labels: frozenset[str] | set[str] = DEFAULT_SILENCE_LABELS,
) -> VadLabels:
    """Frame-level speech flags from an utterance's alignment.

    Frame t is speech iff its center time t*shift + width/2 falls inside
    [start, end) of some entry whose unit is not a silence label. Frames
    past the last entry come out non-speech. num_frames must match the
    frame count of the feature framing the labels will be paired with.
    """
    if frame_shift <= 0 or frame_width <= 0:
        raise ValueError("frame_shift and frame_width must be positive")
    if num_frames < 0:
        raise ValueError(f"num_frames must be >= 0, got {num_frames}")
    check_non_overlapping(entries)
    centers = np.arange(num_frames) * frame_shift + frame_width / 2
    flags = np.zeros(num_frames, dtype=bool)
    for e in entries:
        if e.unit in silence_labels:
            continue
        flags |= (centers >= e.start) & (centers < e.end)
    return VadLabels(flags, frame_shift, frame_width)


# --- manifests ----------------------------------------------------------


def parse_manifest(text: str) -> list[UtteranceRecord]:
    records = []
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) not in (4, 5):
            raise ManifestError(
                f"line {lineno}: expected 4 or 5 tab-separated fields, got {len(fields)}"
            )
        utterance_id, speaker_id, transcript, audio_path = fields[:4]
        channel: int | None = None
        if len(fields) == 5 and fields[4] != "":
            try:
                channel = int(fields[4])
            except ValueError:
                raise ManifestError(
                    f"line {lineno}: channel index {fields[4]!r} is not an integer"
                ) from None
        if utterance_id in seen:
            raise ManifestError(
                f"line {lineno}: duplicate utterance_id {utterance_id!r} "
                f"(first seen at line {seen[utterance_id]})"
            )
        seen[utterance_id] = lineno
        records.append(
            UtteranceRecord(
                utterance_id, speaker_id, tuple(transcript.split()), audio_path, channel
            )
        )
    return records


def format_manifest(records: list[UtteranceRecord]) -> str:
    lines = []
    for r in records:
        row = [r.utterance_id, r.speaker_id, " ".join(r.transcript), r.audio_path]
        if r.channel_index is not None:
            row.append(str(r.channel_index))
        lines.append("\t".join(row))
    return "".join(line + "\n" for line in lines)


def load_manifest(path: str | Path) -> list[UtteranceRecord]:
    return parse_manifest(Path(path).read_text(encoding="utf-8"))


def save_manifest(path: str | Path, records: list[UtteranceRecord]) -> None:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(format_manifest(records), encoding="utf-8")
