"""Binary matrix archives: float32 records addressed by a TSV index.

An archive is a pair of files sharing a base path: <base>.bin holds
concatenated row-major little-endian float32 payloads, <base>.tsv lists
one record per line as utterance_id, byte offset, rows, cols. An id may
appear on several lines (e.g. one embedding per recording channel); the
reader returns records per id in file order.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


class ArchiveError(ValueError):
    pass


class ArchiveWriter:
    def __init__(self, base: str | Path):
        base = Path(base)
        base.parent.mkdir(parents=True, exist_ok=True)
        self._bin = open(base.with_suffix(".bin"), "wb")
        self._tsv = open(base.with_suffix(".tsv"), "w", encoding="utf-8")
        self._offset = 0

    def add(self, utt_id: str, matrix: np.ndarray) -> None:
        arr = np.ascontiguousarray(np.asarray(matrix, dtype="<f4"))
        if arr.ndim == 1:
            arr = arr[np.newaxis, :]
        if arr.ndim != 2:
            raise ArchiveError(f"records must be 1-D or 2-D, got shape {arr.shape}")
        payload = arr.tobytes()
        self._bin.write(payload)
        self._tsv.write(f"{utt_id}\t{self._offset}\t{arr.shape[0]}\t{arr.shape[1]}\n")
        self._offset += len(payload)

    def close(self) -> None:
        self._bin.close()
        self._tsv.close()

    def __enter__(self) -> "ArchiveWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def write_archive(base: str | Path, items) -> None:
    with ArchiveWriter(base) as w:
        for utt_id, matrix in items:
            w.add(utt_id, matrix)


def read_archive(base: str | Path) -> dict[str, list[np.ndarray]]:
    """All records grouped by id, file order preserved within a group."""
    base = Path(base)
    data = base.with_suffix(".bin").read_bytes()
    records: dict[str, list[np.ndarray]] = {}
    index_path = base.with_suffix(".tsv")
    for lineno, line in enumerate(
        index_path.read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        fields = line.split("\t")
        if len(fields) != 4:
            raise ArchiveError(f"{index_path}:{lineno}: expected 4 fields, got {len(fields)}")
        utt_id, offset_s, rows_s, cols_s = fields
        offset, rows, cols = int(offset_s), int(rows_s), int(cols_s)
        nbytes = rows * cols * 4
        if offset + nbytes > len(data):
            raise ArchiveError(
                f"{index_path}:{lineno}: record for {utt_id!r} runs past the data file"
            )
        arr = np.frombuffer(data, dtype="<f4", count=rows * cols, offset=offset)
        records.setdefault(utt_id, []).append(arr.reshape(rows, cols).copy())
    return records
