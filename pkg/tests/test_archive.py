import numpy as np
import pytest

from unitcat.archive import ArchiveError, ArchiveWriter, read_archive, write_archive


def test_roundtrip_preserves_values_and_order(tmp_path):
    rng = np.random.default_rng(0)
    items = [
        ("utt1", rng.normal(size=(5, 40)).astype(np.float32)),
        ("utt2", rng.normal(size=(3, 40)).astype(np.float32)),
        ("utt1", rng.normal(size=(2, 40)).astype(np.float32)),
    ]
    base = tmp_path / "feats"
    write_archive(base, items)
    back = read_archive(base)
    assert list(back) == ["utt1", "utt2"]
    assert len(back["utt1"]) == 2
    assert np.array_equal(back["utt1"][0], items[0][1])
    assert np.array_equal(back["utt1"][1], items[2][1])
    assert np.array_equal(back["utt2"][0], items[1][1])


def test_vector_records_become_single_rows(tmp_path):
    base = tmp_path / "emb"
    write_archive(base, [("a", np.arange(4, dtype=np.float32))])
    back = read_archive(base)
    assert back["a"][0].shape == (1, 4)
    assert back["a"][0][0].tolist() == [0.0, 1.0, 2.0, 3.0]


def test_float64_input_stored_as_float32(tmp_path):
    base = tmp_path / "emb"
    write_archive(base, [("a", np.array([[1.0, 1e-45]], dtype=np.float64))])
    back = read_archive(base)
    assert back["a"][0].dtype == np.float32


def test_writer_context_manager(tmp_path):
    base = tmp_path / "w"
    with ArchiveWriter(base) as w:
        w.add("x", np.zeros((2, 3), dtype=np.float32))
    assert base.with_suffix(".bin").stat().st_size == 2 * 3 * 4
    index = base.with_suffix(".tsv").read_text()
    assert index == "x\t0\t2\t3\n"


def test_rejects_higher_rank_records(tmp_path):
    with ArchiveWriter(tmp_path / "w") as w:
        with pytest.raises(ArchiveError, match="1-D or 2-D"):
            w.add("x", np.zeros((2, 2, 2)))


def test_read_rejects_bad_index(tmp_path):
    base = tmp_path / "w"
    write_archive(base, [("x", np.zeros((1, 2), dtype=np.float32))])
    base.with_suffix(".tsv").write_text("x\t0\t1\n")
    with pytest.raises(ArchiveError, match="4 fields"):
        read_archive(base)


def test_read_rejects_out_of_bounds_record(tmp_path):
    base = tmp_path / "w"
    write_archive(base, [("x", np.zeros((1, 2), dtype=np.float32))])
    base.with_suffix(".tsv").write_text("x\t0\t10\t10\n")
    with pytest.raises(ArchiveError, match="past"):
        read_archive(base)


def test_records_are_independent_copies(tmp_path):
    base = tmp_path / "w"
    write_archive(base, [("x", np.ones((1, 2), dtype=np.float32))])
    back = read_archive(base)
    back["x"][0][0, 0] = 99.0  # must not fail on read-only buffers
