"""Checkpoint container: byte-exact round trips and corruption handling."""

import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unips.errors import CheckpointError
from unips.nd import read_checkpoint, write_checkpoint
from unips.nd.checkpoint import MAGIC, VERSION


def test_round_trip_preserves_values_and_order(tmp_path, rng):
    arrays = {
        "w": rng.normal(size=(3, 4)).astype(np.float32),
        "b": rng.normal(size=(4,)).astype(np.float32),
        "scalar": np.float32(2.5),
        "deep.nested.name": rng.normal(size=(2, 2, 2)).astype(np.float32),
    }
    path = tmp_path / "model.ckpt"
    write_checkpoint(path, arrays)
    back = read_checkpoint(path)
    assert list(back) == list(arrays)            # order preserved
    for k in arrays:
        got = back[k]
        want = np.asarray(arrays[k], dtype=np.float32)
        assert got.shape == want.shape           # rank 0 stays rank 0
        np.testing.assert_array_equal(got, want)


def test_rewrite_is_byte_identical(tmp_path, rng):
    arrays = {"a": rng.normal(size=(5, 2)).astype(np.float32),
              "t": np.float32(7.0)}
    p1 = tmp_path / "one.ckpt"
    p2 = tmp_path / "two.ckpt"
    write_checkpoint(p1, arrays)
    write_checkpoint(p2, read_checkpoint(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_non_contiguous_input_round_trips(tmp_path, rng):
    base = rng.normal(size=(6, 6)).astype(np.float32)
    view = base[::2, ::3]                        # strided view
    path = tmp_path / "v.ckpt"
    write_checkpoint(path, {"v": view})
    np.testing.assert_array_equal(read_checkpoint(path)["v"], view)


def test_float64_input_is_stored_as_float32(tmp_path):
    path = tmp_path / "f.ckpt"
    write_checkpoint(path, {"x": np.array([1.0, 2.0], dtype=np.float64)})
    back = read_checkpoint(path)["x"]
    assert back.dtype == np.float32


def test_write_is_atomic_no_temp_left_behind(tmp_path):
    path = tmp_path / "a.ckpt"
    write_checkpoint(path, {"x": np.zeros(3, dtype=np.float32)})
    leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
    assert leftovers == []
    assert path.exists()


def test_missing_file_raises(tmp_path):
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "nope.ckpt")


def test_bad_magic_raises(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"XXXX" + struct.pack("<II", VERSION, 0))
    with pytest.raises(CheckpointError):
        read_checkpoint(path)


def test_bad_version_raises(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(MAGIC + struct.pack("<II", 99, 0))
    with pytest.raises(CheckpointError):
        read_checkpoint(path)


def test_truncated_file_raises(tmp_path):
    path = tmp_path / "ok.ckpt"
    write_checkpoint(path, {"x": np.arange(8, dtype=np.float32)})
    data = path.read_bytes()
    for cut in (len(data) - 1, len(data) // 2, 10):
        broken = tmp_path / f"cut{cut}.ckpt"
        broken.write_bytes(data[:cut])
        with pytest.raises(CheckpointError):
            read_checkpoint(broken)


def test_trailing_garbage_raises(tmp_path):
    path = tmp_path / "ok.ckpt"
    write_checkpoint(path, {"x": np.arange(4, dtype=np.float32)})
    (tmp_path / "t.ckpt").write_bytes(path.read_bytes() + b"\x00garbage")
    with pytest.raises(CheckpointError):
        read_checkpoint(tmp_path / "t.ckpt")


def test_empty_mapping_round_trips(tmp_path):
    path = tmp_path / "empty.ckpt"
    write_checkpoint(path, {})
    assert read_checkpoint(path) == {}


@settings(max_examples=20, deadline=None)
@given(st.lists(st.tuples(st.text(alphabet="abcxyz._", min_size=1,
                                  max_size=12),
                          st.integers(0, 3)),
                min_size=0, max_size=5, unique_by=lambda t: t[0]),
       st.integers(0, 1000))
def test_round_trip_property(specs, seed):
    import tempfile
    g = np.random.default_rng(seed)
    arrays = {}
    for name, rank in specs:
        shape = tuple(int(g.integers(1, 4)) for _ in range(rank))
        arrays[name] = g.normal(size=shape).astype(np.float32)
    with tempfile.TemporaryDirectory() as d:
        p = f"{d}/x.ckpt"
        write_checkpoint(p, arrays)
        back = read_checkpoint(p)
    assert list(back) == list(arrays)
    for k in arrays:
        np.testing.assert_array_equal(back[k], arrays[k])
        assert back[k].shape == arrays[k].shape
