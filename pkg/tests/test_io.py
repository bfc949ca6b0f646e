import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vcgmm import io
from vcgmm.coreset import LwcsConfig, build_lightweight_coreset
from vcgmm.errors import DataFormatError
from vcgmm.model import GmmParams


def _write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_csv_basic(tmp_path):
    data = io.load_csv(_write(tmp_path, "a.csv", "0,0\n3,4\n"))
    assert data.tolist() == [[0.0, 0.0], [3.0, 4.0]]


def test_csv_header_skipped(tmp_path):
    data = io.load_csv(_write(tmp_path, "a.csv", "x,y\n1,2\n3.5,-4e2\n"))
    assert data.tolist() == [[1.0, 2.0], [3.5, -400.0]]


def test_csv_blank_lines_ignored(tmp_path):
    data = io.load_csv(_write(tmp_path, "a.csv", "1,2\n\n3,4\n\n"))
    assert data.shape == (2, 2)


@pytest.mark.parametrize("text,match", [
    ("", "no data rows"),
    ("x,y\n", "header row but no data"),
    ("1,2\n3\n", "line 2 has 1 fields, expected 2"),
    ("1,2\n3,abc\n", "line 2, column 2: non-numeric"),
    ("1,nan\n", "line 1, column 2: non-finite"),
    ("1,2\n3,inf\n", "line 2, column 2: non-finite"),
])
def test_csv_errors(tmp_path, text, match):
    with pytest.raises(DataFormatError, match=match):
        io.load_csv(_write(tmp_path, "bad.csv", text))


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 8), st.integers(1, 4)),
              elements=st.floats(allow_nan=False, allow_infinity=False, width=64)))
def test_csv_round_trip_full_precision(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("rt") / "d.csv"
    io.save_csv(values, p)
    back = io.load_csv(p)
    assert np.array_equal(back.view(np.uint64), values.view(np.uint64))


def test_binary_minimal(tmp_path):
    p = tmp_path / "m.bin"
    p.write_bytes(b"VCGMM001" + struct.pack("<QQ", 1, 1) + struct.pack("<d", 0.0))
    assert io.load_binary(p).tolist() == [[0.0]]


def test_binary_layout_is_exact(tmp_path):
    data = np.array([[1.0, -2.5], [3.25, 1e-300]])
    p = tmp_path / "d.bin"
    io.save_binary(data, p)
    raw = p.read_bytes()
    assert raw[:8] == b"VCGMM001"
    assert struct.unpack_from("<QQ", raw, 8) == (2, 2)
    assert struct.unpack_from("<4d", raw, 24) == (1.0, -2.5, 3.25, 1e-300)
    assert len(raw) == 24 + 32


def test_csv_to_binary_equivalence(tmp_path):
    rng = np.random.default_rng(0)
    values = rng.normal(size=(50, 3)) * 1e3
    io.save_csv(values, tmp_path / "d.csv", header=["a", "b", "c"])
    from_csv = io.load_csv(tmp_path / "d.csv")
    io.save_binary(from_csv, tmp_path / "d.bin")
    assert np.array_equal(io.load_binary(tmp_path / "d.bin"), from_csv)
    assert np.array_equal(from_csv, values)


def test_binary_truncated(tmp_path):
    p = tmp_path / "t.bin"
    io.save_binary(np.ones((3, 2)), p)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(DataFormatError, match="expected 72 bytes .* got 64"):
        io.load_binary(p)


def test_binary_bad_magic_and_header(tmp_path):
    p = tmp_path / "b.bin"
    p.write_bytes(b"NOTMAGIC" + struct.pack("<QQ", 1, 1) + b"\0" * 8)
    with pytest.raises(DataFormatError, match="byte offset 0"):
        io.load_binary(p)
    p.write_bytes(b"VCGMM0")
    with pytest.raises(DataFormatError, match="header needs 24 bytes"):
        io.load_binary(p)
    p.write_bytes(b"VCGMM001" + struct.pack("<QQ", 0, 3))
    with pytest.raises(DataFormatError, match="byte offset 8"):
        io.load_binary(p)


def test_binary_non_finite_offset(tmp_path):
    p = tmp_path / "n.bin"
    p.write_bytes(b"VCGMM001" + struct.pack("<QQ", 2, 1) + struct.pack("<2d", 1.0, np.nan))
    with pytest.raises(DataFormatError, match="row 1, column 0 .byte offset 32"):
        io.load_binary(p)


def test_load_dataset_dispatch(tmp_path):
    data = np.arange(6.0).reshape(3, 2)
    io.save_csv(data, tmp_path / "d.csv")
    io.save_binary(data, tmp_path / "d.bin")
    io.save_binary(data, tmp_path / "noext")
    for name in ("d.csv", "d.bin", "noext"):
        assert np.array_equal(io.load_dataset(tmp_path / name), data)
    assert io.detect_format(tmp_path / "noext") == "binary"
    with pytest.raises(DataFormatError, match="no such file"):
        io.load_dataset(tmp_path / "missing.csv")
    with pytest.raises(DataFormatError, match="unknown dataset format"):
        io.load_dataset(tmp_path / "d.csv", "parquet")


def test_model_round_trip(tmp_path):
    p = GmmParams(np.array([[0.1, 0.2], [1 / 3, -5.0]]), 0.75)
    io.save_model(p, tmp_path / "m.json", {"algorithm": "vc-gmm"})
    q = io.load_model(tmp_path / "m.json")
    assert np.array_equal(p.means, q.means) and p.variance == q.variance
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(DataFormatError):
        io.load_model(tmp_path / "bad.json")


def test_coreset_round_trip(tmp_path):
    data = np.random.default_rng(1).normal(size=(100, 3))
    cs = build_lightweight_coreset(data, LwcsConfig(20, 4))
    io.save_coreset(cs, tmp_path / "c.csv")
    back = io.load_coreset(tmp_path / "c.csv")
    assert np.array_equal(back.points, cs.points)
    assert np.array_equal(back.weights, cs.weights)
    assert np.array_equal(back.indices, cs.indices)
