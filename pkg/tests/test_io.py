import json
import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from boxopt.io import (
    FormatError,
    load_manifest,
    read_csv,
    read_dmat,
    read_matrix,
    save_manifest,
    write_csv,
    write_dmat,
)


def test_dmat_layout(tmp_path):
    path = tmp_path / "a.dmat"
    write_dmat(path, [[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    raw = path.read_bytes()
    assert raw[:4] == b"DMAT"
    assert struct.unpack("<QQ", raw[4:20]) == (2, 3)
    assert struct.unpack("<6d", raw[20:]) == (1.0, 2.0, 3.0, 4.0, 5.0, 6.0)


def test_vector_is_one_column(tmp_path):
    path = tmp_path / "v.dmat"
    write_dmat(path, [1.0, 2.0])
    assert read_dmat(path).shape == (2, 1)


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)), elements=st.floats(allow_nan=False)))
def test_dmat_roundtrip_bit_exact(tmp_path_factory, a):
    path = tmp_path_factory.mktemp("d") / "a.dmat"
    write_dmat(path, a)
    assert np.array_equal(read_dmat(path), a)


def test_dmat_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.dmat"
    path.write_bytes(b"XXXX" + struct.pack("<QQ", 1, 1) + struct.pack("<d", 1.0))
    with pytest.raises(FormatError):
        read_dmat(path)


def test_dmat_rejects_truncated_payload(tmp_path):
    path = tmp_path / "short.dmat"
    path.write_bytes(b"DMAT" + struct.pack("<QQ", 2, 2) + struct.pack("<d", 1.0))
    with pytest.raises(FormatError):
        read_dmat(path)


def test_csv_roundtrip(tmp_path, rng):
    a = rng.standard_normal((4, 3))
    path = tmp_path / "a.csv"
    write_csv(path, a)
    assert "," in path.read_text().splitlines()[0]
    assert np.array_equal(read_csv(path), a)
    assert np.array_equal(read_matrix(path), a)


def test_manifest_roundtrip(tmp_path, rng):
    arrays_in = {"A": rng.standard_normal((3, 2)), "b": rng.standard_normal(3), "lam": 0.5}
    save_manifest(tmp_path / "data.json", arrays_in)
    loaded = load_manifest(tmp_path / "data.json")
    assert np.array_equal(loaded["A"], arrays_in["A"])
    assert np.array_equal(loaded["b"][:, 0], arrays_in["b"])
    assert loaded["lam"] == 0.5


def test_manifest_resolves_relative_to_itself(tmp_path):
    sub = tmp_path / "data"
    sub.mkdir()
    write_csv(sub / "b.csv", [1.0, 2.0])
    (sub / "m.json").write_text(json.dumps({"b": "b.csv"}))
    assert load_manifest(sub / "m.json")["b"].ravel().tolist() == [1.0, 2.0]


def test_manifest_rejects_bad_entries(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"b": [1, 2]}))
    with pytest.raises(FormatError):
        load_manifest(tmp_path / "m.json")
