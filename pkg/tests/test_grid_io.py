"""Tensor file format, PGM export, CSV emission."""

import json

import numpy as np
import pytest

from freqct.errors import BadMagicError, HeaderError, NonFiniteError, TruncatedPayloadError
from freqct.grid import Grid2D, export_pgm, read_tensor, write_csv, write_tensor


def test_roundtrip_f64_bit_exact(tmp_path):
    data = np.array([[1.0, 2.0], [3.0, 4.0]])
    path = tmp_path / "g.fct"
    write_tensor(Grid2D(data, "sinogram", {"note": "x"}), path, dtype="f64")
    back = read_tensor(path)
    np.testing.assert_array_equal(back.data, data)
    assert back.kind == "sinogram"
    assert back.meta["note"] == "x"


def test_roundtrip_f32_single_quantization(tmp_path):
    data = np.array([[0.1, 1 / 3], [2 / 7, 1e-8]])
    path = tmp_path / "g32.fct"
    write_tensor(Grid2D(data), path, dtype="f32")
    once = read_tensor(path)
    np.testing.assert_array_equal(once.data, data.astype(np.float32).astype(np.float64))
    write_tensor(once, path, dtype="f32")
    np.testing.assert_array_equal(read_tensor(path).data, once.data)


def test_file_size_arithmetic(tmp_path):
    """magic + length + header + one f64 scalar."""
    path = tmp_path / "one.fct"
    write_tensor(Grid2D(np.zeros((1, 1))), path, dtype="f64")
    blob = path.read_bytes()
    hdr_len = int(np.frombuffer(blob[4:8], dtype="<u4")[0])
    assert len(blob) == 4 + 4 + hdr_len + 8
    header = json.loads(blob[8 : 8 + hdr_len])
    assert header["shape"] == [1, 1] and header["dtype"] == "f64"


def test_payload_is_little_endian_row_major(tmp_path):
    data = np.array([[1.0, 2.0], [3.0, 4.0]])
    path = tmp_path / "le.fct"
    write_tensor(Grid2D(data), path)
    blob = path.read_bytes()
    hdr_len = int(np.frombuffer(blob[4:8], dtype="<u4")[0])
    scalars = np.frombuffer(blob[8 + hdr_len :], dtype="<f8")
    np.testing.assert_array_equal(scalars, [1.0, 2.0, 3.0, 4.0])


def test_nan_rejected():
    with pytest.raises(NonFiniteError):
        Grid2D(np.array([[np.nan, 0.0]]))


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.fct"
    path.write_bytes(b"XXXX" + b"\x00" * 20)
    with pytest.raises(BadMagicError):
        read_tensor(path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "t.fct"
    write_tensor(Grid2D(np.zeros((4, 4))), path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-8])  # drop one scalar: 15 of 16 remain
    with pytest.raises(TruncatedPayloadError):
        read_tensor(path)


def test_malformed_header(tmp_path):
    path = tmp_path / "h.fct"
    hdr = b"{not json"
    path.write_bytes(b"FCT1" + np.uint32(len(hdr)).astype("<u4").tobytes() + hdr)
    with pytest.raises(HeaderError):
        read_tensor(path)


def test_grid_requires_2d():
    with pytest.raises(ValueError):
        Grid2D(np.zeros(3))


def test_grid_data_read_only():
    g = Grid2D(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        g.data[0, 0] = 1.0


class TestPgm:
    def test_window_endpoints(self, tmp_path):
        lo, hi = 2.0, 6.0
        for value, pixel in ((lo, 0), (hi, 255), ((lo + hi) / 2, 128)):
            path = tmp_path / "c.pgm"
            export_pgm(Grid2D(np.full((3, 5), value)), path, (lo, hi))
            blob = path.read_bytes()
            header, pixels = blob.split(b"255\n", 1)
            assert header == b"P5\n5 3\n"
            assert pixels == bytes([pixel]) * 15

    def test_degenerate_window(self, tmp_path):
        with pytest.raises(ValueError):
            export_pgm(Grid2D(np.zeros((2, 2))), tmp_path / "d.pgm", (1.0, 1.0))


def test_csv_format(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b"], [[1, 0.5], [float("inf"), "x"]])
    text = path.read_text()
    assert text == "a,b\n1,0.5\ninf,x\n"
    assert "\r" not in text
