import struct

import numpy as np
import pytest

from gddfuse.io import (TensorFormatError, quantize, read_pnm, read_srf_csv, read_tensor,
                        read_trace_csv, write_pgm, write_ppm, write_srf_csv, write_tensor,
                        write_trace_csv)
from gddfuse.runner import RunTrace, TraceRow


def header(magic=b"GDDT", version=1, ndim=3, dims=(1, 2, 2)):
    return struct.pack("<4sIIIII", magic, version, ndim, *dims)


class TestTensorFile:
    def test_round_trip_bit_identical(self, tmp_path, rng):
        t = rng.standard_normal((3, 8, 8)).astype(np.float32)
        write_tensor(tmp_path / "t.btf", t)
        back = read_tensor(tmp_path / "t.btf")
        assert back.dtype == np.float32 and back.tobytes() == t.tobytes()

    def test_layout(self, tmp_path):
        t = np.arange(12, dtype=np.float32).reshape(2, 2, 3)
        write_tensor(tmp_path / "t.btf", t)
        raw = (tmp_path / "t.btf").read_bytes()
        assert raw[:24] == header(dims=(2, 2, 3))
        assert raw[24:] == t.astype("<f4").tobytes()
        assert len(raw) == 24 + 4 * 12

    def test_double_rounds_to_nearest(self, tmp_path, rng):
        t = rng.standard_normal((2, 4, 4))
        write_tensor(tmp_path / "t.btf", t)
        assert read_tensor(tmp_path / "t.btf").tobytes() == t.astype(np.float32).tobytes()

    def test_bad_magic(self, tmp_path):
        (tmp_path / "t.btf").write_bytes(header(magic=b"XXXX") + bytes(16))
        with pytest.raises(TensorFormatError, match="magic"):
            read_tensor(tmp_path / "t.btf")

    def test_bad_version(self, tmp_path):
        (tmp_path / "t.btf").write_bytes(header(version=2) + bytes(16))
        with pytest.raises(TensorFormatError, match="version"):
            read_tensor(tmp_path / "t.btf")

    def test_zero_dimension(self, tmp_path):
        (tmp_path / "t.btf").write_bytes(header(dims=(0, 2, 2)))
        with pytest.raises(TensorFormatError, match="zero"):
            read_tensor(tmp_path / "t.btf")
        with pytest.raises(TensorFormatError):
            write_tensor(tmp_path / "u.btf", np.zeros((0, 2, 2)))

    def test_truncated(self, tmp_path):
        (tmp_path / "t.btf").write_bytes(header() + bytes(15))
        with pytest.raises(TensorFormatError, match="15 bytes"):
            read_tensor(tmp_path / "t.btf")
        (tmp_path / "h.btf").write_bytes(b"GDDT")
        with pytest.raises(TensorFormatError, match="header"):
            read_tensor(tmp_path / "h.btf")

    def test_dimension_overflow(self, tmp_path):
        (tmp_path / "t.btf").write_bytes(header(dims=(1, 2 ** 31, 2 ** 31)))
        with pytest.raises(TensorFormatError, match="overflow"):
            read_tensor(tmp_path / "t.btf")

    def test_non_finite_rejected(self, tmp_path):
        with pytest.raises(TensorFormatError):
            write_tensor(tmp_path / "t.btf", np.full((1, 2, 2), np.nan))


class TestImages:
    def test_quantization(self):
        assert quantize(np.array([0.0, 0.5, 1.0, 1.3, -0.2])).tolist() == [0, 128, 255, 255, 0]

    def test_quantization_range(self):
        assert quantize(np.array([2.0, 4.0]), data_range=4.0).tolist() == [128, 255]

    def test_ppm(self, tmp_path, rng):
        img = rng.random((3, 4, 5))
        write_ppm(tmp_path / "a.ppm", img)
        raw = (tmp_path / "a.ppm").read_bytes()
        assert raw.startswith(b"P6\n5 4\n255\n")
        np.testing.assert_array_equal(read_pnm(tmp_path / "a.ppm"), quantize(img).transpose(1, 2, 0))

    def test_pgm(self, tmp_path, rng):
        img = rng.random((1, 3, 2))
        write_pgm(tmp_path / "a.pgm", img)
        assert (tmp_path / "a.pgm").read_bytes() == b"P5\n2 3\n255\n" + quantize(img[0]).tobytes()

    def test_deterministic_bytes(self, tmp_path, rng):
        img = rng.random((3, 4, 4))
        write_ppm(tmp_path / "a.ppm", img)
        write_ppm(tmp_path / "b.ppm", img)
        assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()

    def test_channel_count_checked(self, tmp_path):
        with pytest.raises(ValueError):
            write_ppm(tmp_path / "a.ppm", np.zeros((2, 4, 4)))
        with pytest.raises(ValueError):
            write_pgm(tmp_path / "a.pgm", np.zeros((3, 4, 4)))


class TestSrfCsv:
    def test_accepts_exact_rows(self, tmp_path):
        (tmp_path / "r.csv").write_text("1,0,0\n0,0.5,0.5\n")
        r = read_srf_csv(tmp_path / "r.csv", 3)
        np.testing.assert_array_equal(r.matrix, [[1, 0, 0], [0, 0.5, 0.5]])

    def test_normalises_with_warning(self, tmp_path):
        (tmp_path / "r.csv").write_text("0.5,0.505,0\n")
        with pytest.warns(UserWarning):
            r = read_srf_csv(tmp_path / "r.csv")
        assert abs(r.matrix.sum() - 1) < 1e-15

    def test_rejects_far_rows(self, tmp_path):
        (tmp_path / "r.csv").write_text("0.5,0.6,0\n")
        with pytest.raises(ValueError):
            read_srf_csv(tmp_path / "r.csv")

    def test_ragged_names_line(self, tmp_path):
        (tmp_path / "r.csv").write_text("0.5,0.5,0\n1,0\n")
        with pytest.raises(ValueError, match=":2:"):
            read_srf_csv(tmp_path / "r.csv")

    def test_column_count(self, tmp_path):
        (tmp_path / "r.csv").write_text("0.5,0.5,0\n")
        with pytest.raises(ValueError, match="4 bands"):
            read_srf_csv(tmp_path / "r.csv", 4)

    def test_round_trip(self, tmp_path, rng):
        m = rng.random((2, 5))
        m /= m.sum(axis=1, keepdims=True)
        write_srf_csv(tmp_path / "r.csv", m)
        np.testing.assert_array_equal(read_srf_csv(tmp_path / "r.csv").matrix, m)


def test_trace_csv_round_trip(tmp_path):
    trace = RunTrace([TraceRow(1, 2.5, 2.0, 0.5, 18.25), TraceRow(50, 0.1, 0.05, 0.05, None)])
    write_trace_csv(tmp_path / "t.csv", trace)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "iteration,loss_total,loss_term1,loss_term2,psnr"
    assert lines[2].endswith(",")
    assert read_trace_csv(tmp_path / "t.csv").rows == trace.rows
