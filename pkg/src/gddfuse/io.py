"""File formats: binary tensors, PPM/PGM images, spectral-response and trace CSVs.

Tensor file layout (all little-endian)::

    b"GDDT" | u32 version=1 | u32 ndim=3 | u32 C | u32 H | u32 W | f32[C*H*W]

The payload is channel-major, row-major.
"""
from __future__ import annotations

import csv
import struct
import warnings
from pathlib import Path

import numpy as np

from .degradation import SpectralResponse

MAGIC = b"GDDT"
VERSION = 1
_HEADER = struct.Struct("<4sIIIII")
_MAX_DIM = 1 << 20


class TensorFormatError(ValueError):
    """Malformed or unsupported tensor file."""


def write_tensor(path, tensor):
    t = np.asarray(tensor)
    if t.ndim != 3:
        raise TensorFormatError(f"{path}: expected a C x H x W tensor, got shape {t.shape}")
    if min(t.shape) < 1:
        raise TensorFormatError(f"{path}: zero-sized dimension in shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise TensorFormatError(f"{path}: tensor contains non-finite samples")
    payload = np.ascontiguousarray(t, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, 3, *t.shape))
        fh.write(payload)


def read_tensor(path):
    """Read a tensor file into a float32 ``C x H x W`` array."""
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TensorFormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, ndim, c, h, w = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if ndim != 3:
        raise TensorFormatError(f"{path}: expected 3 dimensions, header says {ndim}")
    if min(c, h, w) < 1:
        raise TensorFormatError(f"{path}: zero-sized dimension {c}x{h}x{w}")
    if max(c, h, w) > _MAX_DIM:
        raise TensorFormatError(f"{path}: dimension overflow {c}x{h}x{w}")
    expected = 4 * c * h * w
    payload = data[_HEADER.size:]
    if len(payload) != expected:
        raise TensorFormatError(
            f"{path}: payload has {len(payload)} bytes, {c}x{h}x{w} needs {expected}")
    return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(c, h, w)


def quantize(values, data_range=1.0):
    """Clamp to ``[0, range]`` and map to bytes, rounding half away from zero."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, data_range) / data_range * 255.0
    return np.floor(v + 0.5).astype(np.uint8)


def write_ppm(path, image, data_range=1.0):
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"{path}: PPM needs a 3 x H x W image, got {img.shape}")
    _, h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quantize(img, data_range).transpose(1, 2, 0).tobytes())


def write_pgm(path, image, data_range=1.0):
    img = np.asarray(image)
    if img.ndim == 3:
        if img.shape[0] != 1:
            raise ValueError(f"{path}: PGM needs a 1 x H x W image, got {img.shape}")
        img = img[0]
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(quantize(img, data_range).tobytes())


def read_pnm(path):
    """Read a binary P5/P6 file written by this module into a byte array."""
    data = Path(path).read_bytes()
    tokens = data.split(maxsplit=4)
    kind, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    pixels = np.frombuffer(tokens[4], dtype=np.uint8)
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    if kind == b"P5":
        return pixels.reshape(h, w)
    if kind == b"P6":
        return pixels.reshape(h, w, 3)
    raise ValueError(f"{path}: unsupported format {kind!r}")


def read_srf_csv(path, expected_channels=None):
    """Load a ``c x C`` spectral response: one row per output band, no header."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                rows.append([float(cell) for cell in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if len(rows[-1]) != len(rows[0]):
                raise ValueError(
                    f"{path}:{lineno}: ragged row with {len(rows[-1])} values, expected {len(rows[0])}")
    if not rows:
        raise ValueError(f"{path}: empty spectral response")
    m = np.array(rows)
    if expected_channels is not None and m.shape[1] != expected_channels:
        raise ValueError(f"{path}: response has {m.shape[1]} columns, image has {expected_channels} bands")
    if np.any(m < 0):
        raise ValueError(f"{path}: negative response entries")
    return SpectralResponse.normalized(m)


def write_srf_csv(path, response):
    m = response.matrix if isinstance(response, SpectralResponse) else np.asarray(response)
    with open(path, "w", newline="") as fh:
        csv.writer(fh).writerows([[repr(float(v)) for v in row] for row in m])


TRACE_HEADER = ("iteration", "loss_total", "loss_term1", "loss_term2", "psnr")


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_trace_csv(path, trace):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for row in trace.rows:
            writer.writerow([row.iteration, _fmt(row.loss_total), _fmt(row.loss_term1),
                             _fmt(row.loss_term2), _fmt(row.psnr)])


def read_trace_csv(path):
    from .runner import RunTrace, TraceRow

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != TRACE_HEADER:
            warnings.warn(f"{path}: unexpected trace header {header}")
        rows = [TraceRow(int(r[0]), *(float(v) if v else None for v in r[1:])) for r in reader]
    return RunTrace(rows)
