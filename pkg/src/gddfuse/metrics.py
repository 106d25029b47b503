"""Full-reference and no-reference fusion quality indices.

All functions take ``C x H x W`` arrays.  Conventions:

* PSNR uses a data range of 1.0 unless given.
* SSIM uses an 11x11 Gaussian window (sigma 1.5) with symmetric padding.
* Q2^n treats each pixel spectrum as a hypercomplex number (Cayley-Dickson
  construction, bands zero-padded to a power of two) and averages over
  non-overlapping blocks of 32 pixels.
* D_lambda, D_s and QNR use exponents p = q = alpha = beta = 1 and the
  scalar universal image quality index on the same block grid.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import ShapeError

EPS = 1e-12


def _pair(x, ref):
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {ref.shape}")
    if x.ndim != 3:
        raise ShapeError(f"expected C x H x W images, got {x.shape}")
    return x, ref


def rmse(x, ref):
    x, ref = _pair(x, ref)
    return float(np.sqrt(np.mean((x - ref) ** 2)))


def psnr(x, ref, data_range=1.0):
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    if data_range <= 0:
        raise ValueError(f"data_range must be positive, got {data_range}")
    err = rmse(x, ref)
    if err == 0:
        return math.inf
    return 20.0 * math.log10(data_range / err)


def spectral_angle(x, ref):
    """Mean spectral angle in degrees over pixels with non-degenerate spectra."""
    x, ref = _pair(x, ref)
    if x.shape[0] < 2:
        raise ShapeError("spectral angle needs at least two bands")
    dot = np.einsum("chw,chw->hw", x, ref)
    nx = np.sqrt(np.einsum("chw,chw->hw", x, x))
    nr = np.sqrt(np.einsum("chw,chw->hw", ref, ref))
    valid = (nx >= EPS) & (nr >= EPS)
    if not valid.any():
        raise ValueError("all pixels have zero-norm spectra")
    cos = np.clip(dot[valid] / (nx[valid] * nr[valid]), -1.0, 1.0)
    return float(np.degrees(np.arccos(cos)).mean())


def ergas(x, ref, ratio):
    """Relative dimensionless global error; ``ratio`` is high/low resolution."""
    x, ref = _pair(x, ref)
    if ratio < 1:
        raise ValueError(f"ratio must be >= 1, got {ratio}")
    band_rmse = np.sqrt(np.mean((x - ref) ** 2, axis=(1, 2)))
    band_mean = ref.mean(axis=(1, 2))
    zero = np.flatnonzero(np.abs(band_mean) < EPS)
    if zero.size:
        raise ValueError(f"reference band {int(zero[0])} has zero mean")
    return float(100.0 / ratio * np.sqrt(np.mean((band_rmse / band_mean) ** 2)))


# --- SSIM ------------------------------------------------------------------

def _gaussian_window(size=11, sigma=1.5):
    t = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (t / sigma) ** 2)
    return g / g.sum()


def _filter(img, kernel):
    pad = len(kernel) // 2
    p = np.pad(img, pad, mode="symmetric")
    rows = sliding_window_view(p, len(kernel), axis=0) @ kernel
    return sliding_window_view(rows, len(kernel), axis=1) @ kernel


def ssim(x, ref, data_range=1.0):
    x, ref = _pair(x, ref)
    if min(x.shape[1:]) < 8:
        raise ShapeError(f"SSIM needs at least 8x8 pixels, got {x.shape[1:]}")
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    win = _gaussian_window()
    values = []
    for a, b in zip(x, ref):
        mu_a, mu_b = _filter(a, win), _filter(b, win)
        var_a = _filter(a * a, win) - mu_a ** 2
        var_b = _filter(b * b, win) - mu_b ** 2
        cov = _filter(a * b, win) - mu_a * mu_b
        num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
        den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
        values.append(np.mean(num / den))
    return float(np.mean(values))


# --- hypercomplex algebra --------------------------------------------------

def hc_conj(a):
    """Conjugate of hypercomplex numbers stored along the last axis."""
    out = -a
    out[..., 0] = a[..., 0]
    return out


def hc_mul(a, b):
    """Cayley-Dickson product ``(p, q)(r, s) = (pr - s* q, s p + q r*)``."""
    n = a.shape[-1]
    if n == 1:
        return a * b
    h = n // 2
    p, q = a[..., :h], a[..., h:]
    r, s = b[..., :h], b[..., h:]
    return np.concatenate([hc_mul(p, r) - hc_mul(hc_conj(s), q),
                           hc_mul(s, p) + hc_mul(q, hc_conj(r))], axis=-1)


def _q_hypercomplex(a, b):
    """Quality index of two blocks of hypercomplex pixels ``(N, 2^n)``."""
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    da, db = a - mu_a, b - mu_b
    var_a = np.mean(np.sum(da * da, axis=1))
    var_b = np.mean(np.sum(db * db, axis=1))
    cov = hc_mul(da, hc_conj(db)).mean(axis=0)
    ma2, mb2 = np.dot(mu_a, mu_a), np.dot(mu_b, mu_b)
    den = (var_a + var_b) * (ma2 + mb2)
    if var_a + var_b < EPS or ma2 + mb2 < EPS:
        return None
    return 4.0 * np.linalg.norm(cov) * math.sqrt(ma2 * mb2) / den


def _blocks(h, w, block):
    b = max(1, min(block, h, w))
    for i in range(0, h - b + 1, b):
        for j in range(0, w - b + 1, b):
            yield slice(i, i + b), slice(j, j + b)


def q2n(x, ref, block=32):
    """Hypercomplex extension of the universal image quality index."""
    x, ref = _pair(x, ref)
    c, h, w = x.shape
    dim = 1 << max(0, math.ceil(math.log2(c)))
    xa = np.zeros((h, w, dim))
    ra = np.zeros((h, w, dim))
    xa[..., :c] = x.transpose(1, 2, 0)
    ra[..., :c] = ref.transpose(1, 2, 0)
    scores = []
    for si, sj in _blocks(h, w, block):
        q = _q_hypercomplex(ra[si, sj].reshape(-1, dim), xa[si, sj].reshape(-1, dim))
        if q is not None:
            scores.append(q)
    if not scores:
        raise ValueError("every block is degenerate (zero variance or zero mean)")
    return float(np.mean(scores))


def uiqi(a, b, block=32):
    """Scalar universal image quality index of two single-band images,
    averaged over non-overlapping blocks."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"uiqi needs two equal 2-D images, got {a.shape} and {b.shape}")
    scores = []
    for si, sj in _blocks(*a.shape, block):
        pa, pb = a[si, sj], b[si, sj]
        ma, mb = pa.mean(), pb.mean()
        va, vb = pa.var(), pb.var()
        cov = np.mean((pa - ma) * (pb - mb))
        den = (va + vb) * (ma * ma + mb * mb)
        if den < EPS * EPS:
            continue
        scores.append(4.0 * cov * ma * mb / den)
    if not scores:
        raise ValueError("every block is degenerate")
    return float(np.mean(scores))


# --- SCC -------------------------------------------------------------------

LAPLACIAN = np.array([[-1.0, -1.0, -1.0], [-1.0, 8.0, -1.0], [-1.0, -1.0, -1.0]])


def high_pass(band):
    return np.einsum("ijkl,kl->ij", sliding_window_view(band, (3, 3)), LAPLACIAN)


def scc(x, ref):
    """Spatial correlation coefficient of Laplacian-filtered bands."""
    x, ref = _pair(x, ref)
    if min(x.shape[1:]) < 3:
        raise ShapeError(f"SCC needs at least 3x3 pixels, got {x.shape[1:]}")
    values = []
    for a, b in zip(x, ref):
        ha, hb = high_pass(a), high_pass(b)
        ha = ha - ha.mean()
        hb = hb - hb.mean()
        den = math.sqrt(np.sum(ha * ha) * np.sum(hb * hb))
        if den < EPS:
            continue
        values.append(np.sum(ha * hb) / den)
    if not values:
        raise ValueError("every band has a constant high-pass response")
    return float(np.mean(values))


# --- no-reference ----------------------------------------------------------

def _ratio(high, low):
    r = high.shape[-1] // low.shape[-1]
    if r < 1 or high.shape[-1] != r * low.shape[-1] or high.shape[-2] != r * low.shape[-2]:
        raise ShapeError(f"resolutions {high.shape} and {low.shape} are not an integer ratio apart")
    return r


def _block_sizes(high, low, block):
    r = _ratio(high, low)
    hb = max(1, min(block, *high.shape[-2:]))
    return hb, max(1, hb // r)


def d_lambda(fused, ms_low, block=32):
    """Spectral distortion: inter-band quality change between resolutions."""
    fused = np.asarray(fused, dtype=np.float64)
    ms_low = np.asarray(ms_low, dtype=np.float64)
    c = fused.shape[0]
    if c < 2 or ms_low.shape[0] != c:
        raise ShapeError(f"D_lambda needs >= 2 matching bands, got {fused.shape} and {ms_low.shape}")
    hb, lb = _block_sizes(fused, ms_low, block)
    diffs = [abs(uiqi(fused[i], fused[j], hb) - uiqi(ms_low[i], ms_low[j], lb))
             for i in range(c) for j in range(c) if i != j]
    return float(np.mean(diffs))


def d_s(fused, ms_low, pan, pan_low, block=32):
    """Spatial distortion: band-to-pan quality change between resolutions."""
    fused = np.asarray(fused, dtype=np.float64)
    ms_low = np.asarray(ms_low, dtype=np.float64)
    pan = np.asarray(pan, dtype=np.float64).reshape(fused.shape[1:])
    pan_low = np.asarray(pan_low, dtype=np.float64).reshape(ms_low.shape[1:])
    hb, lb = _block_sizes(fused, ms_low, block)
    diffs = [abs(uiqi(fused[b], pan, hb) - uiqi(ms_low[b], pan_low, lb))
             for b in range(fused.shape[0])]
    return float(np.mean(diffs))


def qnr(dl, ds, alpha=1.0, beta=1.0):
    return float((1.0 - dl) ** alpha * (1.0 - ds) ** beta)


# --- report ----------------------------------------------------------------

@dataclass
class MetricReport:
    rmse: Optional[float] = None
    psnr: Optional[float] = None
    sa_degrees: Optional[float] = None
    ergas: Optional[float] = None
    ssim: Optional[float] = None
    q2n: Optional[float] = None
    scc: Optional[float] = None
    d_lambda: Optional[float] = None
    d_s: Optional[float] = None
    qnr: Optional[float] = None

    HEADER = ("rmse", "psnr", "sa_degrees", "ergas", "ssim", "q2n", "scc", "d_lambda", "d_s", "qnr")

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.HEADER)
            writer.writerow(["" if getattr(self, k) is None else repr(float(getattr(self, k)))
                             for k in self.HEADER])

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) != 2 or tuple(rows[0]) != cls.HEADER:
            raise ValueError(f"{path}: not a metric report")
        return cls(**{k: (float(v) if v else None) for k, v in zip(rows[0], rows[1])})


def evaluate(fused, reference=None, ratio=4, ms_low=None, pan=None, pan_low=None, data_range=1.0):
    """Compute every metric the supplied inputs allow."""
    report = MetricReport()
    if reference is not None:
        report.rmse = rmse(fused, reference)
        report.psnr = psnr(fused, reference, data_range)
        if np.shape(fused)[0] >= 2:
            report.sa_degrees = spectral_angle(fused, reference)
        report.ergas = ergas(fused, reference, ratio)
        if min(np.shape(fused)[1:]) >= 8:
            report.ssim = ssim(fused, reference, data_range)
        report.q2n = q2n(fused, reference)
        report.scc = scc(fused, reference)
    if ms_low is not None:
        if np.shape(fused)[0] >= 2:
            report.d_lambda = d_lambda(fused, ms_low)
        if pan is not None and pan_low is not None:
            report.d_s = d_s(fused, ms_low, pan, pan_low)
        if report.d_lambda is not None and report.d_s is not None:
            report.qnr = qnr(report.d_lambda, report.d_s)
    return report
