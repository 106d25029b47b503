"""Forward observation operators and synthetic benchmark generation.

Spatial operators are separable, so each is stored as a pair of row/column
matrices and applied with :func:`~gddfuse.autodiff.spatial_linear`.  All
operators accept either plain arrays (returning arrays) or graph nodes
(returning differentiable nodes).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Parameter, ShapeError
from .rng import Rng

KINDS = ("block", "bicubic", "gaussian")


def _lift(fn, x):
    if isinstance(x, Node):
        return fn(x)
    return fn(ad.constant(np.asarray(x, dtype=np.float64))).value


# --- 1-D kernels -----------------------------------------------------------

def cubic_kernel(t, a=-0.5):
    """Keys cubic convolution kernel (Catmull-Rom for ``a = -0.5``)."""
    t = np.abs(np.asarray(t, dtype=np.float64))
    out = np.zeros_like(t)
    near = t <= 1
    far = (t > 1) & (t < 2)
    out[near] = (a + 2) * t[near] ** 3 - (a + 3) * t[near] ** 2 + 1
    out[far] = a * t[far] ** 3 - 5 * a * t[far] ** 2 + 8 * a * t[far] - 4 * a
    return out


def reflect_index(i, n):
    """Mirror an out-of-range index about the edge (``-1 -> 0``, ``n -> n-1``)."""
    period = 2 * n
    i = i % period
    return i if i < n else period - 1 - i


@lru_cache(maxsize=None)
def _block_matrix(n, r):
    m = np.zeros((n // r, n))
    for o in range(n // r):
        m[o, o * r:(o + 1) * r] = 1.0 / r
    return m


def _kernel_matrix(n, r, weight_fn, support):
    """Decimation matrix sampling at block centres with a reflected boundary."""
    m = np.zeros((n // r, n))
    for o in range(n // r):
        center = (o + 0.5) * r - 0.5
        lo = math.floor(center - support) + 1
        hi = math.ceil(center + support)
        taps = np.arange(lo, hi)
        weights = weight_fn(taps - center)
        for j, wj in zip(taps, weights):
            m[o, reflect_index(int(j), n)] += wj
        m[o] /= m[o].sum()
    return m


@lru_cache(maxsize=None)
def _bicubic_matrix(n, r):
    # anti-aliased: kernel stretched by the factor
    return _kernel_matrix(n, r, lambda d: cubic_kernel(d / r), 2.0 * r)


@lru_cache(maxsize=None)
def _gaussian_matrix(n, r):
    sigma = 0.5 * r
    radius = math.ceil(2 * sigma)
    return _kernel_matrix(n, r, lambda d: np.exp(-0.5 * (d / sigma) ** 2), radius + 0.5)


@dataclass(frozen=True)
class SpatialDownsampler:
    """Spatial degradation ``S``: blur and decimate by an integer factor."""

    kind: str = "block"
    factor: int = 4

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown downsampler kind {self.kind!r}; expected one of {KINDS}")
        if int(self.factor) != self.factor or self.factor < 2:
            raise ValueError(f"downsampling factor must be an integer >= 2, got {self.factor}")

    def matrices(self, height, width):
        r = self.factor
        if height % r or width % r:
            raise ShapeError(
                f"{self.kind} downsampling by {r} needs height and width divisible by {r}, "
                f"got {height}x{width}")
        build = {"block": _block_matrix, "bicubic": _bicubic_matrix,
                 "gaussian": _gaussian_matrix}[self.kind]
        return build(height, r), build(width, r)

    def __call__(self, x):
        def op(node):
            if node.value.ndim != 3:
                raise ShapeError(f"expected a C x H x W image, got shape {node.shape}")
            rows, cols = self.matrices(*node.shape[1:])
            out = ad.spatial_linear(node, rows, cols)
            out.op = f"{self.kind}_down{self.factor}"
            return out

        return _lift(op, x)


def block_average_downsample(x, r):
    """Mean over non-overlapping ``r x r`` blocks."""
    return SpatialDownsampler("block", r)(x)


def bicubic_downsample(x, factor):
    """Anti-aliased Catmull-Rom decimation with reflected borders."""
    return SpatialDownsampler("bicubic", factor)(x)


@lru_cache(maxsize=None)
def _bicubic_up_matrix(n, r):
    m = np.zeros((n * r, n))
    for o in range(n * r):
        src = (o + 0.5) / r - 0.5
        taps = np.arange(math.floor(src) - 1, math.floor(src) + 3)
        for j, wj in zip(taps, cubic_kernel(taps - src)):
            m[o, reflect_index(int(j), n)] += wj
    return m


def bicubic_upsample(x, factor):
    """Catmull-Rom interpolation onto a grid ``factor`` times finer."""
    def op(node):
        _, h, w = node.shape
        return ad.spatial_linear(node, _bicubic_up_matrix(h, factor), _bicubic_up_matrix(w, factor))

    return _lift(op, x)


# --- spectral response -----------------------------------------------------

class SpectralResponse:
    """Row-stochastic ``c x C`` matrix integrating ``C`` bands into ``c``."""

    def __init__(self, matrix, tol=1e-9):
        m = np.array(matrix, dtype=np.float64, ndmin=2)
        if m.ndim != 2:
            raise ValueError(f"spectral response must be 2-D, got shape {m.shape}")
        if m.shape[0] >= m.shape[1]:
            raise ValueError(f"spectral response must have fewer rows than columns, got {m.shape}")
        if np.any(m < 0):
            raise ValueError("spectral response entries must be nonnegative")
        sums = m.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
        if bad.size:
            raise ValueError(f"spectral response rows {bad.tolist()} do not sum to 1: {sums[bad]}")
        self.matrix = m

    @classmethod
    def contiguous(cls, n_bands, n_groups):
        """Average equal-width contiguous band groups (8 -> 3 gives 3/3/2)."""
        if not 1 <= n_groups < n_bands:
            raise ValueError(f"cannot group {n_bands} bands into {n_groups}")
        m = np.zeros((n_groups, n_bands))
        for row, idx in enumerate(np.array_split(np.arange(n_bands), n_groups)):
            m[row, idx] = 1.0 / len(idx)
        return cls(m)

    @classmethod
    def normalized(cls, matrix, lo=0.99, hi=1.01, tol=1e-6):
        """Accept rows summing to 1 within ``tol``; rescale rows in ``[lo, hi]``."""
        m = np.array(matrix, dtype=np.float64, ndmin=2)
        sums = m.sum(axis=1)
        out_of_range = np.flatnonzero((sums < lo) | (sums > hi))
        if out_of_range.size:
            raise ValueError(
                f"spectral response rows {out_of_range.tolist()} sum to {sums[out_of_range]}, "
                f"outside [{lo}, {hi}]")
        off = np.abs(sums - 1.0) > tol
        if off.any():
            warnings.warn(f"normalising spectral response rows {np.flatnonzero(off).tolist()}",
                          stacklevel=2)
            m = m / sums[:, None]
        return cls(m, tol=tol)

    @property
    def shape(self):
        return self.matrix.shape

    def __call__(self, x):
        return apply_spectral_response(x, self)

    def __repr__(self):
        return f"SpectralResponse({self.shape[0]}x{self.shape[1]})"


def apply_spectral_response(x, response):
    matrix = response.matrix if isinstance(response, SpectralResponse) else np.asarray(response)
    return _lift(lambda node: ad.channel_mix(node, matrix), x)


def channel_weights(n_channels, dtype=np.float64):
    """Learnable per-band diagonal weights, initialised to one."""
    return Parameter(np.ones(n_channels, dtype=dtype), name="D")


# --- image gradient --------------------------------------------------------

@lru_cache(maxsize=None)
def _diff_matrix(n):
    m = np.zeros((n, n))
    idx = np.arange(n - 1)
    m[idx, idx] = -1.0
    m[idx, idx + 1] = 1.0
    return m


def image_gradient(x):
    """Forward differences: width direction in the first ``C`` output
    channels, height direction in the next ``C``.  The last column/row
    difference is zero (replicated border)."""

    def op(node):
        _, h, w = node.shape
        if h < 2 or w < 2:
            raise ShapeError(f"image_gradient needs at least 2x2 pixels, got {h}x{w}")
        dx = ad.spatial_linear(node, np.eye(h), _diff_matrix(w))
        dy = ad.spatial_linear(node, _diff_matrix(h), np.eye(w))
        out = ad.concat_channels([dx, dy])
        out.op = "image_gradient"
        return out

    return _lift(op, x)


# --- Wald protocol ---------------------------------------------------------

class WaldTriplet(NamedTuple):
    observed: np.ndarray
    guidance: Optional[np.ndarray]
    reference: np.ndarray


def wald_protocol(hr_image, factor, kind="block", guidance=None, srf=None):
    """Simulate a low-resolution observation from a high-resolution image.

    The guidance is ``srf`` applied to ``hr_image`` when a spectral response
    is given, otherwise ``guidance`` is passed through unchanged.
    """
    hr = np.asarray(hr_image, dtype=np.float64)
    observed = SpatialDownsampler(kind, factor)(hr)
    if srf is not None:
        g = apply_spectral_response(hr, srf)
    elif guidance is not None:
        g = np.asarray(guidance, dtype=np.float64)
        if g.shape[1:] != hr.shape[1:]:
            raise ShapeError(f"guidance {g.shape} does not match image {hr.shape}")
    else:
        g = None
    return WaldTriplet(observed, g, hr)


# --- synthetic scenes ------------------------------------------------------

@dataclass(frozen=True)
class SceneConfig:
    n_rectangles: int = 14
    min_side: int = 3
    max_fraction: float = 0.5
    gradient_strength: float = 0.4
    n_lines: int = 3


def synth_scene(seed, channels, size, config=SceneConfig()):
    """Piecewise-smooth scene of random rectangles with random spectra.

    Values lie in ``[0, 1]``; the same seed gives a bit-identical scene.
    """
    if size < 16:
        raise ValueError(f"scene size must be at least 16, got {size}")
    rng = Rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1.0)

    def smooth_field():
        ax, ay = rng.uniform(-1.0, 1.0, 2)
        field = 0.5 + 0.5 * (ax * (xx - 0.5) + ay * (yy - 0.5))
        return 1.0 - config.gradient_strength + config.gradient_strength * field

    spectrum = rng.uniform(0.1, 0.9, channels)
    img = spectrum[:, None, None] * smooth_field()[None]
    max_side = max(config.min_side + 1, int(config.max_fraction * size))
    for _ in range(config.n_rectangles):
        hh = rng.integers(config.min_side, max_side)
        ww = rng.integers(config.min_side, max_side)
        top = rng.integers(0, size - hh + 1)
        left = rng.integers(0, size - ww + 1)
        spectrum = rng.uniform(0.0, 1.0, channels)
        field = smooth_field()[top:top + hh, left:left + ww]
        img[:, top:top + hh, left:left + ww] = spectrum[:, None, None] * field[None]
    for _ in range(config.n_lines):
        spectrum = rng.uniform(0.0, 1.0, channels)
        pos = rng.integers(0, size)
        start = rng.integers(0, size // 2)
        stop = rng.integers(start + size // 4, size + 1)
        if rng.random() < 0.5:
            img[:, pos, start:stop] = spectrum[:, None]
        else:
            img[:, start:stop, pos] = spectrum[:, None]
    return np.clip(img, 0.0, 1.0)


def panchromatic(image, weights=None):
    """Single-band guidance as a weighted band average (uniform by default)."""
    img = np.asarray(image, dtype=np.float64)
    if weights is None:
        weights = np.full(img.shape[0], 1.0 / img.shape[0])
    weights = np.asarray(weights, dtype=np.float64)
    return np.tensordot(weights, img, axes=1)[None]
