"""Task losses for hyperspectral super-resolution, pansharpening and denoising.

Each loss takes the network output as a graph node and fixed observations
as arrays and returns a ``1 x 1 x 1`` node.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Parameter, ShapeError
from .degradation import (SpatialDownsampler, SpectralResponse, apply_spectral_response,
                          channel_weights, image_gradient)

TASKS = ("hs_sr", "pansharpen", "denoise")


def canonical_task(name):
    key = str(name).lower().replace("-", "_")
    if key not in TASKS:
        raise ValueError(f"unknown task {name!r}; expected one of {TASKS}")
    return key


def _const(x, dtype):
    return ad.constant(np.asarray(x, dtype=dtype))


def _check_mu(mu):
    if not (math.isfinite(mu) and mu > 0):
        raise ValueError(f"mu must be finite and positive, got {mu}")


def spectral_fidelity(x, y, downsampler):
    """``||S(X) - Y||_F^2``."""
    sx = downsampler(x)
    y = _const(y, x.value.dtype)
    if sx.shape != y.shape:
        raise ShapeError(f"downsampled output {sx.shape} does not match observation {y.shape}")
    return ad.square_sum(ad.sub(sx, y))


def hs_sr_terms(x, y, g, downsampler, response):
    rx = apply_spectral_response(x, response)
    g = _const(g, x.value.dtype)
    if rx.shape != g.shape:
        raise ShapeError(f"spectral projection {rx.shape} does not match guidance {g.shape}")
    return spectral_fidelity(x, y, downsampler), ad.square_sum(ad.sub(rx, g))


def hs_sr_loss(x, y, g, downsampler, response, mu=1.0):
    """``mu * ||S(X) - Y||^2 + ||R(X) - G||^2``."""
    _check_mu(mu)
    t1, t2 = hs_sr_terms(x, y, g, downsampler, response)
    return ad.add(ad.scalar_mul(t1, mu), t2)


def expand_guidance(pan, n_channels):
    """Replicate a single-band guidance image to ``n_channels`` bands."""
    pan = np.asarray(pan, dtype=np.float64)
    if pan.ndim == 2:
        pan = pan[None]
    if pan.shape[0] != 1:
        raise ShapeError(f"panchromatic guidance must have one band, got {pan.shape}")
    return np.repeat(pan, n_channels, axis=0)


def pansharpen_terms(x, y, g_expanded, downsampler, weights):
    c = x.shape[0]
    g = np.asarray(g_expanded, dtype=x.value.dtype)
    if g.shape != x.shape:
        raise ShapeError(f"expanded guidance {g.shape} does not match output {x.shape}")
    if weights.shape != (c,):
        raise ShapeError(f"channel weights {weights.shape} do not match {c} bands")
    scaled = _scale_gradient(image_gradient(x), weights)
    grad_g = _const(image_gradient(g), x.value.dtype)
    return spectral_fidelity(x, y, downsampler), ad.abs_sum(ad.sub(scaled, grad_g))


def _scale_gradient(grad, weights):
    # one weight per band, shared by its x- and y-difference channels
    w = ad.constant(weights)
    doubled = Node(np.concatenate([w.value, w.value]), (w,),
                   lambda g: (g[:w.shape[0]] + g[w.shape[0]:],), "repeat2")
    return ad.channel_scale(grad, doubled)


def pansharpen_loss(x, y, g_expanded, downsampler, weights, mu=1.0):
    """``mu * ||S(X) - Y||^2 + | D grad(X) - grad(G) |_1``."""
    _check_mu(mu)
    t1, t2 = pansharpen_terms(x, y, g_expanded, downsampler, weights)
    return ad.add(ad.scalar_mul(t1, mu), t2)


def denoise_loss(x, y):
    """``||X - Y||_F^2``; the guidance only enters through the network."""
    y = _const(y, x.value.dtype)
    if x.shape != y.shape:
        raise ShapeError(f"output {x.shape} does not match observation {y.shape}")
    return ad.square_sum(ad.sub(x, y))


@dataclass
class TaskLoss:
    """A task loss bound to one observed image pair.

    ``terms(x)`` returns the two unweighted terms; calling the object returns
    ``mu * term1 + term2``.
    """

    task: str
    observed: np.ndarray
    guidance: Optional[np.ndarray] = None
    mu: float = 1.0
    downsampler: Optional[SpatialDownsampler] = None
    response: Optional[SpectralResponse] = None
    weights: Optional[Parameter] = field(default=None, repr=False)

    def __post_init__(self):
        self.task = canonical_task(self.task)
        _check_mu(self.mu)
        self.observed = np.asarray(self.observed, dtype=np.float64)
        if self.task != "denoise" and self.guidance is None:
            raise ValueError(f"task {self.task} needs a guidance image")
        if self.task == "hs_sr" and (self.downsampler is None or self.response is None):
            raise ValueError("hs_sr needs a spatial downsampler and a spectral response")
        if self.task == "pansharpen":
            if self.downsampler is None:
                raise ValueError("pansharpen needs a spatial downsampler")
            c = self.observed.shape[0]
            self.guidance = expand_guidance(self.guidance, c) if np.asarray(self.guidance).shape[0] == 1 \
                else np.asarray(self.guidance, dtype=np.float64)
            if self.weights is None:
                self.weights = channel_weights(c)

    def terms(self, x):
        if self.task == "hs_sr":
            return hs_sr_terms(x, self.observed, self.guidance, self.downsampler, self.response)
        if self.task == "pansharpen":
            return pansharpen_terms(x, self.observed, self.guidance, self.downsampler, self.weights)
        zero = ad.constant(np.zeros((1, 1, 1), dtype=x.value.dtype))
        return denoise_loss(x, self.observed), zero

    def combine(self, t1, t2):
        return ad.add(ad.scalar_mul(t1, self.mu), t2)

    def __call__(self, x):
        return self.combine(*self.terms(x))

    def balance(self, x):
        """Set ``mu`` so both terms are equal at ``x``; returns the new value."""
        t1, t2 = (float(t.value.reshape(())) for t in self.terms(ad.constant(x)))
        if t1 > 0 and t2 > 0:
            self.mu = t2 / t1
        return self.mu

    def trainable(self):
        return [self.weights] if self.weights is not None else []
