"""Guided deep decoder and the comparison architectures.

The guidance branch is a U-net style encoder-decoder run on the guidance
image.  Its encoder features (``gamma``) and decoder features (``xi``) gate
the deep decoder, which upsamples a fixed random code tensor to the output
resolution.  ``gamma[k]`` and ``xi[k]`` have the spatial size of deep
decoder stage ``k`` (coarse to fine).

Variants sharing the same blocks and output head:

``GDD``    deep decoder gated by guidance features
``DD``     deep decoder alone, no guidance
``DIP_Z``  U-net hourglass on a random input tensor
``DIP_G``  U-net hourglass on the guidance image
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple

import numpy as np

from . import autodiff as ad
from .autodiff import Node, Parameter, ShapeError
from .rng import Rng

VARIANTS = ("GDD", "DD", "DIP_Z", "DIP_G")
_ALIASES = {"gdd": "GDD", "dd": "DD", "dip-z": "DIP_Z", "dip_z": "DIP_Z",
            "dip-g": "DIP_G", "dip_g": "DIP_G"}


def canonical_variant(name):
    key = _ALIASES.get(str(name).lower(), str(name).upper())
    if key not in VARIANTS:
        raise ValueError(f"unknown variant {name!r}; expected one of {VARIANTS}")
    return key


@dataclass(frozen=True)
class NetworkConfig:
    scales: int = 4
    channels: int = 64
    guidance_channels: int = 64
    leaky_slope: float = 0.1
    seed: int = 0
    dtype: str = "float64"

    def __post_init__(self):
        if self.scales < 2:
            raise ValueError(f"scales must be >= 2, got {self.scales}")
        if self.channels < 1 or self.guidance_channels < 1:
            raise ValueError("channel counts must be positive")
        if not 0 < self.leaky_slope < 1:
            raise ValueError(f"leaky_slope must lie in (0, 1), got {self.leaky_slope}")
        np.dtype(self.dtype)


class GuidanceFeatures(NamedTuple):
    gamma: List[Node]
    xi: List[Node]


def init_code_tensor(rng, shape, dtype=np.float64):
    """Uniform samples in ``[0, 0.1]``."""
    return rng.uniform(0.0, 0.1, tuple(shape)).astype(dtype)


def attention_gate(features, weight, bias, slope=0.1):
    """1x1 conv, leaky ReLU, sigmoid: per-pixel weights in (0, 1)."""
    return ad.sigmoid(ad.leaky_relu(ad.conv2d(features, weight, bias), slope))


def _modulate(f, source, weight, bias, slope, bypass, unit):
    if bypass:
        return f, None
    gate = attention_gate(source, weight, bias, slope)
    if gate.shape != f.shape:
        raise ShapeError(f"{unit}: gate {gate.shape} does not match features {f.shape}")
    return ad.mul(f, gate), gate


def uru(f, gamma, weight, bias, slope=0.1, bypass=False):
    """Upsampling refinement: ``f`` scaled by the gate of encoder features."""
    return _modulate(f, gamma, weight, bias, slope, bypass, "URU")[0]


def fru(f, xi, weight, bias, slope=0.1, bypass=False):
    """Feature refinement: ``f`` scaled by the gate of guidance-decoder features."""
    return _modulate(f, xi, weight, bias, slope, bypass, "FRU")[0]


class GddModel:
    """Parameterised network for one image pair.

    Parameters are initialised from ``config.seed``; the code tensor is
    drawn once and never changes.
    """

    def __init__(self, config, guidance_shape, out_channels, variant="GDD"):
        self.config = config
        self.variant = canonical_variant(variant)
        self.guidance_shape = tuple(int(s) for s in guidance_shape)
        self.out_channels = int(out_channels)
        self.dtype = np.dtype(config.dtype)
        self.bypass_gates = False
        self.channel_weights = None
        if len(self.guidance_shape) != 3:
            raise ShapeError(f"guidance shape must be (c, H, W), got {guidance_shape}")
        _, h, w = self.guidance_shape
        step = 2 ** config.scales
        if h % step or w % step:
            raise ShapeError(
                f"{config.scales} scales need height and width divisible by 2**{config.scales}"
                f" = {step}, got {h}x{w}")
        self.params = {}
        rng = Rng(config.seed)
        code_rng = rng.spawn()
        self._rng = rng
        k = config.scales
        if self.variant in ("GDD", "DD"):
            self.code_shape = (config.channels, h // step, w // step)
        elif self.variant == "DIP_Z":
            self.code_shape = (config.channels, h, w)
        else:
            self.code_shape = None
        self.z = None if self.code_shape is None else init_code_tensor(code_rng, self.code_shape, self.dtype)

        if self.variant == "GDD":
            self._build_unet("guide", self.guidance_shape[0], config.guidance_channels)
        if self.variant in ("GDD", "DD"):
            c = config.channels
            for s in range(1, k + 1):
                self._norm(f"dd{s}.norm0", c)
                if self.variant == "GDD":
                    self._conv(f"dd{s}.uru", config.guidance_channels, c, 1)
                self._conv(f"dd{s}.conv", c, c, 3)
                self._norm(f"dd{s}.norm1", c)
                if self.variant == "GDD":
                    self._conv(f"dd{s}.fru", config.guidance_channels, c, 1)
        elif self.variant == "DIP_Z":
            self._build_unet("hourglass", config.channels, config.channels)
        else:
            self._build_unet("hourglass", self.guidance_shape[0], config.channels)
        self._conv("head", config.channels, self.out_channels, 1)
        del self._rng

    # -- construction -------------------------------------------------------

    def _conv(self, name, cin, cout, k):
        bound = math.sqrt(6.0 / (cin * k * k))
        w = self._rng.uniform(-bound, bound, (cout, cin, k, k)).astype(self.dtype)
        self.params[f"{name}.weight"] = Parameter(w, name=f"{name}.weight")
        self.params[f"{name}.bias"] = Parameter(np.zeros(cout, self.dtype), name=f"{name}.bias")

    def _norm(self, name, c):
        self.params[f"{name}.gain"] = Parameter(np.ones(c, self.dtype), name=f"{name}.gain")
        self.params[f"{name}.shift"] = Parameter(np.zeros(c, self.dtype), name=f"{name}.shift")

    def _block_params(self, name, cin, c):
        self._conv(f"{name}.conv1", cin, c, 3)
        self._norm(f"{name}.norm1", c)
        self._conv(f"{name}.conv2", c, c, 3)
        self._norm(f"{name}.norm2", c)

    def _build_unet(self, prefix, cin, c):
        k = self.config.scales
        self._block_params(f"{prefix}.enc0", cin, c)
        for level in range(1, k + 1):
            self._conv(f"{prefix}.down{level}", c, c, 3)
            self._block_params(f"{prefix}.enc{level}", c, c)
        for level in range(k - 1, -1, -1):
            self._block_params(f"{prefix}.dec{level}", 2 * c, c)

    # -- forward pieces ----------------------------------------------------

    def _p(self, name):
        return self.params[name]

    def _conv_apply(self, x, name, stride=1):
        return ad.conv2d(x, self._p(f"{name}.weight"), self._p(f"{name}.bias"), stride=stride)

    def _norm_apply(self, x, name):
        return ad.channel_norm(x, self._p(f"{name}.gain"), self._p(f"{name}.shift"))

    def _block(self, x, name):
        slope = self.config.leaky_slope
        for i in (1, 2):
            x = self._conv_apply(x, f"{name}.conv{i}")
            x = ad.leaky_relu(self._norm_apply(x, f"{name}.norm{i}"), slope)
        return x

    def _unet(self, x, prefix):
        k = self.config.scales
        enc = [self._block(x, f"{prefix}.enc0")]
        for level in range(1, k + 1):
            d = self._conv_apply(enc[-1], f"{prefix}.down{level}", stride=2)
            enc.append(self._block(d, f"{prefix}.enc{level}"))
        cur = enc[k]
        dec = []
        for level in range(k - 1, -1, -1):
            up = ad.bilinear_upsample2x(cur)
            cur = self._block(ad.concat_channels([up, enc[level]]), f"{prefix}.dec{level}")
            dec.append(cur)
        return enc, dec

    def _check_guidance(self, g):
        g = ad.constant(np.asarray(g.value if isinstance(g, Node) else g, dtype=self.dtype))
        if g.shape != self.guidance_shape:
            raise ShapeError(f"guidance shape {g.shape} does not match build shape {self.guidance_shape}")
        return g

    def guidance_forward(self, g):
        """Multi-scale guidance features, coarse to fine."""
        if self.variant != "GDD":
            raise ValueError(f"variant {self.variant} has no guidance branch")
        g = self._check_guidance(g)
        k = self.config.scales
        enc, dec = self._unet(g, "guide")
        gamma = [enc[k - s] for s in range(1, k + 1)]
        return GuidanceFeatures(gamma, dec)

    def _deep_decoder(self, features=None, record=None):
        slope = self.config.leaky_slope
        f = ad.constant(self.z)
        for s in range(1, self.config.scales + 1):
            f = self._norm_apply(ad.bilinear_upsample2x(f), f"dd{s}.norm0")
            if features is not None:
                gamma = features.gamma[s - 1]
                if gamma.shape[1:] != f.shape[1:]:
                    raise ShapeError(f"stage {s}: encoder feature {gamma.shape} vs decoder {f.shape}")
                f, gate = _modulate(f, gamma, self._p(f"dd{s}.uru.weight"), self._p(f"dd{s}.uru.bias"),
                                    slope, self.bypass_gates, "URU")
                if record is not None:
                    record.append((s, "URU", gate))
            f = self._conv_apply(f, f"dd{s}.conv")
            f = ad.leaky_relu(self._norm_apply(f, f"dd{s}.norm1"), slope)
            if features is not None:
                xi = features.xi[s - 1]
                if xi.shape[1:] != f.shape[1:]:
                    raise ShapeError(f"stage {s}: guidance-decoder feature {xi.shape} vs decoder {f.shape}")
                f, gate = _modulate(f, xi, self._p(f"dd{s}.fru.weight"), self._p(f"dd{s}.fru.bias"),
                                    slope, self.bypass_gates, "FRU")
                if record is not None:
                    record.append((s, "FRU", gate))
        return f

    def forward(self, g=None, record=None):
        """Reconstruction ``C x H x W`` with values in (0, 1).

        ``g`` may be omitted for the variants that ignore the guidance.
        """
        if self.variant == "GDD":
            f = self._deep_decoder(self.guidance_forward(g), record)
        elif self.variant == "DD":
            f = self._deep_decoder()
        elif self.variant == "DIP_Z":
            f = self._unet(ad.constant(self.z), "hourglass")[1][-1]
        else:
            f = self._unet(self._check_guidance(g), "hourglass")[1][-1]
        out = ad.sigmoid(self._conv_apply(f, "head"))
        expected = (self.out_channels,) + self.guidance_shape[1:]
        if out.shape != expected:
            raise ShapeError(f"output {out.shape} differs from declared {expected}")
        return out

    __call__ = forward

    # -- inspection ---------------------------------------------------------

    def parameters(self):
        params = list(self.params.values())
        if self.channel_weights is not None:
            params.append(self.channel_weights)
        return params

    def n_parameters(self):
        return sum(p.value.size for p in self.parameters())

    def unreachable_parameters(self, g=None):
        """Names of network parameters that do not influence the output."""
        out = self.forward(g)
        seen = set()
        stack = [out]
        while stack:
            node = stack.pop()
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.extend(node.parents)
        return [name for name, p in self.params.items() if id(p) not in seen]

    def export_attention_maps(self, g):
        """All gate outputs as ``(scale, unit, channel, 1 x h x w array)``."""
        if self.variant != "GDD":
            raise ValueError(f"attention maps only exist for GDD, not {self.variant}")
        record = []
        self.forward(g, record=record)
        maps = []
        for scale, unit, gate in record:
            if gate is None:
                continue
            for ch in range(gate.shape[0]):
                maps.append((scale, unit, ch, gate.value[ch:ch + 1].copy()))
        return maps


def build_gdd(config, guidance_shape, out_channels):
    return GddModel(config, guidance_shape, out_channels, "GDD")


def build_variant(kind, config, guidance_shape, out_channels):
    return GddModel(config, guidance_shape, out_channels, kind)
