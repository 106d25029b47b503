"""Unsupervised image-pair fusion with a guided deep decoder.

The network's structure acts as the only prior: its parameters are fitted
to a single observation/guidance pair, with no training set.
"""
from .degradation import (SpatialDownsampler, SpectralResponse, apply_spectral_response,
                          image_gradient, synth_scene, wald_protocol)
from .estimator import GuidedDeepDecoder
from .losses import TaskLoss, denoise_loss, hs_sr_loss, pansharpen_loss
from .metrics import MetricReport, evaluate
from .network import GddModel, NetworkConfig, build_gdd, build_variant
from .runner import RunConfig, RunTrace, compare_variants, export_results, optimize

__version__ = "0.1.0"

__all__ = [
    "GuidedDeepDecoder",
    "GddModel",
    "NetworkConfig",
    "build_gdd",
    "build_variant",
    "RunConfig",
    "RunTrace",
    "optimize",
    "compare_variants",
    "export_results",
    "TaskLoss",
    "hs_sr_loss",
    "pansharpen_loss",
    "denoise_loss",
    "SpatialDownsampler",
    "SpectralResponse",
    "apply_spectral_response",
    "image_gradient",
    "wald_protocol",
    "synth_scene",
    "MetricReport",
    "evaluate",
]
