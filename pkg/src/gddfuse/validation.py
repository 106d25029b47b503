"""Input checks shared by the estimator and the command line."""
from __future__ import annotations

import numpy as np

from .autodiff import ShapeError


def check_image(x, name="image", n_channels=None, finite=True):
    """Return ``x`` as a float64 ``C x H x W`` array.

    2-D input is promoted to a single channel.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ShapeError(f"{name} must be a non-empty C x H x W array, got shape {np.shape(x)}")
    if n_channels is not None and arr.shape[0] != n_channels:
        raise ShapeError(f"{name} must have {n_channels} channels, got {arr.shape[0]}")
    if finite and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite samples")
    return arr


def check_divisible(shape, factor, name="image"):
    h, w = shape[-2:]
    if h % factor or w % factor:
        raise ShapeError(f"{name} spatial size {h}x{w} must be divisible by {factor}")


def check_pair(observed, guidance, task):
    """Validate an observation/guidance pair for ``task``; returns both arrays."""
    y = check_image(observed, "observed image")
    if task == "denoise" and guidance is None:
        raise ValueError("denoising still needs a guidance image for the network input")
    g = check_image(guidance, "guidance image")
    if task == "denoise":
        if y.shape[1:] != g.shape[1:]:
            raise ShapeError(f"observed {y.shape} and guidance {g.shape} must share spatial size")
        return y, g
    hy, wy = y.shape[1:]
    hg, wg = g.shape[1:]
    if hg % hy or wg % wy or hg // hy != wg // wy or hg == hy:
        raise ShapeError(
            f"guidance {g.shape} must be an integer upscaling (>= 2) of observation {y.shape}")
    if task == "pansharpen" and g.shape[0] not in (1, y.shape[0]):
        raise ShapeError(f"pansharpening guidance must have 1 or {y.shape[0]} bands, got {g.shape[0]}")
    if task == "hs_sr" and g.shape[0] >= y.shape[0]:
        raise ShapeError(f"guidance bands ({g.shape[0]}) must be fewer than observed bands ({y.shape[0]})")
    return y, g
