"""Central finite-difference checks of the analytic gradients."""
from __future__ import annotations

from typing import Callable, Dict, List, NamedTuple

import numpy as np

from . import autodiff as ad
from . import degradation as dg
from . import losses
from .network import GddModel, NetworkConfig, fru, uru
from .rng import Rng


class GradResult(NamedTuple):
    name: str
    error: float
    tol: float

    @property
    def ok(self):
        return self.error < self.tol


def relative_error(analytic, numeric):
    """``max|a - n| / max(max|a|, max|n|)`` over all entries."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.abs(a).max(initial=0.0), np.abs(n).max(initial=0.0), 1e-300)
    return float(np.abs(a - n).max(initial=0.0) / scale)


def numeric_gradient(f, x, rel_step=1e-5):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (mutated in place)."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        h = rel_step * max(1.0, abs(orig))
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def _scalarize(out, projection):
    if out.value.size == 1:
        return out
    return ad.sum_all(ad.mul(out, ad.constant(projection)))


def check_function(name, fn: Callable[..., ad.Node], inputs: Dict[str, np.ndarray],
                   tol=1e-5, seed=0, rel_step=1e-5):
    """Compare analytic and numeric gradients of ``fn`` w.r.t. every input.

    Non-scalar outputs are reduced with a fixed random projection.
    """
    leaves = {k: ad.Parameter(np.array(v, dtype=np.float64), name=k) for k, v in inputs.items()}
    out = fn(**leaves)
    projection = Rng(seed).uniform(-1.0, 1.0, out.shape) if out.value.size > 1 else None
    ad.backward(_scalarize(out, projection))

    def value():
        return float(_scalarize(fn(**leaves), projection).value.reshape(()))

    worst = 0.0
    for leaf in leaves.values():
        numeric = numeric_gradient(value, leaf.value, rel_step)
        worst = max(worst, relative_error(leaf.grad, numeric))
    return GradResult(name, worst, tol)


def check_model(config=NetworkConfig(scales=2, channels=8, guidance_channels=8, seed=3),
                guidance_shape=(3, 16, 16), out_channels=4, n_samples=20, tol=1e-4,
                seed=11, rel_step=1e-6, variant="GDD"):
    """End-to-end check on ``n_samples`` random parameter entries of a small network."""
    rng = Rng(seed)
    model = GddModel(config, guidance_shape, out_channels, variant)
    g = rng.uniform(0.0, 1.0, guidance_shape)
    h, w = guidance_shape[1:]
    x_true = rng.uniform(0.0, 1.0, (out_channels, h, w))
    response = dg.SpectralResponse.contiguous(out_channels, guidance_shape[0])
    down = dg.SpatialDownsampler("block", 2)
    y = down(x_true)
    gg = dg.apply_spectral_response(x_true, response)

    def loss():
        return losses.hs_sr_loss(model.forward(g), y, gg, down, response, mu=1.0)

    ad.backward(loss())
    names = list(model.params)
    analytic, numeric = [], []
    for _ in range(n_samples):
        p = model.params[names[rng.integers(0, len(names))]]
        idx = rng.integers(0, p.value.size)
        flat = p.value.reshape(-1)
        orig = flat[idx]
        step = rel_step * max(1.0, abs(orig))
        flat[idx] = orig + step
        up = float(loss().value.reshape(()))
        flat[idx] = orig - step
        down_v = float(loss().value.reshape(()))
        flat[idx] = orig
        analytic.append(p.grad.reshape(-1)[idx])
        numeric.append((up - down_v) / (2 * step))
    return GradResult(f"end-to-end {variant}", relative_error(analytic, numeric), tol)


def operation_checks(seed=0, tol=1e-5) -> List[GradResult]:
    rng = Rng(seed)

    def r(*shape, lo=-1.0, hi=1.0):
        return rng.uniform(lo, hi, shape)

    response = dg.SpectralResponse(np.array([[0.2, 0.3, 0.5], [0.6, 0.4, 0.0]]))
    block = dg.SpatialDownsampler("block", 2)
    bicubic = dg.SpatialDownsampler("bicubic", 2)
    gauss = dg.SpatialDownsampler("gaussian", 2)
    y_low = r(2, 2, 2)
    g2 = r(2, 4, 4)
    pan = r(2, 4, 4)
    y_hs, g_hs = r(3, 2, 2), r(2, 4, 4)
    cases = [
        ("conv3x3", lambda x, w, b: ad.conv2d(x, w, b), dict(x=r(2, 4, 4), w=r(3, 2, 3, 3), b=r(3))),
        ("conv1x1", lambda x, w, b: ad.conv2d(x, w, b), dict(x=r(2, 4, 4), w=r(3, 2, 1, 1), b=r(3))),
        ("conv3x3 stride 2", lambda x, w, b: ad.conv2d(x, w, b, stride=2),
         dict(x=r(2, 4, 4), w=r(3, 2, 3, 3), b=r(3))),
        ("bilinear_upsample2x", ad.bilinear_upsample2x, dict(x=r(2, 4, 4))),
        ("leaky_relu", lambda x: ad.leaky_relu(x, 0.1), dict(x=r(2, 4, 4))),
        ("sigmoid", ad.sigmoid, dict(x=r(2, 4, 4, lo=-4, hi=4))),
        ("channel_norm", lambda x, g, s: ad.channel_norm(x, g, s),
         dict(x=r(2, 4, 4), g=r(2, lo=0.5, hi=1.5), s=r(2))),
        ("elementwise_mul", ad.mul, dict(a=r(2, 4, 4), b=r(2, 4, 4))),
        ("add", ad.add, dict(a=r(2, 4, 4), b=r(2, 4, 4))),
        ("sub", ad.sub, dict(a=r(2, 4, 4), b=r(2, 4, 4))),
        ("scalar_mul", lambda a: ad.scalar_mul(a, -1.7), dict(a=r(2, 4, 4))),
        ("concat_channels", lambda a, b: ad.concat_channels([a, b]), dict(a=r(2, 4, 4), b=r(1, 4, 4))),
        ("sum", ad.sum_all, dict(a=r(2, 4, 4))),
        ("abs_sum", ad.abs_sum, dict(a=r(2, 4, 4))),
        ("square_sum", ad.square_sum, dict(a=r(2, 4, 4))),
        ("channel_scale", lambda x, w: ad.channel_scale(x, w), dict(x=r(2, 4, 4), w=r(2))),
        ("block_average", block, dict(x=r(2, 4, 4))),
        ("bicubic_downsample", bicubic, dict(x=r(2, 4, 4))),
        ("gaussian_downsample", gauss, dict(x=r(2, 4, 4))),
        ("spectral_response", response, dict(x=r(3, 4, 4))),
        ("image_gradient", dg.image_gradient, dict(x=r(2, 4, 4))),
        ("uru", lambda f, s, w, b: uru(f, s, w, b), dict(f=r(2, 4, 4), s=r(2, 4, 4), w=r(2, 2, 1, 1), b=r(2))),
        ("fru", lambda f, s, w, b: fru(f, s, w, b), dict(f=r(2, 4, 4), s=r(2, 4, 4), w=r(2, 2, 1, 1), b=r(2))),
        ("hs_sr_loss", lambda x: losses.hs_sr_loss(x, y_hs, g_hs, block, response, 0.7),
         dict(x=r(3, 4, 4))),
        ("pansharpen_loss", lambda x, d: losses.pansharpen_loss(x, y_low, pan, block, d, 0.7),
         dict(x=r(2, 4, 4), d=r(2, lo=0.5, hi=1.5))),
        ("denoise_loss", lambda x: losses.denoise_loss(x, g2), dict(x=r(2, 4, 4))),
        ("mixed chain", lambda a, b, w: ad.square_sum(ad.sigmoid(ad.mul(
            ad.leaky_relu(ad.conv2d(a, w)), ad.bilinear_upsample2x(b)))),
         dict(a=r(2, 4, 4), b=r(2, 2, 2), w=r(2, 2, 3, 3))),
    ]
    results = []
    for i, (name, fn, inputs) in enumerate(cases):
        results.append(check_function(name, fn, inputs, tol=tol, seed=seed + i))
    return results


def run_suite(seed=0):
    results = operation_checks(seed)
    results.append(check_model())
    return results
