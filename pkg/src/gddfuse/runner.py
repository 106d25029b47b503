"""Per-image optimisation of network parameters and experiment helpers."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, NamedTuple, Optional

import numpy as np

from . import autodiff as ad
from .degradation import SpatialDownsampler, SpectralResponse, apply_spectral_response
from .io import write_pgm, write_ppm, write_tensor, write_trace_csv
from .losses import TaskLoss, canonical_task
from .metrics import psnr
from .network import GddModel, NetworkConfig, canonical_variant
from .optim import Adam

log = logging.getLogger(__name__)


class NumericalAbort(RuntimeError):
    """The loss became non-finite; ``trace`` holds the rows recorded so far."""

    def __init__(self, iteration, trace):
        super().__init__(f"non-finite loss at iteration {iteration}")
        self.iteration = iteration
        self.trace = trace


@dataclass(frozen=True)
class RunConfig:
    task: str = "hs_sr"
    variant: str = "GDD"
    iterations: int = 5000
    lr: float = 0.01
    mu: float = 1.0
    seed: int = 0
    eval_every: int = 50
    auto_mu: bool = False
    output_dir: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "task", canonical_task(self.task))
        object.__setattr__(self, "variant", canonical_variant(self.variant))
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if not 1 <= self.eval_every <= self.iterations:
            raise ValueError(f"eval_every must lie in [1, iterations], got {self.eval_every}")


class TraceRow(NamedTuple):
    iteration: int
    loss_total: float
    loss_term1: float
    loss_term2: float
    psnr: Optional[float] = None


@dataclass
class RunTrace:
    rows: List[TraceRow] = field(default_factory=list)
    initial: Optional[TraceRow] = None

    def __len__(self):
        return len(self.rows)

    @property
    def final(self):
        return self.rows[-1]

    def at(self, iteration):
        for row in self.rows:
            if row.iteration == iteration:
                return row
        raise KeyError(iteration)


def _scalar(node):
    return float(node.value.reshape(()))


def optimize(model, loss, run, guidance=None, reference=None):
    """Fit ``model`` to one image pair by minimising ``loss``.

    Row ``k`` of the trace describes the network after ``k`` Adam steps; the
    state before the first step is kept in ``trace.initial``.  Returns the
    final output as an array and the trace.
    """
    params = model.parameters()
    params += [p for p in loss.trainable() if all(p is not q for q in params)]
    opt = Adam(params, lr=run.lr)
    trace = RunTrace()
    if run.auto_mu:
        loss.balance(model.forward(guidance).value)
        log.info("auto-balanced mu = %g", loss.mu)
    n = run.iterations
    out = None
    for k in range(n + 1):
        out = model.forward(guidance)
        t1, t2 = loss.terms(out)
        total = loss.combine(t1, t2)
        value = _scalar(total)
        if not math.isfinite(value):
            raise NumericalAbort(k, trace)
        if k == 0 or k == 1 or k % run.eval_every == 0 or k == n:
            score = None if reference is None else psnr(out.value, reference)
            row = TraceRow(k, value, _scalar(t1), _scalar(t2), score)
            if k == 0:
                trace.initial = row
            else:
                trace.rows.append(row)
                log.debug("iter %d loss %.6g psnr %s", k, value, score)
        if k == n:
            break
        ad.backward(total)
        opt.step()
    return out.value.copy(), trace


# --- problem assembly ------------------------------------------------------

DEFAULT_KIND = {"hs_sr": "block", "pansharpen": "bicubic", "denoise": None}


def make_task_loss(task, observed, guidance=None, mu=1.0, kind=None, srf=None,
                   out_shape=None, dtype=np.float64):
    """Bind a task loss to data, inferring the resolution ratio from shapes."""
    task = canonical_task(task)
    observed = np.asarray(observed, dtype=np.float64)
    downsampler = response = weights = None
    if task != "denoise":
        if guidance is None:
            raise ValueError(f"task {task} needs a guidance image")
        hi = np.shape(guidance)[1:] if out_shape is None else tuple(out_shape[1:])
        factor = hi[0] // observed.shape[1]
        if factor * observed.shape[1] != hi[0] or factor * observed.shape[2] != hi[1]:
            raise ValueError(f"guidance {hi} is not an integer multiple of observation {observed.shape}")
        downsampler = SpatialDownsampler(kind or DEFAULT_KIND[task], factor)
    if task == "hs_sr":
        c_low = np.shape(guidance)[0]
        if srf is None:
            srf = SpectralResponse.contiguous(observed.shape[0], c_low)
        response = srf if isinstance(srf, SpectralResponse) else SpectralResponse(srf)
        if response.shape != (c_low, observed.shape[0]):
            raise ValueError(f"spectral response {response.shape} does not map "
                             f"{observed.shape[0]} bands to {c_low}")
    if task == "pansharpen":
        weights = ad.Parameter(np.ones(observed.shape[0], dtype=dtype), name="D")
    return TaskLoss(task, observed, guidance, mu, downsampler, response, weights)


def run_fusion(task, observed, guidance, config, run, reference=None, kind=None, srf=None):
    """Build the network for ``run.variant`` and optimise it on one pair."""
    out_shape = (np.shape(observed)[0],) + tuple(np.shape(guidance)[1:])
    loss = make_task_loss(task, observed, guidance, run.mu, kind, srf, out_shape, np.dtype(config.dtype))
    model = GddModel(config, np.shape(guidance), out_shape[0], run.variant)
    if loss.weights is not None:
        model.channel_weights = loss.weights
    x, trace = optimize(model, loss, run, guidance=guidance, reference=reference)
    return x, trace, model


COMPARE_HEADER = ("variant", "seed", "iteration", "loss_total", "loss_term1", "loss_term2", "psnr")


def compare_variants(task, observed, guidance, run, config, variants=("DD", "DIP_Z", "DIP_G", "GDD"),
                     seeds=(0,), reference=None, csv_path=None, kind=None, srf=None):
    """Optimise every variant on the same data with the same budget.

    Returns ``{(variant, seed): RunTrace}``; optionally writes one long-format
    CSV with a row per (variant, seed, recorded iteration).
    """
    traces = {}
    for variant in variants:
        variant = canonical_variant(variant)
        for seed in seeds:
            cfg = replace(config, seed=seed)
            r = replace(run, variant=variant, seed=seed)
            _, trace, _ = run_fusion(task, observed, guidance, cfg, r, reference, kind, srf)
            traces[(variant, seed)] = trace
            log.info("%s seed %d final psnr %s", variant, seed, trace.final.psnr)
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(COMPARE_HEADER)
            for (variant, seed), trace in traces.items():
                for row in trace.rows:
                    writer.writerow([variant, seed, row.iteration, repr(row.loss_total),
                                     repr(row.loss_term1), repr(row.loss_term2),
                                     "" if row.psnr is None else repr(row.psnr)])
    return traces


def rgb_composite(x, srf=None):
    x = np.asarray(x, dtype=np.float64)
    if srf is not None and srf.shape == (3, x.shape[0]):
        return apply_spectral_response(x, srf)
    if x.shape[0] >= 3:
        return x[:3]
    return np.repeat(x[:1], 3, axis=0)


def export_results(output_dir, fused, reference=None, attention_maps=None, trace=None, srf=None):
    """Write the fused tensor and its visualisations; returns written paths."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}
    try:
        written["tensor"] = out / "fused.btf"
        write_tensor(written["tensor"], fused)
        written["rgb"] = out / "fused_rgb.ppm"
        write_ppm(written["rgb"], rgb_composite(fused, srf))
        if trace is not None:
            written["trace"] = out / "trace.csv"
            write_trace_csv(written["trace"], trace)
        if reference is not None:
            err = np.abs(np.asarray(fused, np.float64) - np.asarray(reference, np.float64)).mean(axis=0)
            peak = float(err.max())
            scale = 1.0 / peak if peak > 0 else 1.0
            written["error"] = out / "error.pgm"
            write_pgm(written["error"], err * scale)
            written["error_scale"] = out / "error_scale.txt"
            written["error_scale"].write_text(f"scale {scale!r}\nmax_abs_error {peak!r}\n")
        if attention_maps:
            att = out / "attention"
            att.mkdir(exist_ok=True)
            paths = []
            for scale_k, unit, ch, amap in attention_maps:
                p = att / f"scale{scale_k}_{unit}_c{ch:03d}.pgm"
                write_pgm(p, amap)
                paths.append(p)
            written["attention"] = paths
    except OSError as exc:
        raise OSError(f"failed writing results to {out}: {exc}") from exc
    return written
