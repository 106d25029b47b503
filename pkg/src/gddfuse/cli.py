"""Command line entry point.

Exit codes: 0 success, 1 gradient check failure, 2 invalid input,
3 numerical abort.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .autodiff import ShapeError
from .degradation import KINDS, SpatialDownsampler, synth_scene, panchromatic, wald_protocol
from .io import TensorFormatError, read_srf_csv, read_tensor, write_trace_csv, write_tensor
from .metrics import evaluate
from .network import NetworkConfig
from .runner import NumericalAbort, RunConfig, export_results, run_fusion
from .validation import check_image, check_pair

EXIT_OK, EXIT_GRADCHECK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2, 3

log = logging.getLogger("gddfuse")


def _cmd_fuse(args):
    task = args.task.replace("-", "_")
    y = read_tensor(args.input)
    g = read_tensor(args.guidance)
    y, g = check_pair(y, g, task)
    ref = None
    if args.reference:
        ref = check_image(read_tensor(args.reference), "reference", n_channels=y.shape[0])
    srf = read_srf_csv(args.srf, y.shape[0]) if args.srf else None
    config = NetworkConfig(scales=args.scales, channels=args.channels,
                           guidance_channels=args.guidance_channels or args.channels,
                           seed=args.seed, dtype="float32" if args.float32 else "float64")
    run = RunConfig(task=task, variant=args.variant, iterations=args.iters, lr=args.lr, mu=args.mu,
                    seed=args.seed, eval_every=min(args.eval_every, args.iters),
                    auto_mu=args.auto_mu, output_dir=args.out)
    out = Path(args.out)
    try:
        x, trace, model = run_fusion(task, y, g, config, run, reference=ref, kind=args.kind, srf=srf)
    except NumericalAbort as exc:
        out.mkdir(parents=True, exist_ok=True)
        write_trace_csv(out / "trace.csv", exc.trace)
        log.error("%s; partial trace written to %s", exc, out / "trace.csv")
        return EXIT_NUMERICAL
    maps = model.export_attention_maps(g) if model.variant == "GDD" and args.attention else None
    export_results(out, x, reference=ref, attention_maps=maps, trace=trace, srf=srf)
    if ref is not None:
        evaluate(x, ref, ratio=g.shape[1] // y.shape[1] if task != "denoise" else 1).to_csv(out / "metrics.csv")
    log.info("final loss %.6g%s", trace.final.loss_total,
             "" if trace.final.psnr is None else f", PSNR {trace.final.psnr:.3f} dB")
    return EXIT_OK


def _cmd_degrade(args):
    hr = check_image(read_tensor(args.hr), "high-resolution image")
    srf = read_srf_csv(args.srf, hr.shape[0]) if args.srf else None
    pan = check_image(read_tensor(args.pan), "panchromatic image") if args.pan else None
    observed, guidance, reference = wald_protocol(hr, args.factor, args.kind, guidance=pan, srf=srf)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "input.btf", observed)
    write_tensor(out / "reference.btf", reference)
    if guidance is not None:
        write_tensor(out / "guidance.btf", guidance)
    return EXIT_OK


def _cmd_metrics(args):
    fused = check_image(read_tensor(args.fused), "fused image")
    ref = check_image(read_tensor(args.reference), "reference") if args.reference else None
    ms_low = pan = pan_low = None
    if args.ms_low:
        ms_low = check_image(read_tensor(args.ms_low), "low-resolution image")
    if args.pan:
        if ms_low is None:
            raise ValueError("--pan needs --ms-low")
        pan = check_image(read_tensor(args.pan), "panchromatic image", n_channels=1)
        pan_low = SpatialDownsampler(args.kind, args.ratio)(pan)
    if ref is None and ms_low is None:
        raise ValueError("give --reference and/or --ms-low")
    report = evaluate(fused, ref, args.ratio, ms_low, pan, pan_low)
    report.to_csv(args.out)
    for key, value in report.as_dict().items():
        if value is not None:
            print(f"{key:>10s} {value:.6f}")
    return EXIT_OK


def _cmd_synth(args):
    scene = synth_scene(args.seed, args.channels, args.size)
    write_tensor(args.out, scene)
    if args.pan:
        write_tensor(args.pan, panchromatic(scene))
    return EXIT_OK


def _cmd_gradcheck(args):
    from .gradcheck import run_suite

    failed = 0
    for result in run_suite(args.seed):
        status = "ok" if result.ok else "FAIL"
        print(f"{status:4s} {result.name:24s} rel.err {result.error:.3e} (tol {result.tol:g})")
        failed += not result.ok
    return EXIT_GRADCHECK if failed else EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="gddfuse", description="Unsupervised guided image fusion.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="optimise a network on one image pair")
    p.add_argument("--task", choices=["hs-sr", "pansharpen", "denoise"], required=True)
    p.add_argument("--input", required=True, help="observed image Y (.btf)")
    p.add_argument("--guidance", required=True, help="guidance image G (.btf)")
    p.add_argument("--reference", help="ground truth for PSNR traces and metrics")
    p.add_argument("--srf", help="spectral response CSV (hs-sr)")
    p.add_argument("--variant", choices=["gdd", "dd", "dip-z", "dip-g"], default="gdd")
    p.add_argument("--iters", type=int, default=5000)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--auto-mu", action="store_true", help="balance both loss terms at the start")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scales", type=int, default=4)
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--guidance-channels", type=int)
    p.add_argument("--kind", choices=KINDS, help="spatial degradation in the loss")
    p.add_argument("--eval-every", type=int, default=50)
    p.add_argument("--float32", action="store_true", help="single precision arithmetic")
    p.add_argument("--no-attention", dest="attention", action="store_false")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("degrade", help="simulate a low-resolution observation (Wald's protocol)")
    p.add_argument("--hr", required=True)
    p.add_argument("--factor", type=int, required=True)
    p.add_argument("--kind", choices=KINDS, default="block")
    p.add_argument("--srf", help="spectral response CSV; guidance becomes R(X)")
    p.add_argument("--pan", help="high-resolution guidance passed through unchanged")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_degrade)

    p = sub.add_parser("metrics", help="quality indices of a fused image")
    p.add_argument("--fused", required=True)
    p.add_argument("--reference")
    p.add_argument("--ms-low")
    p.add_argument("--pan")
    p.add_argument("--ratio", type=int, default=4)
    p.add_argument("--kind", choices=KINDS, default="bicubic", help="pan downsampling for D_s")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("synth", help="generate a synthetic scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--channels", type=int, default=8)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--pan", help="also write a band-average panchromatic image here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gradcheck)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ShapeError, TensorFormatError, ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return EXIT_INVALID
    except FloatingPointError as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
