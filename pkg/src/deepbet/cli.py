"""Command-line entry point.

Subcommands: extract, train, phantom, eval, bench.  Exit codes: 0 success,
1 usage error, 2 data error, 3 internal error.  ``DEEPBET_THREADS`` sets
the default compute thread count.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch

from .config import get_profile, load_config_file
from .errors import DeepbetError
from .evaluate import benchmark
from .nifti import read_nifti, write_nifti
from .phantom import PhantomSpec, generate
from .pipeline import PipelineConfig, Predictor
from .training import write_loss_log
from .weights_io import load_bundle, read_metadata, save_bundle
from .workflow import evaluate_dirs, load_pairs_from_dir, train_pipeline

logger = logging.getLogger("deepbet")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="deepbet", description="Two-stage brain extraction for T1w MRI")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", parser_class=_Parser,
                        help="predict a brain mask for one volume")
    ex.add_argument("--input", required=True, help="input NIfTI volume")
    ex.add_argument("--output", required=True, help="output brain-mask NIfTI")
    ex.add_argument("--weights", required=True, help="DBW1 weights file")
    ex.add_argument("--mask-out", default=None,
                    help="optional masked-image NIfTI (input voxels inside the mask)")
    ex.add_argument("--threshold", type=float, default=0.5)
    ex.add_argument("--mode", choices=("3d", "2d"), default=None,
                    help="override the mode stored in the weights file")
    ex.add_argument("--config", default=None)
    ex.add_argument("--profile", choices=("desk", "paper"), default="desk")
    ex.add_argument("--jobs", type=int, default=None)

    tr = sub.add_parser("train", parser_class=_Parser,
                        help="train pipeline models on an image/mask directory")
    tr.add_argument("--data", required=True, help="directory of *_img/*_mask NIfTI pairs")
    tr.add_argument("--out", required=True, help="output DBW1 weights file")
    tr.add_argument("--mode", choices=("3d", "2d"), default="3d")
    tr.add_argument("--profile", choices=("desk", "paper"), default="desk")
    tr.add_argument("--config", default=None)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--checkpoint-dir", default=None)
    tr.add_argument("--loss-log", default=None, help="CSV loss log path")

    ph = sub.add_parser("phantom", parser_class=_Parser,
                        help="generate synthetic head phantoms")
    ph.add_argument("--count", type=int, required=True)
    ph.add_argument("--out", required=True)
    ph.add_argument("--size", type=int, default=64)
    ph.add_argument("--seed", type=int, default=0)

    ev = sub.add_parser("eval", parser_class=_Parser,
                        help="Dice report between two mask directories")
    ev.add_argument("--pred", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--report", required=True, help="output CSV report")
    ev.add_argument("--threshold", type=float, default=0.5)
    ev.add_argument("--jobs", type=int, default=None)

    be = sub.add_parser("bench", parser_class=_Parser,
                        help="measure extraction throughput (images/minute)")
    be.add_argument("--weights", required=True)
    be.add_argument("--input", required=True, help="directory of NIfTI volumes")
    be.add_argument("--reps", type=int, default=3)
    be.add_argument("--config", default=None)
    be.add_argument("--profile", choices=("desk", "paper"), default="desk")
    be.add_argument("--jobs", type=int, default=None)
    return p


def _threads(args) -> int:
    jobs = getattr(args, "jobs", None)
    if jobs is None:
        jobs = int(os.environ.get("DEEPBET_THREADS", "0")) or None
    if jobs is not None and jobs >= 1:
        torch.set_num_threads(jobs)
        return jobs
    return torch.get_num_threads()


def _profile(args):
    profile = get_profile(args.profile)
    if getattr(args, "config", None):
        profile = load_config_file(args.config, profile)
    return profile


def _pipeline_cfg_from_weights(path, profile, mode_flag, threshold) -> PipelineConfig:
    meta = read_metadata(path)
    kw = {}
    for key in ("stage1_size", "stage2_size", "multi_slice_n"):
        if f"pipeline.{key}" in meta:
            kw[key] = int(meta[f"pipeline.{key}"])
    if "pipeline.margin_fraction" in meta:
        kw["margin_fraction"] = float(meta["pipeline.margin_fraction"])
    if "pipeline.mode" in meta:
        kw["mode"] = meta["pipeline.mode"]
    if "pipeline.views" in meta:
        kw["views"] = tuple(meta["pipeline.views"].split(","))
    base = profile.pipeline
    cfg_kw = {**base.__dict__, **kw, "binarize_threshold": threshold}
    if mode_flag is not None:
        cfg_kw["mode"] = mode_flag
    return PipelineConfig(**cfg_kw)


def _cmd_extract(args) -> int:
    _threads(args)
    profile = _profile(args)
    bundle = load_bundle(args.weights)
    cfg = _pipeline_cfg_from_weights(args.weights, profile, args.mode, args.threshold)
    volume = read_nifti(args.input)
    predictor = Predictor(bundle, cfg, profile.preprocess)
    result = predictor.extract(volume)
    write_nifti(result.mask, args.output, dtype_tag="u8")
    if args.mask_out:
        write_nifti(result.masked, args.mask_out, dtype_tag="f32")
    print(f"wrote mask to {args.output}"
          + (f" and masked image to {args.mask_out}" if args.mask_out else ""))
    return 0


def _cmd_train(args) -> int:
    _threads(args)
    profile = _profile(args)
    pairs = load_pairs_from_dir(args.data)
    bundle, logs = train_pipeline(pairs, profile, mode=args.mode, seed=args.seed,
                                  checkpoint_dir=args.checkpoint_dir)
    meta = {f"pipeline.{k}": str(v) if not isinstance(v, tuple)
            else ",".join(str(x) for x in v)
            for k, v in profile.pipeline.__dict__.items()}
    meta["pipeline.mode"] = args.mode
    save_bundle(bundle, args.out, extra_meta=meta)
    if args.loss_log:
        merged = [e for log in logs.values() for e in log]
        write_loss_log(merged, args.loss_log)
    final = {name: log[-1].loss for name, log in logs.items() if log}
    print(f"trained {sorted(bundle)} on {len(pairs)} pairs -> {args.out}; "
          f"final losses {final}")
    return 0


def _cmd_phantom(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dims = (args.size,) * 3
    for i in range(args.count):
        seed = args.seed + i
        img, mask = generate(PhantomSpec(seed=seed, dims=dims))
        write_nifti(img, out / f"{seed:05d}_img.nii.gz", dtype_tag="f32")
        write_nifti(mask, out / f"{seed:05d}_mask.nii.gz", dtype_tag="f32")
    print(f"wrote {args.count} phantom pair(s) to {out}")
    return 0


def _cmd_eval(args) -> int:
    jobs = _threads(args)
    report = evaluate_dirs(args.pred, args.truth, threshold=args.threshold,
                           jobs=jobs if args.jobs else 1)
    report.write_csv(args.report)
    print(f"median dice {report.median:.4f}, min {report.min:.4f} "
          f"over {len(report.entries)} pair(s) -> {args.report}")
    return 0


def _cmd_bench(args) -> int:
    _threads(args)
    profile = _profile(args)
    bundle = load_bundle(args.weights)
    cfg = _pipeline_cfg_from_weights(args.weights, profile, None, 0.5)
    paths = sorted(p for p in Path(args.input).iterdir()
                   if p.name.endswith((".nii", ".nii.gz")) and "_mask" not in p.name)
    if not paths:
        raise DeepbetError(f"no input volumes under {args.input}")
    volumes = [read_nifti(p) for p in paths]
    predictor = Predictor(bundle, cfg, profile.preprocess)
    rate, hardware = benchmark(predictor.extract, volumes, repetitions=args.reps)
    print(f"{rate:.2f} images/minute over {len(volumes)} image(s) x {args.reps} rep(s) "
          f"[{hardware}]")
    return 0


_COMMANDS = {
    "extract": _cmd_extract,
    "train": _cmd_train,
    "phantom": _cmd_phantom,
    "eval": _cmd_eval,
    "bench": _cmd_bench,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except DeepbetError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # pragma: no cover - internal failures
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
