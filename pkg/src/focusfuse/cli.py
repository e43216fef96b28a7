"""Command-line interface.

Subcommands: ``fuse`` (run the pipeline on a stack), ``sweep`` (grid over
octaves/layers/descriptor dimension), ``synth`` (generate a misaligned
synthetic multi-focus stack), ``eval`` (score a fused result against the
synthetic ground truth). Exit codes: 0 success, 2 input error, 3
registration failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from pathlib import Path

from .evalharness import SyntheticSpec, evaluate, generate
from .imgcore import load_image, save_image
from .pipeline import (
    PipelineConfig,
    RunReport,
    run_pipeline,
    sweep,
    write_sweep_csv,
)
from .registration import RegistrationError

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_REGISTRATION = 3


def _add_pipeline_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--octaves", type=int, default=5, help="scale-space octaves (1-8)")
    p.add_argument("--layers", type=int, default=2, help="detection layers per octave (1-8)")
    p.add_argument(
        "--dim", type=int, default=64, choices=[16, 36, 64, 100, 144],
        help="descriptor dimension",
    )
    p.add_argument("--ratio", type=float, default=0.8, help="NN ratio-test threshold")
    p.add_argument("--top-k", type=int, default=20, help="matches kept for voting")
    p.add_argument("--cell-size", type=float, default=4.0, help="vote cell size, px")
    p.add_argument("--agg", choices=["l1", "l2"], default="l1",
                   help="inlier aggregation: median (l1) or mean (l2)")
    p.add_argument("--det-threshold", type=float, default=1e-4,
                   help="keypoint response threshold")
    p.add_argument("--gf-radius", type=int, default=45, help="guided-filter radius")
    p.add_argument("--gf-eps", type=float, default=0.3, help="guided-filter epsilon")
    p.add_argument("--reference", default="auto",
                   help="'auto' or the index of the reference image")


def _config_from_args(args) -> PipelineConfig:
    if args.reference == "auto":
        reference = None
    else:
        try:
            reference = int(args.reference)
        except ValueError:
            raise ValueError(f"--reference must be 'auto' or an integer, got {args.reference!r}")
    return PipelineConfig(
        octaves=args.octaves,
        layers=args.layers,
        descriptor_dim=args.dim,
        ratio_threshold=args.ratio,
        top_k=args.top_k,
        cell_size=args.cell_size,
        aggregation=args.agg,
        detection_threshold=args.det_threshold,
        gf_radius=args.gf_radius,
        gf_epsilon=args.gf_eps,
        reference=reference,
        skip_unregistrable=getattr(args, "skip_unregistrable", False),
        save_saliency=getattr(args, "save_saliency", None),
        save_weights=getattr(args, "save_weights", None),
        save_keypoints=getattr(args, "save_keypoints", None),
        save_responses=getattr(args, "save_responses", None),
        save_matches=getattr(args, "save_matches", None),
    )


def _cmd_fuse(args) -> int:
    cfg = _config_from_args(args)
    t0 = time.perf_counter()
    fused, report = run_pipeline(args.input, cfg)
    save_image(args.out, fused)
    report.timings["end_to_end"] = time.perf_counter() - t0
    if args.report:
        report.write_json(args.report)
    regs = [r for r in report.registrations if not r.get("reference")]
    print(f"fused {len(report.images)} images -> {args.out}")
    print(f"reference: {report.images[report.reference_index]} "
          f"(index {report.reference_index})")
    for r in regs:
        if r.get("registered"):
            print(f"  {r['image']}: t=({r['tx']:+.2f}, {r['ty']:+.2f}) "
                  f"accuracy={r['accuracy']:.3f} ({r['v_num']}/{r['a_num']})")
        else:
            print(f"  {r['image']}: registration failed ({r.get('error', '?')})")
    print(f"compute {report.timings['compute_total']:.2f}s, "
          f"end-to-end {report.timings['end_to_end']:.2f}s")
    return EXIT_OK


def _parse_axis(spec: str) -> tuple[str, list[int]]:
    if "=" not in spec:
        raise ValueError(f"--axis expects name=v1,v2,... got {spec!r}")
    name, _, values = spec.partition("=")
    try:
        parsed = [int(v) for v in values.split(",") if v != ""]
    except ValueError:
        raise ValueError(f"--axis {name}: values must be integers, got {values!r}")
    if not parsed:
        raise ValueError(f"--axis {name}: no values given")
    return name.strip(), parsed


def _cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    axes = {}
    for spec in args.axis:
        name, values = _parse_axis(spec)
        axes[name] = values
    rows = sweep(args.input, cfg, axes, out_dir=args.out_dir)
    write_sweep_csv(args.out_csv, rows)
    print(f"{len(rows)} grid points -> {args.out_csv}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    base = load_image(args.base)
    spec = SyntheticSpec(
        base=base, n=args.n, max_shift=args.max_shift, sigma=args.sigma, seed=args.seed
    )
    stack, truth, shifts = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i, img in enumerate(stack):
        name = f"focus_{i:02d}.png"
        save_image(out / name, img)
        names.append(name)
    save_image(out / "truth.png", truth)
    manifest = {
        "images": names,
        "truth": "truth.png",
        "shifts": [list(s) for s in shifts],
        "sigma": args.sigma,
        "seed": args.seed,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2)
    print(f"wrote {len(stack)} images + truth + manifest to {out}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    fused = load_image(args.fused)
    truth = load_image(args.truth)
    with open(args.report) as fh:
        report = RunReport(**json.load(fh))
    manifest_path = (
        Path(args.manifest) if args.manifest else Path(args.truth).parent / "manifest.json"
    )
    if not manifest_path.is_file():
        raise ValueError(
            f"stack manifest not found at {manifest_path}; pass --manifest"
        )
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    stack_dir = manifest_path.parent
    stack = [load_image(stack_dir / n) for n in manifest["images"]]
    shifts = [tuple(s) for s in manifest["shifts"]]
    quality = evaluate(fused, stack, truth, shifts, report)
    payload = dataclasses.asdict(quality)
    payload["max_recovery_error"] = quality.max_recovery_error()
    with open(args.out_json, "w") as fh:
        json.dump(payload, fh, indent=2)
    print(f"fused RMSE {quality.fused_rmse:.5f} vs best input "
          f"{min(quality.input_rmse):.5f}; report -> {args.out_json}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="focusfuse",
        description="Fuse unregistered multi-focus image stacks into one "
        "all-in-focus image.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fuse_p = sub.add_parser("fuse", help="register and fuse a stack")
    fuse_p.add_argument("input", help="directory of images (png/tif/bmp)")
    _add_pipeline_flags(fuse_p)
    fuse_p.add_argument("--out", default="fused.png", help="fused image path")
    fuse_p.add_argument("--report", default=None, help="write run report JSON here")
    fuse_p.add_argument("--save-saliency", default=None, metavar="DIR")
    fuse_p.add_argument("--save-weights", default=None, metavar="DIR")
    fuse_p.add_argument("--save-keypoints", default=None, metavar="DIR")
    fuse_p.add_argument("--save-responses", default=None, metavar="DIR")
    fuse_p.add_argument("--save-matches", default=None, metavar="DIR")
    fuse_p.add_argument("--skip-unregistrable", action="store_true",
                        help="drop images that fail to register instead of aborting")
    fuse_p.set_defaults(func=_cmd_fuse)

    sweep_p = sub.add_parser("sweep", help="run a parameter grid")
    sweep_p.add_argument("input")
    sweep_p.add_argument("--axis", action="append", required=True,
                         metavar="NAME=V1,V2,...",
                         help="octaves, layers or descriptor_dim; repeatable")
    sweep_p.add_argument("--out-csv", required=True)
    sweep_p.add_argument("--out-dir", default=None,
                         help="also save each grid point's fused image here")
    _add_pipeline_flags(sweep_p)
    sweep_p.set_defaults(func=_cmd_sweep)

    synth_p = sub.add_parser("synth", help="generate a synthetic misaligned stack")
    synth_p.add_argument("--base", required=True, help="all-sharp base image")
    synth_p.add_argument("--n", type=int, default=4)
    synth_p.add_argument("--max-shift", type=int, default=20)
    synth_p.add_argument("--sigma", type=float, default=3.0)
    synth_p.add_argument("--seed", type=int, default=0)
    synth_p.add_argument("--out", required=True)
    synth_p.set_defaults(func=_cmd_synth)

    eval_p = sub.add_parser("eval", help="score a fused image against ground truth")
    eval_p.add_argument("--fused", required=True)
    eval_p.add_argument("--truth", required=True)
    eval_p.add_argument("--report", required=True, help="run report JSON from fuse")
    eval_p.add_argument("--out-json", required=True)
    eval_p.add_argument("--manifest", default=None,
                        help="stack manifest (default: next to --truth)")
    eval_p.set_defaults(func=_cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RegistrationError as exc:
        print(f"registration failed: {exc}", file=sys.stderr)
        return EXIT_REGISTRATION
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
