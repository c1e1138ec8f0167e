"""Command-line interface.

Subcommands:

* render   - render one scene/pose to PGM (optionally PNG) plus a one-row
             ground-truth feature CSV
* features - ground-truth feature CSV over the calibration + test grids for
             every diopter condition
* evaluate - run both gaze mappers across the diopter sweep; writes
             records.csv / summary.csv / calibrations.csv / summary.txt and
             prints the summary table
* sweep    - evaluate several config files into per-config subdirectories

Exit codes: 0 success, 1 validation/usage error, 2 runtime error.  All
diagnostics go to stderr; only the summary table is printed to stdout.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, load_config
from .eye import EyePose, SceneValidationError, assemble_scene
from .harness import (
    ExperimentConfig,
    calibration_grid,
    pose_features,
    run_experiment,
    summary_table,
    test_grid,
    write_calibrations_csv,
    write_features_csv,
    write_records_csv,
    write_summary_csv,
)
from .lens import LensConstructionError
from .render import render, write_pgm, write_png


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we want exit 1
        raise CliUsageError(message)


def _num(x: float) -> str:
    return f"{x:g}"


def build_parser() -> _Parser:
    parser = _Parser(prog="specsim", description="Eyeglass-aware eye-tracking simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", action="append", default=[], help="JSON config file (repeatable for sweep)")
        p.add_argument("--out", type=Path, required=True, help="output directory")

    p_render = sub.add_parser("render", help="render a single scene and pose")
    common(p_render)
    p_render.add_argument("--diopter", type=float, default=None, help="lens power override (dpt)")
    p_render.add_argument("--theta-h", type=float, default=0.0, help="horizontal gaze angle (deg)")
    p_render.add_argument("--theta-v", type=float, default=0.0, help="vertical gaze angle (deg)")
    p_render.add_argument("--image-format", choices=("pgm", "png"), default="pgm")

    p_feat = sub.add_parser("features", help="dump ground-truth features over the pose grids")
    common(p_feat)
    p_feat.add_argument("--diopter", type=float, default=None, help="restrict to a single diopter")

    p_eval = sub.add_parser("evaluate", help="run the gaze-mapping accuracy experiment")
    common(p_eval)
    p_eval.add_argument("--method", choices=("polynomial", "geometric", "both"), default="both")

    p_sweep = sub.add_parser("sweep", help="evaluate multiple configs")
    common(p_sweep)
    p_sweep.add_argument("--method", choices=("polynomial", "geometric", "both"), default="both")
    return parser


def _load(args) -> ExperimentConfig:
    if len(args.config) > 1:
        raise CliUsageError("this subcommand accepts a single --config")
    if args.config:
        return load_config(args.config[0])
    return ExperimentConfig()


def _apply_method(cfg: ExperimentConfig, method: str) -> ExperimentConfig:
    if method == "both":
        return cfg
    return replace(cfg, methods=(method,))


def _cmd_render(args) -> int:
    cfg = _load(args)
    scene_cfg = cfg.scene
    diopter = args.diopter if args.diopter is not None else scene_cfg.lens.power
    scene = assemble_scene(scene_cfg.with_power(diopter))
    pose = EyePose(args.theta_h, args.theta_v)
    args.out.mkdir(parents=True, exist_ok=True)

    image = render(scene, pose)
    stem = f"img_{_num(diopter)}_{_num(args.theta_h)}_{_num(args.theta_v)}"
    if args.image_format == "pgm":
        write_pgm(image, args.out / f"{stem}.pgm")
    else:
        write_png(image, args.out / f"{stem}.png")

    feats = pose_features(scene, pose, diopter, with_glints=True)
    write_features_csv(args.out / "features.csv", [feats], n_leds=len(scene.leds))
    print(f"wrote {stem}.{args.image_format} and features.csv", file=sys.stderr)
    return 0


def _cmd_features(args) -> int:
    cfg = _load(args)
    diopters = (args.diopter,) if args.diopter is not None else cfg.diopters
    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    n_leds = len(cfg.scene.leds)
    for diopter in diopters:
        scene = assemble_scene(cfg.scene.with_power(diopter))
        poses = []
        seen = set()
        for pose in calibration_grid() + test_grid():
            key = (pose.theta_h, pose.theta_v)
            if key not in seen:
                seen.add(key)
                poses.append(pose)
        for pose in poses:
            rows.append(pose_features(scene, pose, diopter, with_glints=True))
    write_features_csv(args.out / "features.csv", rows, n_leds=n_leds)
    print(f"wrote features.csv ({len(rows)} rows)", file=sys.stderr)
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _apply_method(_load(args), args.method)
    result = run_experiment(cfg)
    args.out.mkdir(parents=True, exist_ok=True)
    write_records_csv(args.out / "records.csv", result.records)
    write_summary_csv(args.out / "summary.csv", result.summary)
    write_calibrations_csv(args.out / "calibrations.csv", result.calibrations)
    table = summary_table(result.summary)
    (args.out / "summary.txt").write_text(table, encoding="ascii", newline="\n")
    sys.stdout.write(table)
    return 0


def _cmd_sweep(args) -> int:
    if not args.config:
        raise CliUsageError("sweep requires at least one --config")
    for path in args.config:
        cfg = _apply_method(load_config(path), args.method)
        result = run_experiment(cfg)
        outdir = args.out / Path(path).stem
        outdir.mkdir(parents=True, exist_ok=True)
        write_records_csv(outdir / "records.csv", result.records)
        write_summary_csv(outdir / "summary.csv", result.summary)
        write_calibrations_csv(outdir / "calibrations.csv", result.calibrations)
        table = summary_table(result.summary)
        (outdir / "summary.txt").write_text(table, encoding="ascii", newline="\n")
        sys.stdout.write(f"# {path}\n{table}")
    return 0


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "render": _cmd_render,
            "features": _cmd_features,
            "evaluate": _cmd_evaluate,
            "sweep": _cmd_sweep,
        }[args.command]
        return handler(args)
    except CliUsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, SceneValidationError, LensConstructionError, ValueError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())
