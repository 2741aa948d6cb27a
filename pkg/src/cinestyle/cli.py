"""Command-line entry point wiring the pipeline end to end.

Subcommands: ``extract`` (measurements to instructions), ``transfer``
(instructions to a controlled recording of a new scene), ``compare``
(style distance between two recordings), ``simulate`` (render a scene
spec to measurements), ``plot`` (re-render the comparison figure from
feature CSVs). Exit codes: 0 success, 2 validation error, 3 solver
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .config import PipelineConfig, load_config, merge_config
from .errors import (
    ConfigError,
    NoSubjectError,
    SceneError,
    SchemaError,
    SolverError,
)
from .focus import VARIANTS, extract_focus, write_focus_trace
from .instructions import (
    build_instructions,
    parse_instructions,
    write_instructions,
)
from .measurements import MeasurementSequence, parse_sequence, write_sequence
from .metrics import (
    compare,
    features_from_extraction,
    format_style_report,
    read_style_features,
    write_style_features,
    write_style_report,
)
from .plots import render_comparison_svg
from .scene import (
    parse_scene,
    rollout,
    synthesize,
    write_ground_truth,
    write_trajectory_log,
)
from .subject import MODES, extract_subject, write_subject_trace


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE",
                        help="JSON config file; explicit flags still win")
    parser.add_argument("--theta", type=float, metavar="T",
                        help="focus binarization threshold in [0, 1]")
    parser.add_argument("--mu", type=float, metavar="M",
                        help="depth-of-field margin around the subject, meters")
    parser.add_argument("--mode", choices=MODES,
                        help="subject selection mode")
    parser.add_argument("--focus-variant", choices=VARIANTS,
                        help="focus binarization variant")
    parser.add_argument("--seed", type=int, metavar="N",
                        help="override the scene seed")
    parser.add_argument("--strict", action="store_true", default=None,
                        help="reject unknown fields in input files")
    parser.add_argument("--out", metavar="DIR", default=".",
                        help="output directory, created if missing")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cinestyle",
        description="Extract a recording style from footage measurements and "
                    "reproduce it with a controlled camera in a new scene.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser(
        "extract", help="turn a measurement file into recording instructions",
        description="Extract the subject track and focus profile from a "
                    "measurement file and write recording instructions plus "
                    "trace CSVs.")
    p.add_argument("measurements", help="measurement JSON file")
    _add_common(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser(
        "transfer", help="record a new scene under existing instructions",
        description="Drive the camera controller through a scene so the "
                    "recording follows the given instructions; writes the "
                    "trajectory log, output measurements, and ground truth.")
    p.add_argument("instructions", help="recording instructions JSON file")
    p.add_argument("scene", help="scene spec JSON file")
    _add_common(p)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser(
        "compare", help="style distance between two measurement files",
        description="Extract style features from both measurement files and "
                    "report per-frame focus mismatch, joint distance, and "
                    "their weighted sum; also writes feature CSVs and the "
                    "comparison figure.")
    p.add_argument("source", help="source measurement JSON file")
    p.add_argument("output", help="output measurement JSON file")
    _add_common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser(
        "simulate", help="render a scene spec into a measurement file",
        description="Render the scripted scene and write the measurement "
                    "file plus ground truth.")
    p.add_argument("scene", help="scene spec JSON file")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser(
        "plot", help="re-render the comparison figure from feature CSVs",
        description="Render the comparison SVG from two style feature CSVs "
                    "as written by the compare command.")
    p.add_argument("source_features", help="source feature CSV")
    p.add_argument("output_features", help="output feature CSV")
    _add_common(p)
    p.set_defaults(func=cmd_plot)
    return parser


def resolve_config(args) -> PipelineConfig:
    """Defaults, then the config file, then explicit flags."""
    config = PipelineConfig()
    if args.config is not None:
        config = load_config(args.config, config)
    overrides = {}
    if args.theta is not None:
        overrides["theta"] = args.theta
    if args.mu is not None:
        overrides["mu_m"] = args.mu
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.focus_variant is not None:
        overrides["focus_variant"] = args.focus_variant
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.strict:
        overrides["strict"] = True
    return merge_config(config, overrides)


def _out_dir(args) -> Path:
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _read_sequence(path, config: PipelineConfig) -> MeasurementSequence:
    seq = parse_sequence(path, strict=config.strict)
    for warning in seq.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return seq


def _extract_features(seq: MeasurementSequence, config: PipelineConfig):
    track, joints = extract_subject(
        seq, config.mode, config.confidence_weight, config.smoothing_weight,
        config.selection_clip, config.selection_temperature)
    profile = extract_focus(seq, track.masks, config.focus_variant,
                            config.theta, config.smoothing_weight)
    return track, joints, profile


def cmd_extract(args) -> int:
    config = resolve_config(args)
    seq = _read_sequence(args.measurements, config)
    track, joints, profile = _extract_features(seq, config)
    instructions = build_instructions(seq, joints, profile, config.mu_m)
    out = _out_dir(args)
    write_instructions(instructions, out / "instructions.json")
    write_subject_trace(out / "subject_trace.csv", seq, track, joints)
    write_focus_trace(out / "focus_trace.csv", seq, profile)
    print(f"extracted {instructions.frame_count} frames -> "
          f"{out / 'instructions.json'}")
    return 0


def cmd_transfer(args) -> int:
    config = resolve_config(args)
    instructions = parse_instructions(args.instructions)
    spec = parse_scene(args.scene)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    result = rollout(instructions, spec, config.controller())
    out = _out_dir(args)
    write_trajectory_log(out / "trajectory_log.csv", result)
    write_sequence(result.measurements, out / "output_measurements.json")
    write_ground_truth(result.truth, out / "output_truth.json")
    finite = np.isfinite(result.target_errors)
    error = float(result.target_errors[finite].mean()) if finite.any() \
        else float("nan")
    print(f"transferred {instructions.frame_count} frames; mean target error "
          f"{error:.6f}; {int(result.converged.sum())}/"
          f"{instructions.frame_count} plans converged")
    return 0


def cmd_compare(args) -> int:
    config = resolve_config(args)
    features = []
    for path in (args.source, args.output):
        seq = _read_sequence(path, config)
        _, joints, profile = _extract_features(seq, config)
        features.append(features_from_extraction(joints, profile))
    report = compare(features[0], features[1], config.w_focus, config.w_joint)
    out = _out_dir(args)
    write_style_report(out / "style_report.csv", report)
    summary = format_style_report(report)
    (out / "style_report.txt").write_text(summary, encoding="utf-8")
    write_style_features(out / "source_features.csv", features[0])
    write_style_features(out / "output_features.csv", features[1])
    # The figure is rendered from the CSVs it ships with, not from memory.
    render_comparison_svg(out / "comparison.svg",
                          read_style_features(out / "source_features.csv"),
                          read_style_features(out / "output_features.csv"))
    sys.stdout.write(summary)
    return 0


def cmd_simulate(args) -> int:
    config = resolve_config(args)
    spec = parse_scene(args.scene)
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    seq, truth = synthesize(spec)
    out = _out_dir(args)
    write_sequence(seq, out / "measurements.json")
    write_ground_truth(truth, out / "ground_truth.json")
    print(f"simulated {spec.frame_count} frames -> {out / 'measurements.json'}")
    return 0


def cmd_plot(args) -> int:
    source = read_style_features(args.source_features)
    output = read_style_features(args.output_features)
    out = _out_dir(args)
    render_comparison_svg(out / "comparison.svg", source, output)
    print(f"wrote {out / 'comparison.svg'}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else int(exc.code)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (SchemaError, ConfigError, NoSubjectError, SceneError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
