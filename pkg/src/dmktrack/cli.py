"""Command-line interface.

Subcommands: synth, track, multitrack, baseline-ms, eval, timing, overlay,
build-model. Exit codes: 0 success, 1 validation error, 2 IO error.
"""

import argparse
import json
import os
import sys

from .config import RunConfig, apply_overrides, load_config, save_config
from .errors import DmkError, ValidationError
from .evaluate import evaluate, read_trajectory, write_report
from .dpm import build_template_model, save_model
from .imaging import list_frames, load_frame
from .overlay import overlay_frames
from .runner import (
    run_baseline_ms,
    run_multitrack,
    run_synth,
    run_timing,
    run_track,
)
from .synth import load_scene, scenario_library


def _parse_box(text):
    try:
        parts = [float(v) for v in text.split(",")]
    except ValueError:
        raise ValidationError(f"box {text!r} must be cx,cy,w,h") from None
    if len(parts) != 4:
        raise ValidationError(f"box {text!r} must have 4 values cx,cy,w,h")
    return tuple(parts)


def _resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    return apply_overrides(cfg, args.set or [])


def _add_common(parser):
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument(
        "--set", action="append", metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable)",
    )


def cmd_synth(args):
    if bool(args.scenario) == bool(args.spec):
        raise ValidationError("give exactly one of --scenario or --spec")
    if args.scenario:
        library = scenario_library()
        if args.scenario not in library:
            raise ValidationError(
                f"unknown scenario {args.scenario!r}; have {sorted(library)}"
            )
        spec = library[args.scenario]
    else:
        spec = load_scene(args.spec)
    run_synth(spec, args.out)
    print(f"wrote {spec.duration} frames to {args.out}")
    return 0


def cmd_build_model(args):
    cfg = _resolve_config(args)
    frames = list_frames(args.frames)
    index = args.frame_index
    if index < 0 or index >= len(frames):
        raise ValidationError(f"frame index {index} outside sequence")
    frame = load_frame(frames[index], index)
    model = build_template_model(
        frame, _parse_box(args.box),
        n_parts=cfg.dpm.template_parts,
        part_cells=cfg.dpm.template_part_cells,
        cell_size=cfg.features.cell_size,
        lam=cfg.features.levels_per_octave,
    )
    save_model(model, args.out)
    print(f"wrote template model to {args.out}")
    return 0


def cmd_track(args):
    cfg = _resolve_config(args)
    box = _parse_box(args.box)
    run_track(
        args.frames, box, cfg,
        model_path=args.model, template=args.template, out_dir=args.out,
        max_frames=args.max_frames,
    )
    print(f"wrote trajectory to {os.path.join(args.out, 'trajectory.csv')}")
    return 0


def cmd_baseline_ms(args):
    cfg = _resolve_config(args)
    run_baseline_ms(
        args.frames, _parse_box(args.box), cfg, out_dir=args.out,
        max_frames=args.max_frames,
    )
    print(f"wrote trajectory to {os.path.join(args.out, 'trajectory.csv')}")
    return 0


def cmd_multitrack(args):
    cfg = _resolve_config(args)
    run_multitrack(
        args.frames, args.model, cfg, out_dir=args.out,
        max_frames=args.max_frames,
    )
    print(f"wrote trajectory to {os.path.join(args.out, 'trajectory.csv')}")
    return 0


def cmd_eval(args):
    pred = read_trajectory(args.pred)
    truth = read_trajectory(args.truth)
    report = evaluate(pred, truth)
    os.makedirs(args.out, exist_ok=True)
    write_report(
        report,
        os.path.join(args.out, "errors.csv"),
        os.path.join(args.out, "summary.csv"),
    )
    print(f"overall mean error: {report.overall:.4f} px")
    return 0


def cmd_timing(args):
    cfg = _resolve_config(args)
    report = run_timing(
        args.frames, _parse_box(args.box), cfg,
        model_path=args.model, template=args.template,
        max_frames=args.max_frames,
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "timing.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(report, fh, indent=1)
            fh.write("\n")
        save_config(cfg, os.path.join(args.out, "config.json"))
    print(
        f"track {report['mean_track_s'] * 1e3:.1f} ms/frame, "
        f"detect {report['mean_detect_s'] * 1e3:.1f} ms/frame, "
        f"ratio {report['ratio']:.2f}x over {report['frames']} frames"
    )
    return 0


def cmd_overlay(args):
    warnings = overlay_frames(args.frames, args.trajectory, args.out)
    for warning in warnings:
        print(f"warning: {warning}", file=sys.stderr)
    print(f"wrote annotated frames to {args.out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dmktrack",
        description="Deformable multiple-kernel tracking and benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a synthetic scene")
    p.add_argument("--scenario", help="library scenario name (S1..S6)")
    p.add_argument("--spec", help="scene spec JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-model", help="build a template model from a box")
    p.add_argument("--frames", required=True)
    p.add_argument("--frame-index", type=int, default=0)
    p.add_argument("--box", required=True, help="cx,cy,w,h")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_build_model)

    p = sub.add_parser("track", help="single-target DMK tracking")
    p.add_argument("--frames", required=True)
    p.add_argument("--box", required=True, help="initial box cx,cy,w,h")
    p.add_argument("--model")
    p.add_argument("--template", action="store_true",
                   help="build a template model from the initial box")
    p.add_argument("--out", required=True)
    p.add_argument("--max-frames", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("baseline-ms", help="single-kernel mean-shift baseline")
    p.add_argument("--frames", required=True)
    p.add_argument("--box", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-frames", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_baseline_ms)

    p = sub.add_parser("multitrack", help="detection-seeded multi-target tracking")
    p.add_argument("--frames", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-frames", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_multitrack)

    p = sub.add_parser("eval", help="center-error evaluation against truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("timing", help="DMK update vs full-frame detection timing")
    p.add_argument("--frames", required=True)
    p.add_argument("--box", required=True)
    p.add_argument("--model")
    p.add_argument("--template", action="store_true")
    p.add_argument("--out")
    p.add_argument("--max-frames", type=int)
    _add_common(p)
    p.set_defaults(func=cmd_timing)

    p = sub.add_parser("overlay", help="draw trajectories onto frames")
    p.add_argument("--frames", required=True)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_overlay)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, DmkError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
