"""Command line: ``cocapture {plan,evaluate,render,summary}``.

Exit codes: 0 success, 2 input error, 3 planning failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .io import InputError, dumps, load_camera, load_config, load_flightplan, load_scene, write_outputs, write_report
from .pipeline import PlannerConfig, PlanningError, evaluate, plan
from .render import LAYERS, RenderSpec, render_svg
from .scene import compute_no_dipping_zone

EXIT_OK, EXIT_INPUT, EXIT_PLANNING = 0, 2, 3
OUT_ENV = "COCAPTURE_OUT"


def _default_out() -> str:
    return os.environ.get(OUT_ENV, "out")


def _config(args) -> PlannerConfig:
    camera = load_camera(args.camera) if args.camera else None
    if args.config:
        return load_config(args.config, camera)
    return PlannerConfig() if camera is None else PlannerConfig(camera=camera)


def _cmd_plan(args) -> int:
    config = _config(args)
    scene = load_scene(args.scene, config.d_min)
    result = plan(scene, config)
    paths = write_outputs(result, args.out)
    for p in paths:
        print(p)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    config = _config(args)
    scene = load_scene(args.scene, config.d_min)
    fp = load_flightplan(args.plan)
    report = evaluate(fp, scene, config)
    if args.out:
        print(write_report(report, args.out))
    else:
        sys.stdout.write(dumps(report.to_json()))
    return EXIT_OK


def _cmd_render(args) -> int:
    scene = load_scene(args.scene, args.d_min)
    fp = load_flightplan(args.plan) if args.plan else None
    zone = compute_no_dipping_zone(scene, args.d_min)
    layers = tuple(args.layers.split(",")) if args.layers else RenderSpec().layers
    try:
        spec = RenderSpec(layers=layers, scale=args.scale)
    except ValueError as exc:
        raise InputError("--layers", str(exc)) from exc
    out = Path(args.out)
    if out.suffix != ".svg":
        out = out / "plan.svg"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render_svg(scene, fp, zone, spec=spec))
    print(out)
    return EXIT_OK


def _cmd_summary(args) -> int:
    fp = load_flightplan(args.plan)
    print(f"{'images':>8} {'hover':>8} {'trajectory_m':>14}")
    print(f"{fp.images:>8d} {fp.hover:>8d} {fp.trajectory_m:>14.1f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cocapture", description="Aerial path planning for geometry and texture co-capture.")
    p.add_argument("--deterministic", action="store_true", help="reserved; planning is always deterministic")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scene", required=True)
        sp.add_argument("--camera")
        sp.add_argument("--config")
        sp.add_argument("--deterministic", action="store_true", help=argparse.SUPPRESS)

    sp = sub.add_parser("plan", help="plan a flight and write flightplan/quality/summary files")
    common(sp)
    sp.add_argument("--out", default=_default_out(), help=f"output directory (default ${OUT_ENV} or ./out)")
    sp.set_defaults(func=_cmd_plan)

    sp = sub.add_parser("evaluate", help="score an existing flightplan.json")
    common(sp)
    sp.add_argument("--plan", required=True)
    sp.add_argument("--out", help="directory for quality.json (default: stdout)")
    sp.set_defaults(func=_cmd_evaluate)

    sp = sub.add_parser("render", help="draw a scene and plan as SVG")
    sp.add_argument("--scene", required=True)
    sp.add_argument("--plan")
    sp.add_argument("--out", default=_default_out(), help="plan.svg path or directory")
    sp.add_argument("--layers", help=f"comma-separated subset of {','.join(LAYERS)}")
    sp.add_argument("--scale", type=float, default=4.0, help="pixels per metre")
    sp.add_argument("--d-min", dest="d_min", type=float, default=10.0)
    sp.add_argument("--deterministic", action="store_true", help=argparse.SUPPRESS)
    sp.set_defaults(func=_cmd_render)

    sp = sub.add_parser("summary", help="print image/hover/length counts of a flightplan.json")
    sp.add_argument("--plan", required=True)
    sp.add_argument("--deterministic", action="store_true", help=argparse.SUPPRESS)
    sp.set_defaults(func=_cmd_summary)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except PlanningError as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_PLANNING
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
