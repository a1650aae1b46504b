"""Plan every bundled fixture, print image/hover/length counts next to the
oblique-grid baseline, and write flight plans and SVG maps.

    python scripts/run_fixtures.py --out runs
"""

import argparse
import time
from pathlib import Path

from cocapture.io import bundled_fixture, load_config, load_scene, write_outputs
from cocapture.pipeline import evaluate, op_baseline, plan
from cocapture.render import RenderSpec, render_svg
from cocapture.scene import compute_no_dipping_zone

FIXTURES = ("single", "two", "three", "four", "polytech5", "empty")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs")
    ap.add_argument("--fixtures", nargs="*", default=list(FIXTURES))
    args = ap.parse_args()
    config = load_config(bundled_fixture("config"))
    head = f"{'scene':<10} {'method':<6} {'images':>7} {'hover':>6} {'length_m':>9} {'mean_Qd':>8} {'min_Qr':>7} {'sec':>6}"
    print(head)
    print("-" * len(head))
    for name in args.fixtures:
        scene = load_scene(bundled_fixture(name), config.d_min)
        t = time.perf_counter()
        result = plan(scene, config)
        dt = time.perf_counter() - t
        out = Path(args.out) / name
        write_outputs(result, out)
        zone = compute_no_dipping_zone(scene, config.d_min)
        (out / "plan.svg").write_text(render_svg(scene, result.flightplan, zone))
        layers = ("map", "zone", "candidates", "dipping_points", "directions")
        if result.dipping is not None:
            svg = render_svg(scene, result.flightplan, zone, result.dipping.candidates, RenderSpec(layers=layers))
            (out / "dipping.svg").write_text(svg)
        op = op_baseline(scene, config)
        op_rep = evaluate(op, scene, config)
        for label, rep, s in (("ours", result.report, result.summary), ("OP", op_rep, op)):
            qr = float(rep.recon.min()) if len(rep.recon) else float("nan")
            sec = f"{dt:6.1f}" if label == "ours" else f"{'':>6}"
            print(f"{name:<10} {label:<6} {s.images:>7d} {s.hover:>6d} {s.trajectory_m:>9.1f} {rep.mean_view_q_d:>8.3f} {qr:>7.3f} {sec}")


if __name__ == "__main__":
    main()
