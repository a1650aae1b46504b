"""Deterministic SVG maps of scenes, zones, views and routes."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DIPPING_COLOR = "#d62728"
PLANAR_COLOR = "#1f77b4"
BUILDING_COLOR = "#7f7f7f"
ZONE_COLOR = "#ff9896"
CANDIDATE_COLOR = "#bcbd22"
ROUTE_COLOR = "#2ca02c"
LAYERS = ("map", "zone", "candidates", "dipping_points", "directions", "planar_stations", "route")


@dataclass(frozen=True)
class RenderSpec:
    layers: tuple[str, ...] = ("map", "zone", "dipping_points", "directions", "planar_stations", "route")
    scale: float = 4.0  # px per metre
    margin_m: float = 10.0

    def __post_init__(self):
        bad = [layer for layer in self.layers if layer not in LAYERS]
        if bad:
            raise ValueError(f"unknown layers {bad}")
        if self.scale <= 0:
            raise ValueError("scale must be positive")


def _fmt(v: float) -> str:
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


class _Canvas:
    def __init__(self, bounds, spec: RenderSpec):
        xmin, ymin, xmax, ymax = bounds
        m = spec.margin_m
        self.x0, self.y1 = xmin - m, ymax + m
        self.s = spec.scale
        self.w = (xmax - xmin + 2 * m) * spec.scale
        self.h = (ymax - ymin + 2 * m) * spec.scale
        self.items: list[str] = []

    def xy(self, p) -> tuple[str, str]:
        # north up: flip y
        return _fmt((p[0] - self.x0) * self.s), _fmt((self.y1 - p[1]) * self.s)

    def points(self, pts) -> str:
        return " ".join(",".join(self.xy(p)) for p in pts)


def render_svg(scene, flightplan=None, zone=None, candidates=None, spec: RenderSpec | None = None) -> str:
    """SVG text for the requested layers. Dipping views are red, planar
    views blue; the route is a single polyline from the launch point."""
    spec = spec or RenderSpec()
    cv = _Canvas(scene.bounds, spec)
    out = cv.items
    if "zone" in spec.layers and zone is not None:
        for ring in zone.polygons:
            out.append(f'<polygon class="zone" points="{cv.points(ring)}" fill="{ZONE_COLOR}" fill-opacity="0.35" stroke="none"/>')
    if "map" in spec.layers:
        for b in scene.buildings:
            out.append(
                f'<polygon class="building" id="building-{b.id}" points="{cv.points(b.ring)}" fill="{BUILDING_COLOR}" stroke="#000000" stroke-width="1"/>'
            )
    if "candidates" in spec.layers and candidates is not None:
        for p in np.asarray(candidates).reshape(-1, 2):
            x, y = cv.xy(p)
            out.append(f'<circle class="candidate" cx="{x}" cy="{y}" r="1" fill="{CANDIDATE_COLOR}"/>')
    if flightplan is not None:
        if "route" in spec.layers:
            pts = [flightplan.launch] + [w.position for w in flightplan.waypoints]
            out.append(f'<polyline class="route" points="{cv.points(pts)}" fill="none" stroke="{ROUTE_COLOR}" stroke-width="1"/>')
        seen = set()
        for w in flightplan.waypoints:
            if not w.is_hover:
                continue
            kinds = {c.kind for c in w.captures}
            key = (round(w.position[0], 6), round(w.position[1], 6), tuple(sorted(kinds)))
            x, y = cv.xy(w.position)
            if "dipping" in kinds and "dipping_points" in spec.layers and key not in seen:
                out.append(f'<circle class="dipping" cx="{x}" cy="{y}" r="3" fill="{DIPPING_COLOR}"/>')
            if "planar" in kinds and "planar_stations" in spec.layers and key not in seen:
                out.append(f'<rect class="planar" x="{_fmt(float(x) - 3)}" y="{_fmt(float(y) - 3)}" width="6" height="6" fill="{PLANAR_COLOR}"/>')
            if "directions" in spec.layers and key not in seen:
                for c in w.captures:
                    if c.kind != "dipping" or c.pitch < -60:
                        continue
                    psi = math.radians(c.yaw)
                    tip = (w.position[0] + 6 * math.sin(psi), w.position[1] + 6 * math.cos(psi))
                    tx, ty = cv.xy(tip)
                    out.append(f'<line class="direction" x1="{x}" y1="{y}" x2="{tx}" y2="{ty}" stroke="{DIPPING_COLOR}" stroke-width="1"/>')
            seen.add(key)
    legend = [("dipping views", DIPPING_COLOR), ("planar views", PLANAR_COLOR), ("route", ROUTE_COLOR)]
    for k, (label, color) in enumerate(legend):
        y = 14 + 16 * k
        out.append(f'<rect class="legend" x="8" y="{y - 9}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="24" y="{y}" font-size="12" font-family="sans-serif">{label}</text>')
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(cv.w)}" height="{_fmt(cv.h)}" '
        f'viewBox="0 0 {_fmt(cv.w)} {_fmt(cv.h)}">'
    )
    body = "\n".join(out)
    return f'<?xml version="1.0" encoding="UTF-8"?>\n{head}\n<rect width="100%" height="100%" fill="#ffffff"/>\n{body}\n</svg>\n'
