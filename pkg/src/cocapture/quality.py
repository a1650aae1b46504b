"""Facade texture quality: perspective, photometric, structural and
completeness terms, combined per view set and per single view.

Each term lies in [0, 1]:

* perspective ``q_s`` -- direction consistency times frontality;
* photometric ``q_d`` -- nearness times distance uniformity, on the
  ``[d_min, d_max]`` ramp;
* structural ``q_u`` -- ``exp(-beta * surplus)`` where surplus counts views
  beyond the fewest needed to reach the same coverage;
* completeness ``q_c`` -- covered fraction of the facade.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import cross2, intersect_intervals, measure, union_intervals
from .scene import Facade

WEIGHTS = (0.1, 0.85, 0.3, 0.1)


@dataclass(frozen=True)
class QualityParams:
    d_min: float = 10.0
    d_max: float = 80.0
    hfov: float = math.radians(69.9)
    weights: tuple[float, float, float, float] = WEIGHTS
    beta: float = 0.5

    def __post_init__(self):
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be non-negative")
        if not self.d_max > self.d_min > 0:
            raise ValueError("need d_max > d_min > 0")


@dataclass(frozen=True)
class QualityBreakdown:
    q_s: float
    q_d: float
    q_u: float
    q_c: float
    total: float
    n_views: int = 0

    def to_json(self) -> dict:
        return {
            "q_s": self.q_s,
            "q_d": self.q_d,
            "q_u": self.q_u,
            "q_c": self.q_c,
            "total": self.total,
            "n_views": self.n_views,
        }


@dataclass(frozen=True)
class View2D:
    point: tuple[float, float]
    direction: tuple[float, float]  # unit vector

    @classmethod
    def make(cls, point, direction) -> "View2D":
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        return cls((float(point[0]), float(point[1])), (float(d[0]), float(d[1])))

    @property
    def angle(self) -> float:
        return math.atan2(self.direction[1], self.direction[0])


@dataclass(frozen=True)
class FacadeView:
    """What one view contributes on one facade."""

    intervals: tuple[tuple[float, float], ...]
    distance: float
    cos_theta: float
    angle: float
    key: object = None

    @property
    def coverage(self) -> float:
        return measure(self.intervals)

    @property
    def midpoint(self) -> float:
        a, b = max(self.intervals, key=lambda iv: iv[1] - iv[0])
        return 0.5 * (a + b)


def fov_intervals(points, direction, facade: Facade, hfov: float):
    """Vectorized :func:`fov_interval` for (N, 2) points sharing one
    direction; returns (lo, hi) with ``hi <= lo`` where nothing is in view."""
    P = np.atleast_2d(np.asarray(points, dtype=float))[:, :2]
    s = np.asarray(direction, dtype=float)
    a = np.asarray(facade.a)
    e = np.asarray(facade.b) - a
    h = hfov / 2
    c, sn = math.cos(h), math.sin(h)
    r1 = np.array([c * s[0] + sn * s[1], -sn * s[0] + c * s[1]])  # rotated clockwise
    r2 = np.array([c * s[0] - sn * s[1], sn * s[0] + c * s[1]])  # counterclockwise
    lo = np.zeros(len(P))
    hi = np.ones(len(P))
    # cross(r1, q - p) >= 0 and cross(q - p, r2) >= 0, q = a + t e
    for k0, k1 in (
        (cross2(r1, a - P), cross2(r1, e)),
        (-cross2(r2, a - P), -cross2(r2, e)),
    ):
        if abs(k1) < 1e-15:
            hi = np.where(k0 < 0, -1.0, hi)
            continue
        t = -k0 / k1
        if k1 > 0:
            lo = np.maximum(lo, t)
        else:
            hi = np.minimum(hi, t)
    return lo, hi


def fov_interval(point, direction, facade: Facade, hfov: float) -> tuple[float, float] | None:
    """Parameter interval of ``facade`` inside the horizontal field of view."""
    lo, hi = fov_intervals(np.asarray(point, dtype=float)[None, :2], direction, facade, hfov)
    if hi[0] <= lo[0]:
        return None
    return (float(lo[0]), float(hi[0]))


def facade_view(view: View2D, facade: Facade, base_spans, params: QualityParams, pitch_deg: float = 0.0, key=None) -> FacadeView:
    """Clip ``base_spans`` (unoccluded spans from the view point) by the
    view's field of view and collect the per-view geometry."""
    fov = fov_interval(view.point, view.direction, facade, params.hfov)
    ivs = tuple(intersect_intervals(base_spans, *fov)) if fov else ()
    ivs = tuple(iv for iv in ivs if iv[1] - iv[0] > 1e-12)
    dist = float(facade.plane_distance(view.point)[0])
    cos_pitch = math.cos(math.radians(pitch_deg))
    if cos_pitch > 1e-9:
        dist /= cos_pitch
    nrm = np.asarray(facade.normal)
    cos_theta = float(-np.dot(view.direction, nrm))
    return FacadeView(ivs, dist, cos_theta, view.angle, key)


def _angle_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = np.abs(a - b) % (2 * math.pi)
    return np.minimum(d, 2 * math.pi - d)


def consistency(angles) -> float:
    """1 - mean pairwise angle / 90 deg, clamped to [0, 1]."""
    angles = np.asarray(angles, dtype=float)
    n = len(angles)
    if n < 2:
        return 1.0
    diff = _angle_between(angles[:, None], angles[None, :])
    mean = diff[np.triu_indices(n, 1)].mean()
    return float(min(1.0, max(0.0, 1.0 - math.degrees(mean) / 90.0)))


def nearness(distance, params: QualityParams):
    return np.clip((params.d_max - np.asarray(distance, dtype=float)) / (params.d_max - params.d_min), 0.0, 1.0)


def greedy_cover_count(views) -> int:
    """Views needed to cover the union of all spans, by greedy interval cover."""
    ivs = sorted((a, b, k) for k, fv in enumerate(views) for a, b in fv.intervals)
    if not ivs:
        return 0
    used = set()
    for comp_lo, comp_hi in union_intervals([(a, b) for a, b, _ in ivs]):
        x = comp_lo
        i = 0
        while x < comp_hi - 1e-12:
            best_end, best_k = x, None
            while i < len(ivs) and ivs[i][0] <= x + 1e-12:
                if ivs[i][1] > best_end:
                    best_end, best_k = ivs[i][1], ivs[i][2]
                i += 1
            if best_k is None:
                # skip past gap inside a component (cannot happen for a true union)
                break
            used.add(best_k)
            x = best_end
    return len(used)


def facade_terms(views, params: QualityParams) -> QualityBreakdown:
    """Set-level quality of ``FacadeView`` records on one facade (unweighted sum)."""
    eff = [v for v in views if v.intervals]
    if not eff:
        return QualityBreakdown(0.0, 0.0, 1.0, 0.0, 1.0, 0)
    angles = np.array([v.angle for v in eff])
    front = float(np.mean([max(0.0, v.cos_theta) for v in eff]))
    q_s = consistency(angles) * front
    dist = np.array([v.distance for v in eff])
    near = float(np.mean(nearness(dist, params)))
    unif = 1.0 - (dist.max() - dist.min()) / (params.d_max - params.d_min)
    q_d = near * min(1.0, max(0.0, unif))
    n_min = greedy_cover_count(eff)
    q_u = math.exp(-params.beta * max(0, len(eff) - n_min))
    q_c = min(1.0, measure([iv for v in eff for iv in v.intervals]))
    return QualityBreakdown(q_s, q_d, q_u, q_c, q_s + q_d + q_u + q_c, len(eff))


def view_terms(view: FacadeView, context, params: QualityParams) -> QualityBreakdown:
    """Per-view quality of ``view`` within ``context``; ``total`` is the weighted score."""
    if not view.intervals:
        return QualityBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, 0)
    q_s = max(0.0, view.cos_theta)
    q_d = float(nearness(view.distance, params))
    mid = view.midpoint
    mult = 0
    for other in context:
        if any(a <= mid <= b for a, b in other.intervals):
            mult += 1
    mult = max(mult, 1)
    q_u = math.exp(-params.beta * (mult - 1))
    q_c = min(1.0, view.coverage)
    w1, w2, w3, w4 = params.weights
    return QualityBreakdown(q_s, q_d, q_u, q_c, w1 * q_s + w2 * q_d + w3 * q_u + w4 * q_c, 1)


# -- public API over plain 2D views ----------------------------------------


def _facade_views(views, facade, scene, params):
    from .visibility import facade_spans

    if not views:
        return []
    pts = np.array([v.point for v in views])
    spans = facade_spans(pts, facade, scene, params.d_max)
    return [facade_view(v, facade, s, params, key=i) for i, (v, s) in enumerate(zip(views, spans))]


def facade_quality(views, facade: Facade, scene, params: QualityParams) -> QualityBreakdown:
    return facade_terms(_facade_views(list(views), facade, scene, params), params)


def view_facade_quality(view: View2D, facade: Facade, context, scene, params: QualityParams) -> float:
    context = list(context)
    if view not in context:
        context.append(view)
    fvs = _facade_views(context, facade, scene, params)
    own = fvs[context.index(view)]
    return view_terms(own, [f for f in fvs if f.intervals], params).total


def point_quality(p, directions: dict, scene, params: QualityParams, contexts: dict | None = None) -> float:
    """Sum of view-facade quality of ``p`` over the facades it sees, each
    with that facade's assigned direction. ``contexts`` maps facade id to
    the other views on that facade."""
    from .visibility import visible_facades

    total = 0.0
    seen = sorted({s.facade for s in visible_facades(p, scene, params.d_max)})
    for fid in seen:
        if fid not in directions:
            continue
        v = View2D.make(p, directions[fid])
        ctx = list((contexts or {}).get(fid, []))
        total += view_facade_quality(v, scene.facades[fid], ctx, scene, params)
    return total


def ground_quality(views, samples, camera, mesh=None, beta: float = 0.5, d_max: float | None = None) -> QualityBreakdown:
    """Q = Q_u + Q_c of a horizontal plane from nadir views only.

    ``samples`` are the plane's (N, 3) sample points. Zero coverage gates
    the total to 0.
    """
    from .visibility import view_sees

    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    views = list(views)
    for v in views:
        if not v.is_nadir:
            raise ValueError(f"non-nadir view at {v.position} (pitch {v.pitch})")
    if not views or len(samples) == 0:
        return QualityBreakdown(0.0, 0.0, 1.0, 0.0, 0.0, len(views))
    normals = np.tile([0.0, 0.0, 1.0], (len(samples), 1))
    dm = camera.d_max_m if d_max is None else d_max
    cover = np.array([view_sees(v.position, v.yaw, v.pitch, samples, normals, camera, mesh, dm) for v in views])
    q_c = float(cover.any(axis=0).mean())
    if q_c == 0.0:
        return QualityBreakdown(0.0, 0.0, 1.0, 0.0, 0.0, len(views))
    n_eff = int(cover.any(axis=1).sum())
    n_min = greedy_set_cover(cover)
    q_u = math.exp(-beta * max(0, n_eff - n_min))
    return QualityBreakdown(0.0, 0.0, q_u, q_c, q_u + q_c, n_eff)


def greedy_set_cover(cover: np.ndarray) -> int:
    """Greedy count of rows needed to cover every column any row covers."""
    cover = np.asarray(cover, dtype=bool)
    todo = cover.any(axis=0)
    weights = cover.astype(np.float32)
    used = 0
    while todo.any():
        gain = weights @ todo.astype(np.float32)
        k = int(np.argmax(gain))
        if gain[k] <= 0:
            break
        todo &= ~cover[k]
        used += 1
    return used
