"""2D facade visibility with building occlusion and 3D line of sight."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import cross2, point_segment_distance, subtract_intervals
from .scene import Facade, Mesh25D, Scene

MIN_SPAN_FRACTION = 0.01


@dataclass(frozen=True)
class VisibleSpan:
    facade: int
    t0: float
    t1: float
    observer: tuple[float, float]

    @property
    def length(self) -> float:
        return self.t1 - self.t0


def _occlusion_intervals(points: np.ndarray, facade: Facade, c: np.ndarray, d: np.ndarray):
    """Parameter interval on ``facade`` hidden by each edge cd, per point.

    Each edge is clipped to the triangle (p, a, b); the clipped piece is then
    centrally projected from p onto the facade line. ``points`` is (N, 2),
    ``c`` and ``d`` are (M, 2); returns (valid, lo, hi) shaped (N, M).
    """
    a = np.asarray(facade.a)
    b = np.asarray(facade.b)
    P = points[:, None, :]
    C = c[None, :, :]
    D = d[None, :, :]
    shape = (len(points), len(c))
    s_lo = np.zeros(shape)
    s_hi = np.ones(shape)
    empty = np.zeros(shape, dtype=bool)
    # triangle p->a->b is clockwise for points in front of the facade
    for u, v in ((P, a), (a, b), (b, P)):
        g0 = -cross2(v - u, C - u)
        g1 = -cross2(v - u, D - u)
        g0, g1 = np.broadcast_arrays(g0, g1)
        empty |= (g0 < 0) & (g1 < 0)
        crossing = (g0 < 0) != (g1 < 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            s_star = g0 / (g0 - g1)
        s_lo = np.where(crossing & (g0 < 0), np.maximum(s_lo, s_star), s_lo)
        s_hi = np.where(crossing & (g0 >= 0), np.minimum(s_hi, s_star), s_hi)
    valid = ~empty & (s_lo <= s_hi)
    cd = D - C
    x_lo = C + s_lo[..., None] * cd
    x_hi = C + s_hi[..., None] * cd

    def project(x):
        r = x - P
        den = cross2(r, b - a)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = cross2(r, P - a) / den
        return np.where(np.abs(den) > 1e-15, t, np.nan)

    t1 = project(x_lo)
    t2 = project(x_hi)
    valid &= np.isfinite(t1) & np.isfinite(t2)
    lo = np.clip(np.minimum(t1, t2), 0.0, 1.0)
    hi = np.clip(np.maximum(t1, t2), 0.0, 1.0)
    valid &= hi > lo
    return valid, lo, hi


def facade_spans(points, facade: Facade, scene: Scene, d_max: float) -> list[list[tuple[float, float]]]:
    """Unoccluded parameter spans of ``facade`` for each observer point.

    A span survives when it is at least 1% of the facade and its nearest
    point lies within ``d_max`` of the observer.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))[:, :2]
    n = len(points)
    out: list[list[tuple[float, float]]] = [[] for _ in range(n)]
    if n == 0:
        return out
    facing = facade.plane_distance(points) > 1e-9
    if not facing.any():
        return out
    idx = np.nonzero(facing)[0]
    P = points[idx]
    edges = scene.edges
    a = np.asarray(facade.a)
    nrm = np.asarray(facade.normal)
    others = np.array([g.id for g in scene.facades if g.id != facade.id], dtype=int)
    if len(others):
        c = edges[others, 0]
        d = edges[others, 1]
        # edges entirely behind the facade line cannot hide anything
        front = ((c - a) @ nrm > 1e-12) | ((d - a) @ nrm > 1e-12)
        c, d = c[front], d[front]
    if len(others) and len(c):
        valid, lo, hi = _occlusion_intervals(P, facade, c, d)
        any_cut = valid.any(axis=1)
    else:
        any_cut = np.zeros(len(P), dtype=bool)
    A = np.asarray(facade.a)
    B = np.asarray(facade.b)
    for k, i in enumerate(idx):
        if any_cut[k]:
            row = np.nonzero(valid[k])[0]
            spans = subtract_intervals([(0.0, 1.0)], zip(lo[k, row].tolist(), hi[k, row].tolist()))
        else:
            spans = [(0.0, 1.0)]
        kept = []
        for t0, t1 in spans:
            if t1 - t0 < MIN_SPAN_FRACTION:
                continue
            near = point_segment_distance(P[k : k + 1], A + t0 * (B - A), A + t1 * (B - A))[0]
            if near > d_max:
                continue
            kept.append((t0, t1))
        out[i] = kept
    return out


def visible_facades(p, scene: Scene, d_max: float) -> list[VisibleSpan]:
    """Spans of every facade visible from the 2D point ``p``."""
    p = np.asarray(p, dtype=float)[:2]
    if scene.inside_building(p[None])[0]:
        raise ValueError(f"observer {tuple(p)} lies inside a building")
    out = []
    for f in scene.facades:
        for t0, t1 in facade_spans(p[None], f, scene, d_max)[0]:
            out.append(VisibleSpan(f.id, t0, t1, (float(p[0]), float(p[1]))))
    return out


class VisibilityTable:
    """Visible spans for a fixed set of candidate points, indexed both ways."""

    def __init__(self, points, scene: Scene, d_max: float):
        self.points = np.atleast_2d(np.asarray(points, dtype=float)).reshape(-1, 2)
        self.scene = scene
        self.d_max = d_max
        # by_facade[fid] -> {point index: spans}
        self.by_facade: dict[int, dict[int, list[tuple[float, float]]]] = {}
        for f in scene.facades:
            spans = facade_spans(self.points, f, scene, d_max)
            self.by_facade[f.id] = {i: s for i, s in enumerate(spans) if s}

    def facades_of(self, i: int) -> list[int]:
        return [fid for fid, rows in self.by_facade.items() if i in rows]

    def observers(self, fid: int) -> list[int]:
        return sorted(self.by_facade[fid])


def facade_observers(facade: Facade, candidates, scene: Scene, d_max: float):
    """(point, span) pairs for every candidate that sees part of ``facade``, in grid order."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    out = []
    for p, spans in zip(candidates, facade_spans(candidates, facade, scene, d_max)):
        for t0, t1 in spans:
            out.append(((float(p[0]), float(p[1])), VisibleSpan(facade.id, t0, t1, (float(p[0]), float(p[1])))))
    return out


def los_3d(p, q, mesh: Mesh25D) -> bool:
    """True iff the open segment pq does not pass through any prism interior."""
    return bool(mesh.segments_clear(np.asarray(p, dtype=float)[None], np.asarray(q, dtype=float)[None])[0])


def view_sees(position, yaw: float, pitch: float, pts, normals, camera, mesh: Mesh25D | None, d_max: float) -> np.ndarray:
    """Which surface samples a 3D view captures: in frustum, front-facing,
    within ``d_max`` and unoccluded by the 2.5D mesh."""
    from .camera import in_frustum

    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    normals = np.atleast_2d(np.asarray(normals, dtype=float))
    pos = np.asarray(position, dtype=float)
    v = pos - pts
    dist = np.linalg.norm(v, axis=1)
    ok = (dist <= d_max) & (np.einsum("ij,ij->i", v, normals) > 1e-9)
    ok &= in_frustum(pos, yaw, pitch, pts, camera)
    if mesh is not None and ok.any():
        idx = np.nonzero(ok)[0]
        start = pts[idx] + 1e-6 * normals[idx]
        ok[idx] = mesh.segments_clear(start, np.broadcast_to(pos, start.shape))
    return ok
