"""Small vectorized 2D/3D geometry kernels shared by the planner stages."""

from __future__ import annotations

import numpy as np

EPS = 1e-9


def cross2(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def rotate2(v, angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    v = np.asarray(v, dtype=float)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def signed_area(ring: np.ndarray) -> float:
    x, y = ring[:, 0], ring[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def point_segment_distance(pts, a, b) -> np.ndarray:
    """Distance from each point in ``pts`` (N,2) to segment ab."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    a = np.asarray(a, dtype=float)
    ab = np.asarray(b, dtype=float) - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.linalg.norm(pts - a, axis=1)
    t = np.clip(((pts - a) @ ab) / denom, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.linalg.norm(pts - proj, axis=1)


def ring_boundary_distance(pts, ring: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    out = np.full(len(pts), np.inf)
    n = len(ring)
    for k in range(n):
        out = np.minimum(out, point_segment_distance(pts, ring[k], ring[(k + 1) % n]))
    return out


def points_in_ring(pts, ring: np.ndarray) -> np.ndarray:
    """Crossing-number test; boundary points may land either way."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    n = len(ring)
    for k in range(n):
        x1, y1 = ring[k]
        x2, y2 = ring[(k + 1) % n]
        cond = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xin = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= cond & (x < xin)
    return inside


def points_strictly_in_ring(pts, ring: np.ndarray, eps: float = EPS) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return points_in_ring(pts, ring) & (ring_boundary_distance(pts, ring) > eps)


def segments_intersect(p1, p2, q1, q2) -> np.ndarray:
    """Closed segment intersection test, broadcasting over leading axes."""
    p1, p2, q1, q2 = (np.asarray(v, dtype=float) for v in (p1, p2, q1, q2))
    d1 = cross2(q2 - q1, p1 - q1)
    d2 = cross2(q2 - q1, p2 - q1)
    d3 = cross2(p2 - p1, q1 - p1)
    d4 = cross2(p2 - p1, q2 - p1)
    proper = (d1 * d2 < 0) & (d3 * d4 < 0)

    def on_seg(a, b, c, d):
        return (np.abs(d) <= EPS) & (
            np.minimum(a[..., 0], b[..., 0]) - EPS <= c[..., 0]
        ) & (c[..., 0] <= np.maximum(a[..., 0], b[..., 0]) + EPS) & (
            np.minimum(a[..., 1], b[..., 1]) - EPS <= c[..., 1]
        ) & (c[..., 1] <= np.maximum(a[..., 1], b[..., 1]) + EPS)

    touch = (
        on_seg(q1, q2, p1, d1)
        | on_seg(q1, q2, p2, d2)
        | on_seg(p1, p2, q1, d3)
        | on_seg(p1, p2, q2, d4)
    )
    return proper | touch


def segments_enter_prism(A, B, ring: np.ndarray, height: float, eps: float = 1e-7) -> np.ndarray:
    """True where the open 3D segment AB passes through the open prism
    ``ring x (0, height)``. Grazing the boundary does not count."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    n = len(A)
    d = B - A
    # parameter range with 0 < z < height
    lo = np.zeros(n)
    hi = np.ones(n)
    dz = d[:, 2]
    flat = np.abs(dz) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        t_floor = (0.0 - A[:, 2]) / dz
        t_top = (height - A[:, 2]) / dz
    t_a = np.where(flat, -np.inf, np.minimum(t_floor, t_top))
    t_b = np.where(flat, np.inf, np.maximum(t_floor, t_top))
    lo = np.maximum(lo, t_a)
    hi = np.minimum(hi, t_b)
    flat_out = flat & ((A[:, 2] <= eps) | (A[:, 2] >= height - eps))
    active = (hi - lo > 1e-12) & ~flat_out
    if not active.any():
        return np.zeros(n, dtype=bool)

    idx = np.nonzero(active)[0]
    a2 = A[idx, :2]
    d2 = d[idx, :2]
    lo_a, hi_a = lo[idx], hi[idx]
    m = len(ring)
    c = ring
    e = np.roll(ring, -1, axis=0) - ring
    # crossing parameters of segment with each edge line: a2 + t d2 = c + u e
    denom = cross2(d2[:, None, :], e[None, :, :])  # (k, m)
    diff = c[None, :, :] - a2[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross2(diff, e[None, :, :]) / denom
        u = cross2(diff, d2[:, None, :]) / denom
    ok = (np.abs(denom) > 1e-15) & (u >= -1e-12) & (u <= 1 + 1e-12)
    ok &= (t > lo_a[:, None]) & (t < hi_a[:, None])
    t = np.where(ok, t, lo_a[:, None])
    cuts = np.sort(np.concatenate([lo_a[:, None], t, hi_a[:, None]], axis=1), axis=1)
    mids = 0.5 * (cuts[:, :-1] + cuts[:, 1:])
    lens = cuts[:, 1:] - cuts[:, :-1]
    pts = a2[:, None, :] + mids[..., None] * d2[:, None, :]
    flat_pts = pts.reshape(-1, 2)
    inside = points_strictly_in_ring(flat_pts, ring, eps).reshape(mids.shape)
    inside &= lens > 1e-12
    # a segment whose 2D length is tiny but inside still counts if z range is proper
    out = np.zeros(n, dtype=bool)
    out[idx] = inside.any(axis=1)
    return out


# -- 1D interval helpers ---------------------------------------------------


def union_intervals(intervals, eps: float = 0.0):
    """Merge a sequence of (lo, hi) pairs into sorted disjoint intervals."""
    ivs = sorted((float(a), float(b)) for a, b in intervals if b > a)
    out: list[list[float]] = []
    for a, b in ivs:
        if out and a <= out[-1][1] + eps:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def measure(intervals) -> float:
    return float(sum(b - a for a, b in union_intervals(intervals)))


def intersect_intervals(ivs, lo: float, hi: float):
    out = []
    for a, b in ivs:
        a2, b2 = max(a, lo), min(b, hi)
        if b2 > a2:
            out.append((a2, b2))
    return out


def subtract_intervals(base, cuts):
    """``base`` minus the union of ``cuts`` (cuts are treated as closed)."""
    result = list(base)
    for c0, c1 in union_intervals(cuts):
        nxt = []
        for a, b in result:
            if c1 <= a or c0 >= b:
                nxt.append((a, b))
                continue
            if c0 > a:
                nxt.append((a, c0))
            if c1 < b:
                nxt.append((c1, b))
        result = nxt
    return result
