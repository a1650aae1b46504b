"""Dipping views: direction initialization, dipping point selection, vertical
lifting, hover merging and the dominance-driven refinement loop."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraModel, View3D, yaw_of
from .geometry import intersect_intervals, rotate2
from .quality import FacadeView, QualityParams, View2D, facade_terms, facade_view, fov_interval, fov_intervals
from .scene import Facade, NoDippingZone, Scene, grid_sample_candidates
from .visibility import VisibilityTable, facade_spans


@dataclass(frozen=True)
class DippingParams:
    k_d: float = 0.8
    tau_s_deg: float = 5.0
    scan_steps: int = 12
    tau_p: float = 1.25
    grid_step: float = 5.0
    max_iters: int = 10
    removal_tol: float = 1e-6


# -- lifting ---------------------------------------------------------------


def h_pic(view, facade: Facade, camera: CameraModel) -> float:
    """Projected sensor height of ``view`` (a View3D or a point) on the facade plane."""
    pos = view.position if isinstance(view, View3D) else view
    d = float(facade.plane_distance(np.asarray(pos, dtype=float)[:2])[0])
    if d <= 0:
        raise ValueError("view lies on or behind the facade plane")
    return camera.sensor_h_mm * d / camera.focal_mm


def sequence_altitudes(H: float, min_alt: float, step: float) -> np.ndarray:
    if H < min_alt:
        raise ValueError("safe altitude below minimum flight altitude")
    if step <= 0:
        raise ValueError("altitude step must be positive")
    n = int(math.floor((H - min_alt) / step + 1e-9)) + 1
    return H - step * np.arange(n)


@dataclass(frozen=True)
class DippingSequence3D:
    origin: tuple[float, float]
    facade: int
    views: tuple[View3D, ...]
    step: float
    h_pic: float
    lowest_extra_view: View3D | None = None

    @property
    def altitudes(self) -> np.ndarray:
        return np.array([v.position[2] for v in self.views])


def lift_sequence(
    p,
    facade: Facade,
    H: float,
    camera: CameraModel,
    min_alt: float,
    k_d: float = 0.8,
    direction=None,
    extra_view: bool = True,
) -> DippingSequence3D:
    """Vertical sequence of horizontal views at ``p``, spaced ``k_d * h_pic``
    from ``H`` down, plus one view at the lowest stop pitched down until
    the bottom image edge meets the ground on the facade plane."""
    p = np.asarray(p, dtype=float)[:2]
    d = float(facade.plane_distance(p)[0])
    if d <= 0:
        raise ValueError("dipping point must lie in front of its facade")
    hp = camera.sensor_h_mm * d / camera.focal_mm
    step = k_d * hp
    alts = sequence_altitudes(H, min_alt, step)
    s = np.asarray(direction if direction is not None else -np.asarray(facade.normal), dtype=float)
    yaw = yaw_of(s)
    target = str(facade.id)
    views = tuple(View3D((float(p[0]), float(p[1]), float(z)), yaw, 0.0, target) for z in alts)
    extra = None
    if extra_view:
        z_low = float(alts[-1])
        tilt = math.degrees(math.atan2(z_low, d) - camera.vfov / 2)
        extra = View3D(views[-1].position, yaw, -max(0.0, tilt), target)
    return DippingSequence3D((float(p[0]), float(p[1])), facade.id, views, step, hp, extra)


# -- hover cost ------------------------------------------------------------


def merge_savings(d: float, tau_d: float) -> float:
    """Half a unit-peak Gaussian (sigma = tau_d / 3) inside the merge radius."""
    if tau_d <= 0 or d > tau_d:
        return 0.0
    sigma = tau_d / 3.0
    return 0.5 * math.exp(-(d * d) / (2 * sigma * sigma))


def merge_threshold(h_a: float, h_b: float, k_d: float) -> float:
    return (1 - k_d) * min(h_a, h_b)


@dataclass
class HoverGroup:
    position: tuple[float, float, float]
    members: list[View3D] = field(default_factory=list)
    merged: bool = False

    @property
    def targets(self) -> list[str]:
        return sorted({m.target for m in self.members if m.target}, key=str)


def cost_terms(sequences, k_d: float) -> tuple[float, float]:
    """(number of 3D positions, summed merge savings over cross-sequence pairs)."""
    n = sum(len(s.views) for s in sequences)
    save = 0.0
    for i in range(len(sequences)):
        zi = sequences[i].altitudes
        for j in range(i + 1, len(sequences)):
            zj = sequences[j].altitudes
            tau = merge_threshold(sequences[i].h_pic, sequences[j].h_pic, k_d)
            if tau <= 0:
                continue
            D = np.abs(zi[:, None] - zj[None, :])
            sigma = tau / 3.0
            g = 0.5 * np.exp(-(D**2) / (2 * sigma * sigma))
            save += float(g[D <= tau].sum())
    return float(n), save


def hover_groups(sequences, k_d: float) -> list[HoverGroup]:
    """Physically merge cross-sequence view pairs closer than the threshold.

    Pairs are merged greedily by ascending distance and each view merges at
    most once; a merged pair hovers at its midpoint.
    """
    pairs = []
    for i in range(len(sequences)):
        for j in range(i + 1, len(sequences)):
            tau = merge_threshold(sequences[i].h_pic, sequences[j].h_pic, k_d)
            for a, va in enumerate(sequences[i].views):
                for b, vb in enumerate(sequences[j].views):
                    d = float(np.linalg.norm(np.subtract(va.position, vb.position)))
                    if d < tau:
                        pairs.append((d, i, a, j, b))
    pairs.sort()
    taken: dict[tuple[int, int], int] = {}
    groups: list[HoverGroup] = []
    for d, i, a, j, b in pairs:
        if (i, a) in taken or (j, b) in taken:
            continue
        va, vb = sequences[i].views[a], sequences[j].views[b]
        mid = tuple(float(x) for x in 0.5 * (np.asarray(va.position) + np.asarray(vb.position)))
        g = HoverGroup(mid, [], merged=True)
        for k, (si, vi) in enumerate(((i, a), (j, b))):
            v = sequences[si].views[vi]
            g.members.append(View3D(mid, v.yaw, v.pitch, v.target))
        taken[(i, a)] = taken[(j, b)] = len(groups)
        groups.append(g)
    for i, seq in enumerate(sequences):
        for a, v in enumerate(seq.views):
            if (i, a) not in taken:
                taken[(i, a)] = len(groups)
                groups.append(HoverGroup(v.position, [v]))
        if seq.lowest_extra_view is not None:
            g = groups[taken[(i, len(seq.views) - 1)]]
            ev = seq.lowest_extra_view
            g.members.append(View3D(g.position, ev.yaw, ev.pitch, ev.target))
    groups.sort(key=lambda g: (-g.position[2], g.position[0], g.position[1]))
    return groups


def hovering_cost(sequences, k_d: float) -> tuple[float, list[HoverGroup]]:
    """Surrogate cost C(p) and the physically merged hover groups at one point."""
    n, save = cost_terms(sequences, k_d)
    return n - save, hover_groups(sequences, k_d)


# -- dominance -------------------------------------------------------------


def dominates(g, h, eps: float = 1e-12) -> bool:
    """``g`` dominates ``h`` (minimization): no component worse, one strictly better."""
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    return bool(np.all(g <= h) and np.any(g < h - eps))


@dataclass(frozen=True)
class MoveRecord:
    kind: str
    subject: object
    before: tuple
    after: tuple
    value: object = None  # new point / direction, for replay


# -- plan state ------------------------------------------------------------


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


class DippingPlan:
    """Mutable dipping-view state: points, per-point target facades and
    per-facade viewing directions."""

    def __init__(self, scene: Scene, zone: NoDippingZone, camera: CameraModel, qparams: QualityParams, params: DippingParams):
        self.scene = scene
        self.zone = zone
        self.camera = camera
        self.q = qparams
        self.params = params
        self.points: dict[int, np.ndarray] = {}
        self.views: dict[int, list[int]] = {}
        self.directions: dict[int, np.ndarray] = {}
        self.unobservable: list[int] = []
        self.reference_coverage: dict[int, float] = {}
        self.log: list[MoveRecord] = []
        self.iterations = 0
        self.converged = False
        self.initial_view_count = 0
        self._span_cache: dict = {}
        self.initial_state: tuple = ({}, {}, {})

    # geometry caches
    def spans(self, p, fid: int):
        key = (round(float(p[0]), 9), round(float(p[1]), 9), fid)
        s = self._span_cache.get(key)
        if s is None:
            s = facade_spans(np.asarray(p, dtype=float)[None], self.scene.facades[fid], self.scene, self.q.d_max)[0]
            self._span_cache[key] = s
        return s

    def facade_view(self, p, fid: int, direction=None) -> FacadeView:
        s = self.directions[fid] if direction is None else direction
        return facade_view(View2D.make(p, s), self.scene.facades[fid], self.spans(p, fid), self.q)

    def facade_records(self, fid: int, direction=None, override: dict | None = None, drop=None):
        """FacadeView per plan view on ``fid``; ``override`` moves points,
        ``drop`` excludes one (point, facade) view."""
        out = []
        for pid in sorted(self.points):
            if fid not in self.views[pid] or (pid, fid) == drop:
                continue
            p = (override or {}).get(pid, self.points[pid])
            out.append(self.facade_view(p, fid, direction))
        return out

    def facade_quality(self, fid: int, **kw):
        return facade_terms(self.facade_records(fid, **kw), self.q)

    def sequences(self, pid: int, p=None, fids=None) -> list[DippingSequence3D]:
        p = self.points[pid] if p is None else p
        fids = self.views[pid] if fids is None else fids
        out = []
        for fid in fids:
            out.append(
                lift_sequence(
                    p,
                    self.scene.facades[fid],
                    self.scene.safe_altitude,
                    self.camera,
                    self.scene.min_flight_altitude,
                    self.params.k_d,
                    self.directions[fid],
                )
            )
        return out

    def point_cost(self, pid: int, p=None, fids=None) -> float:
        n, save = cost_terms(self.sequences(pid, p, fids), self.params.k_d)
        return n - save

    def objective(self, pid: int, p=None) -> tuple:
        """(C(p), -Q(f) for each facade targeted by the point, ascending id)."""
        override = None if p is None else {pid: p}
        vec = [self.point_cost(pid, p)]
        for fid in self.views[pid]:
            vec.append(-self.facade_quality(fid, override=override).total)
        return tuple(vec)

    def coverage(self, fid: int, **kw) -> float:
        return self.facade_quality(fid, **kw).q_c

    @property
    def view_count(self) -> int:
        return sum(len(v) for v in self.views.values())

    def all_sequences(self) -> dict[int, list[DippingSequence3D]]:
        return {pid: self.sequences(pid) for pid in sorted(self.points) if self.views[pid]}

    def all_hover_groups(self) -> list[HoverGroup]:
        out = []
        for pid, seqs in self.all_sequences().items():
            out.extend(hover_groups(seqs, self.params.k_d))
        return out

    def total_cost(self) -> float:
        return sum(self.point_cost(pid) for pid in self.points if self.views[pid])


# -- initialization ----------------------------------------------------------


def _direction_candidates(facade: Facade, params: DippingParams):
    base = -np.asarray(facade.normal, dtype=float)
    ks = sorted(range(-params.scan_steps, params.scan_steps + 1), key=lambda k: (abs(k), k))
    return [(k, rotate2(base, math.radians(k * params.tau_s_deg))) for k in ks]


def init_direction(facade: Facade, observers, qparams: QualityParams, params: DippingParams | None = None):
    """Scan directions around the inverse normal; return the one with the
    best facade quality when every observer uses it.

    ``observers`` is a list of (point, spans). Ties go to the smaller
    rotation, then to the clockwise (negative) one. Returns None when there
    are no observers.
    """
    params = params or DippingParams()
    if not observers:
        return None
    pts = np.array([p for p, _ in observers], dtype=float)
    dist = facade.plane_distance(pts)
    nrm = np.asarray(facade.normal)
    best = None
    for k, s in _direction_candidates(facade, params):
        lo, hi = fov_intervals(pts, s, facade, qparams.hfov)
        cos_t = float(-np.dot(s, nrm))
        ang = math.atan2(s[1], s[0])
        recs = []
        for i, (_, spans) in enumerate(observers):
            if hi[i] <= lo[i]:
                continue
            ivs = tuple(iv for iv in intersect_intervals(spans, lo[i], hi[i]) if iv[1] - iv[0] > 1e-12)
            if ivs:
                recs.append(FacadeView(ivs, float(dist[i]), cos_t, ang))
        q = facade_terms(recs, qparams).total
        if best is None or q > best[0] + 1e-12:
            best = (q, k, s)
    return best[2]


class _FacadeIndex:
    """Active span intervals of one facade for fast coverage queries."""

    def __init__(self):
        self.items: dict[int, tuple] = {}  # pid -> intervals
        self._dirty = True

    def add(self, pid, intervals):
        self.items[pid] = intervals
        self._dirty = True

    def remove(self, pid):
        self.items.pop(pid, None)
        self._dirty = True

    def _build(self):
        starts, ends = [], []
        for ivs in self.items.values():
            for a, b in ivs:
                starts.append(a)
                ends.append(b)
        self.starts = np.sort(np.array(starts, dtype=float))
        self.ends = np.sort(np.array(ends, dtype=float))
        self._dirty = False

    def count(self, t) -> np.ndarray:
        """Number of active intervals containing t (closed-open)."""
        if self._dirty:
            self._build()
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.searchsorted(self.starts, t, "right") - np.searchsorted(self.ends, t, "right")

    def multiplicity(self, t: float) -> int:
        if self._dirty:
            self._build()
        return int(np.searchsorted(self.starts, t, "right") - np.searchsorted(self.ends, t, "left"))

    def uncovered_without(self, pid) -> float:
        """Measure of ``pid``'s spans not covered by any other active span."""
        if self._dirty:
            self._build()
        total = 0.0
        for a, b in self.items[pid]:
            inner = np.concatenate([self.starts, self.ends])
            inner = inner[(inner > a) & (inner < b)]
            cuts = np.unique(np.concatenate([[a, b], inner]))
            mids = 0.5 * (cuts[:-1] + cuts[1:])
            lens = np.diff(cuts)
            others = self.count(mids) - 1
            total += float(lens[others < 1].sum())
        return total


def select_dipping_points(candidates: np.ndarray, table: VisibilityTable, directions: dict, scene: Scene, qparams: QualityParams, tol: float = 1e-6):
    """Iteratively drop the lowest-quality candidate whose removal keeps every
    facade's completeness; return surviving indices and their views.

    Quality only grows and removability only shrinks as points leave, so a
    lazy priority queue gives the exact argmin at every step.
    """
    w1, w2, w3, w4 = qparams.weights
    views: dict[int, dict[int, FacadeView]] = {}
    index: dict[int, _FacadeIndex] = {fid: _FacadeIndex() for fid in directions}
    for fid, s in directions.items():
        f = scene.facades[fid]
        for pid, spans in table.by_facade[fid].items():
            fv = facade_view(View2D.make(candidates[pid], s), f, spans, qparams)
            if fv.intervals:
                views.setdefault(pid, {})[fid] = fv
                index[fid].add(pid, fv.intervals)
    static = {}
    for pid, fvs in views.items():
        st = {}
        for fid, fv in fvs.items():
            q_s = max(0.0, fv.cos_theta)
            q_d = float(np.clip((qparams.d_max - fv.distance) / (qparams.d_max - qparams.d_min), 0, 1))
            st[fid] = (w1 * q_s + w2 * q_d + w4 * min(1.0, fv.coverage), fv.midpoint)
        static[pid] = st

    def score(pid):
        total = 0.0
        for fid, (base, mid) in static[pid].items():
            mult = max(1, index[fid].multiplicity(mid))
            total += base + w3 * math.exp(-qparams.beta * (mult - 1))
        return total

    alive = set(range(len(candidates)))
    heap = [(score(pid) if pid in views else 0.0, pid) for pid in range(len(candidates))]
    heapq.heapify(heap)
    pinned = set()
    while heap:
        key, pid = heapq.heappop(heap)
        if pid not in alive or pid in pinned:
            continue
        if pid not in views:
            alive.discard(pid)
            continue
        fresh = score(pid)
        if fresh > key + 1e-12:
            heapq.heappush(heap, (fresh, pid))
            continue
        if any(index[fid].uncovered_without(pid) > tol for fid in views[pid]):
            pinned.add(pid)
            continue
        alive.discard(pid)
        for fid in views[pid]:
            index[fid].remove(pid)
    survivors = sorted(alive)
    return survivors, {pid: views[pid] for pid in survivors}


def initialize_dipping(scene: Scene, zone: NoDippingZone, camera: CameraModel, qparams: QualityParams, params: DippingParams) -> DippingPlan:
    plan = DippingPlan(scene, zone, camera, qparams, params)
    candidates = grid_sample_candidates(scene, zone, params.grid_step, margin=qparams.d_max)
    plan.candidates = candidates
    table = VisibilityTable(candidates, scene, qparams.d_max)
    plan.table = table
    for f in scene.facades:
        obs = [(candidates[i], table.by_facade[f.id][i]) for i in table.observers(f.id)]
        s = init_direction(f, obs, qparams, params)
        if s is None:
            plan.unobservable.append(f.id)
        else:
            plan.directions[f.id] = s
    survivors, views = select_dipping_points(candidates, table, plan.directions, scene, qparams, params.removal_tol)
    for pid in survivors:
        plan.points[pid] = candidates[pid].copy()
        plan.views[pid] = sorted(views[pid])
        for fid in plan.views[pid]:
            plan._span_cache[(round(float(candidates[pid][0]), 9), round(float(candidates[pid][1]), 9), fid)] = table.by_facade[fid][pid]
    for fid in plan.directions:
        plan.reference_coverage[fid] = plan.coverage(fid)
    plan.initial_view_count = plan.view_count
    return plan


# -- refinement --------------------------------------------------------------

NEIGHBORS = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]


def _coverage_ok(plan: DippingPlan, fids, before: dict, **kw) -> bool:
    return all(plan.coverage(fid, **kw) >= before[fid] - plan.params.removal_tol for fid in fids)


def _adjust_point(plan: DippingPlan, pid: int) -> bool:
    scene = plan.scene
    changed = False
    for _ in range(200):
        p = plan.points[pid]
        g0 = plan.objective(pid)
        cov0 = {fid: plan.coverage(fid) for fid in plan.views[pid]}
        cands = np.array([p + plan.params.tau_p * np.array(d, dtype=float) for d in NEIGHBORS])
        ok = ~plan.zone.contains(cands) & ~scene.inside_building(cands)
        others = [q for k, q in plan.points.items() if k != pid]
        best = None
        for k, c in enumerate(cands):
            if not ok[k]:
                continue
            if others and min(float(np.hypot(*(c - q))) for q in others) < 1e-6:
                continue
            if any(plan.facade_view(c, fid).intervals == () for fid in plan.views[pid]):
                continue
            g = plan.objective(pid, c)
            if not dominates(g, g0):
                continue
            if not _coverage_ok(plan, plan.views[pid], cov0, override={pid: c}):
                continue
            rank = (g[0], -sum(g0[i] - g[i] for i in range(1, len(g))), k)
            if best is None or rank < best[0]:
                best = (rank, c, g)
        if best is None:
            return changed
        plan.log.append(MoveRecord("point", pid, g0, best[2], tuple(float(v) for v in best[1])))
        plan.points[pid] = best[1]
        changed = True
    return changed


def _adjust_direction(plan: DippingPlan, fid: int) -> bool:
    f = plan.scene.facades[fid]
    base = -np.asarray(f.normal)
    limit = math.radians(plan.params.tau_s_deg * plan.params.scan_steps) + 1e-9
    users = [pid for pid in sorted(plan.points) if fid in plan.views[pid]]
    if not users:
        return False
    changed = False
    for _ in range(2 * plan.params.scan_steps + 1):
        s0 = plan.directions[fid]
        cost = sum(plan.point_cost(pid) for pid in users)
        q0 = plan.facade_quality(fid)
        g0 = (cost, -q0.total)
        best = None
        for sign in (-1, 1):
            s = rotate2(s0, sign * math.radians(plan.params.tau_s_deg))
            if math.acos(max(-1.0, min(1.0, float(s @ base)))) > limit:
                continue
            q = plan.facade_quality(fid, direction=s)
            g = (cost, -q.total)
            if q.q_c < q0.q_c - plan.params.removal_tol or not dominates(g, g0):
                continue
            if best is None or g[1] < best[1][1]:
                best = (s, g)
        if best is None:
            return changed
        plan.log.append(MoveRecord("direction", fid, g0, best[1], tuple(float(v) for v in best[0])))
        plan.directions[fid] = best[0]
        changed = True
    return changed


def _remove_views(plan: DippingPlan) -> bool:
    changed = False
    for pid in sorted(plan.points):
        for fid in list(plan.views[pid]):
            if len(plan.views[pid]) == 0:
                break
            g0 = plan.objective(pid)
            q_before = plan.facade_quality(fid)
            q_after = plan.facade_quality(fid, drop=(pid, fid))
            if q_after.q_c < q_before.q_c - plan.params.removal_tol:
                continue
            rest = [x for x in plan.views[pid] if x != fid]
            cost = plan.point_cost(pid, fids=rest)
            g = [cost]
            for other in plan.views[pid]:
                if other == fid:
                    g.append(-q_after.total)
                else:
                    g.append(g0[1 + plan.views[pid].index(other)])
            g = tuple(g)
            if not dominates(g, g0):
                continue
            plan.log.append(MoveRecord("remove", (pid, fid), g0, g))
            plan.views[pid] = rest
            changed = True
    for pid in [k for k, v in plan.views.items() if not v]:
        del plan.views[pid]
        del plan.points[pid]
    return changed


def optimize_dipping(plan: DippingPlan, max_iters: int | None = None) -> DippingPlan:
    """Point adjustment, direction adjustment and view removal, repeated
    until an iteration accepts nothing or ``max_iters`` is reached.

    Every accepted move dominates the state it replaces and never lowers a
    facade's completeness.
    """
    max_iters = plan.params.max_iters if max_iters is None else max_iters
    plan.initial_state = (
        {k: v.copy() for k, v in plan.points.items()},
        {k: list(v) for k, v in plan.views.items()},
        {k: v.copy() for k, v in plan.directions.items()},
    )
    plan.iterations = 0
    plan.converged = False
    for _ in range(max_iters):
        changed = False
        for pid in sorted(plan.points):
            changed |= _adjust_point(plan, pid)
        for fid in sorted(plan.directions):
            changed |= _adjust_direction(plan, fid)
        changed |= _remove_views(plan)
        plan.iterations += 1
        if not changed:
            plan.converged = True
            break
    return plan


def plan_dipping(scene, zone, camera, qparams, params) -> DippingPlan:
    plan = initialize_dipping(scene, zone, camera, qparams, params)
    return optimize_dipping(plan)


__all__ = [
    "DippingParams",
    "DippingPlan",
    "DippingSequence3D",
    "HoverGroup",
    "MoveRecord",
    "dominates",
    "fov_interval",
    "h_pic",
    "hover_groups",
    "hovering_cost",
    "init_direction",
    "initialize_dipping",
    "lift_sequence",
    "merge_savings",
    "optimize_dipping",
    "plan_dipping",
    "select_dipping_points",
]
