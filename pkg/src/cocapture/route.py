"""Capture ordering: safe-space distances, topology-weighted edge costs and
an open-path asymmetric TSP solver."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from scipy.sparse.csgraph import shortest_path

from .dipping import HoverGroup
from .scene import Scene

MIN_LEG = 0.1  # clamp for co-located hover positions
EXACT_LIMIT = 10  # exact DP polish up to this many nodes
W_SAME, W_ADJACENT, W_OTHER = 0.5, 0.75, 1.0


class UnsafePointError(ValueError):
    """Endpoint lies inside a dilated building."""


class SafeSpace:
    """Free space for routing: everything at or above ``H`` plus every point
    at least ``d_min`` (horizontally) from all footprints below ``H``."""

    def __init__(self, scene: Scene, d_min: float, routing_geometry=None, tol: float = 1e-6):
        self.scene = scene
        self.d_min = d_min
        self.H = scene.safe_altitude
        self.tol = tol
        self.footprint = scene.footprint
        self.empty = not scene.buildings
        verts = []
        if not self.empty and routing_geometry is not None:
            geoms = getattr(routing_geometry, "geoms", [routing_geometry])
            for g in geoms:
                for ring in [g.exterior, *g.interiors]:
                    verts.extend(np.asarray(ring.coords)[:-1].tolist())
        self.vertices = np.array(verts, dtype=float).reshape(-1, 2)
        V = len(self.vertices)
        if V:
            i, j = np.triu_indices(V, 1)
            ok = self._clear2d(self.vertices[i], self.vertices[j])
            w = np.full((V, V), np.inf)
            L = np.linalg.norm(self.vertices[i] - self.vertices[j], axis=1)
            w[i[ok], j[ok]] = L[ok]
            w[j[ok], i[ok]] = L[ok]
            np.fill_diagonal(w, 0.0)
            dense = np.where(np.isfinite(w), w, 0.0)
            self.vdist, self.vpred = shortest_path(dense, method="FW", directed=False, return_predecessors=True)
        else:
            self.vdist = np.zeros((0, 0))
            self.vpred = np.zeros((0, 0), dtype=int)

    # -- predicates -------------------------------------------------------
    def _clear2d(self, A, B) -> np.ndarray:
        A = np.atleast_2d(np.asarray(A, dtype=float))[:, :2]
        B = np.atleast_2d(np.asarray(B, dtype=float))[:, :2]
        if self.empty or len(A) == 0:
            return np.ones(len(A), dtype=bool)
        lines = shapely.linestrings(np.stack([A, B], axis=1))
        return shapely.distance(lines, self.footprint) >= self.d_min - self.tol

    def points_safe(self, P) -> np.ndarray:
        P = np.atleast_2d(np.asarray(P, dtype=float))
        if self.empty:
            return np.ones(len(P), dtype=bool)
        d = self.scene.distance_to_buildings(P[:, :2])
        return (P[:, 2] >= self.H - 1e-9) | (d >= self.d_min - self.tol)

    def segments_clear(self, A, B) -> np.ndarray:
        """Vectorized: the 3D segment AB stays in free space."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        out = np.ones(len(A), dtype=bool)
        if self.empty or len(A) == 0:
            return out
        dz = B[:, 2] - A[:, 2]
        # parameter range where z < H
        lo = np.zeros(len(A))
        hi = np.ones(len(A))
        with np.errstate(divide="ignore", invalid="ignore"):
            t_h = (self.H - A[:, 2]) / dz
        up = dz > 1e-12
        down = dz < -1e-12
        flat = ~(up | down)
        hi = np.where(up, np.minimum(hi, t_h), hi)
        lo = np.where(down, np.maximum(lo, t_h), lo)
        below = np.where(flat, A[:, 2] < self.H - 1e-9, hi - lo > 1e-12)
        if below.any():
            idx = np.nonzero(below)[0]
            d = B[idx] - A[idx]
            P0 = A[idx] + lo[idx, None] * d
            P1 = A[idx] + hi[idx, None] * d
            out[idx] = self._clear2d(P0, P1)
        return out

    # -- shortest paths ---------------------------------------------------
    def _check(self, P):
        if not self.points_safe(P)[0]:
            raise UnsafePointError(f"point {tuple(np.round(P, 6))} lies inside a dilated building")

    def _graph_path(self, P, Q):
        """Shortest horizontal path at max(z_P, z_Q) through the vertex graph."""
        z = max(P[2], Q[2])
        if z >= self.H - 1e-9 or len(self.vertices) == 0:
            return math.inf, None
        a, b = P[:2], Q[:2]
        vert = abs(P[2] - Q[2])
        best = (math.inf, None)
        if self._clear2d(a, b)[0]:
            best = (vert + float(np.linalg.norm(a - b)), [])
        V = self.vertices
        ea = np.linalg.norm(V - a, axis=1)
        eb = np.linalg.norm(V - b, axis=1)
        ea = np.where(self._clear2d(np.broadcast_to(a, V.shape), V), ea, np.inf)
        eb = np.where(self._clear2d(V, np.broadcast_to(b, V.shape)), eb, np.inf)
        tot = ea[:, None] + self.vdist + eb[None, :]
        k = int(np.argmin(tot))
        u, v = divmod(k, len(V))
        if tot[u, v] + vert < best[0]:
            chain = [v]
            while chain[-1] != u:
                chain.append(int(self.vpred[u, chain[-1]]))
            best = (float(tot[u, v]) + vert, chain[::-1])
        if best[1] is None:
            return math.inf, None
        pts = [np.array([P[0], P[1], z])] if P[2] < z else []
        pts += [np.array([V[i, 0], V[i, 1], z]) for i in best[1]]
        if Q[2] < z:
            pts.append(np.array([Q[0], Q[1], z]))
        return best[0], pts

    def path(self, P, Q) -> tuple[float, list[np.ndarray]]:
        """Length and polyline (including both endpoints) of the safe path."""
        P = np.asarray(P, dtype=float)
        Q = np.asarray(Q, dtype=float)
        self._check(P)
        self._check(Q)
        if self.segments_clear(P, Q)[0]:
            return float(np.linalg.norm(Q - P)), [P, Q]
        climb = (self.H - P[2]) + float(np.linalg.norm(Q[:2] - P[:2])) + (self.H - Q[2])
        g_len, g_pts = self._graph_path(P, Q)
        if g_len < climb:
            return g_len, [P, *g_pts, Q]
        mids = [np.array([P[0], P[1], self.H]), np.array([Q[0], Q[1], self.H])]
        return climb, [P, *mids, Q]

    def distance(self, P, Q) -> float:
        return self.path(P, Q)[0]

    def matrix(self, A, B) -> np.ndarray:
        """Safe distances between every row of ``A`` and every row of ``B``."""
        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        for P in (*A, *B):
            self._check(P)
        I, J = np.meshgrid(np.arange(len(A)), np.arange(len(B)), indexing="ij")
        I, J = I.ravel(), J.ravel()
        out = np.linalg.norm(A[I] - B[J], axis=1)
        clear = self.segments_clear(A[I], B[J])
        for k in np.nonzero(~clear)[0]:
            out[k] = self.path(A[I[k]], B[J[k]])[0]
        return out.reshape(len(A), len(B))


def safe_distance(P, Q, space: SafeSpace) -> float:
    return space.distance(P, Q)


# -- graph ------------------------------------------------------------------


def edge_cost(l: float, alpha: float, w_p: float = 1.0) -> float:
    """w_p * l * exp(alpha / l) with ``l`` clamped to ``MIN_LEG``."""
    l = max(float(l), MIN_LEG)
    return w_p * l * math.exp(alpha / l)


@dataclass
class RouteNode:
    """A unit of the tour: one dipping point's hover groups flown top-down,
    or one planar station."""

    kind: str
    groups: list[HoverGroup]
    targets: frozenset
    direction: np.ndarray = field(repr=False)

    @property
    def entry(self) -> np.ndarray:
        return np.asarray(self.groups[0].position, dtype=float)

    @property
    def exit(self) -> np.ndarray:
        return np.asarray(self.groups[-1].position, dtype=float)


def mean_direction(views) -> np.ndarray:
    d = np.mean([v.direction for v in views], axis=0)
    n = np.linalg.norm(d)
    return d / n if n > 1e-12 else np.array([0.0, 0.0, -1.0])


def dipping_node(groups) -> RouteNode:
    groups = sorted(groups, key=lambda g: (-g.position[2], g.position[0], g.position[1]))
    members = [m for g in groups for m in g.members]
    targets = frozenset(f"f:{m.target}" for m in members)
    return RouteNode("dipping", groups, targets, mean_direction(members))


def planar_node(station, scene: Scene) -> RouteNode:
    g = HoverGroup(tuple(station.position), list(station.views))
    targets = {"ground"}
    xy = np.asarray(station.position[:2], dtype=float)[None]
    for b in scene.buildings:
        if shapely.contains_xy(b.polygon, xy[:, 0], xy[:, 1])[0]:
            targets.add(f"roof:{b.id}")
    return RouteNode("planar", [g], frozenset(targets), mean_direction(station.views))


class PlaneTopology:
    """Adjacency between target planes: facades sharing a ring vertex, and
    ground or roof next to facades (all facades for ground, own building's
    for a roof)."""

    def __init__(self, scene: Scene):
        self.adj: set[frozenset] = set()
        by_vertex: dict[tuple, list[int]] = {}
        for f in scene.facades:
            for v in (f.a, f.b):
                by_vertex.setdefault((round(v[0], 9), round(v[1], 9)), []).append(f.id)
        for ids in by_vertex.values():
            for i, j in itertools.combinations(sorted(set(ids)), 2):
                self.adj.add(frozenset((f"f:{i}", f"f:{j}")))
        for f in scene.facades:
            self.adj.add(frozenset(("ground", f"f:{f.id}")))
            self.adj.add(frozenset((f"roof:{f.building}", f"f:{f.id}")))

    def weight(self, A, B) -> float:
        if A & B:
            return W_SAME
        for a in A:
            for b in B:
                if frozenset((a, b)) in self.adj:
                    return W_ADJACENT
        return W_OTHER


@dataclass
class RouteGraph:
    nodes: list[RouteNode]
    length: np.ndarray  # l(exit_i, entry_j)
    cost: np.ndarray  # e(i, j)
    launch: np.ndarray


def build_graph(nodes, space: SafeSpace, scene: Scene, launch) -> RouteGraph:
    n = len(nodes)
    exits = np.array([nd.exit for nd in nodes]).reshape(-1, 3)
    entries = np.array([nd.entry for nd in nodes]).reshape(-1, 3)
    L = space.matrix(exits, entries) if n else np.zeros((0, 0))
    topo = PlaneTopology(scene)
    C = np.zeros((n, n))
    dirs = np.array([nd.direction for nd in nodes]).reshape(-1, 3)
    cosang = np.clip(dirs @ dirs.T, -1.0, 1.0)
    alpha = np.arccos(cosang)
    for i in range(n):
        for j in range(n):
            if i != j:
                C[i, j] = edge_cost(L[i, j], alpha[i, j], topo.weight(nodes[i].targets, nodes[j].targets))
    return RouteGraph(list(nodes), L, C, np.asarray(launch, dtype=float))


# -- tour -------------------------------------------------------------------


@dataclass
class Tour:
    order: list[int]
    cost: float
    length: float = 0.0


def path_cost(order, cost: np.ndarray) -> float:
    order = np.asarray(order, dtype=int)
    if len(order) < 2:
        return 0.0
    return float(cost[order[:-1], order[1:]].sum())


def nearest_neighbor(cost: np.ndarray, start: int) -> list[int]:
    n = len(cost)
    order = [start]
    left = set(range(n)) - {start}
    while left:
        cur = order[-1]
        nxt = min(left, key=lambda j: (cost[cur, j], j))
        order.append(nxt)
        left.remove(nxt)
    return order


def _two_opt(order, cost):
    """Best-improvement segment reversal on an open path with directed costs."""
    n = len(order)
    t = np.asarray(order)
    while True:
        fwd = np.concatenate([[0.0], np.cumsum(cost[t[:-1], t[1:]])])
        rev = np.concatenate([[0.0], np.cumsum(cost[t[1:], t[:-1]])])
        best, bi, bj = -1e-12, -1, -1
        for i in range(n - 1):
            j = np.arange(i + 1, n)
            delta = (rev[j] - rev[i]) - (fwd[j] - fwd[i])
            if i > 0:
                delta = delta + cost[t[i - 1], t[j]] - cost[t[i - 1], t[i]]
            tail = j < n - 1
            jj = j[tail]
            delta[tail] += cost[t[i], t[jj + 1]] - cost[t[jj], t[jj + 1]]
            k = int(np.argmin(delta))
            if delta[k] < best:
                best, bi, bj = float(delta[k]), i, int(j[k])
        if bi < 0:
            return t.tolist()
        t[bi : bj + 1] = t[bi : bj + 1][::-1].copy()


def _or_opt(order, cost):
    """Relocate runs of 1-3 nodes (kept in direction) while it helps."""
    t = list(order)
    n = len(t)
    improved = True
    while improved:
        improved = False
        base = path_cost(t, cost)
        best = (base - 1e-12, None)
        for L in (1, 2, 3):
            for i in range(n - L + 1):
                seg = t[i : i + L]
                rest = t[:i] + t[i + L :]
                for k in range(len(rest) + 1):
                    if k == i:
                        continue
                    cand = rest[:k] + seg + rest[k:]
                    c = path_cost(cand, cost)
                    if c < best[0]:
                        best = (c, cand)
        if best[1] is not None:
            t = best[1]
            improved = True
    return t


def held_karp(cost: np.ndarray) -> list[int]:
    """Exact minimum open path with free endpoints."""
    n = len(cost)
    if n <= 1:
        return list(range(n))
    full = 1 << n
    dp = np.full((full, n), np.inf)
    parent = np.full((full, n), -1, dtype=int)
    for j in range(n):
        dp[1 << j, j] = 0.0
    for mask in range(1, full):
        row = dp[mask]
        if not np.isfinite(row).any():
            continue
        for j in range(n):
            if mask & (1 << j):
                continue
            cand = row + cost[:, j]
            k = int(np.argmin(cand))
            nm = mask | (1 << j)
            if cand[k] < dp[nm, j]:
                dp[nm, j] = cand[k]
                parent[nm, j] = k
    last = int(np.argmin(dp[full - 1]))
    order = [last]
    mask = full - 1
    while parent[mask, order[-1]] >= 0:
        j = order[-1]
        k = int(parent[mask, j])
        mask ^= 1 << j
        order.append(k)
    return order[::-1]


def solve_tour(graph: RouteGraph | np.ndarray, start: int | None = None) -> Tour:
    """Nearest-neighbour path from the node closest to the launch point,
    improved by 2-opt and Or-opt until neither helps; small instances are
    finished with an exact DP."""
    if isinstance(graph, RouteGraph):
        cost = graph.cost
        if start is None and len(graph.nodes):
            d = [np.linalg.norm(nd.entry - graph.launch) for nd in graph.nodes]
            start = int(np.argmin(d))
    else:
        cost = np.asarray(graph, dtype=float)
    n = len(cost)
    if n == 0:
        return Tour([], 0.0)
    if n == 1:
        return Tour([0], 0.0)
    order = nearest_neighbor(cost, 0 if start is None else start)
    while True:
        before = path_cost(order, cost)
        order = _or_opt(_two_opt(order, cost), cost)
        if path_cost(order, cost) >= before - 1e-12:
            break
    if n <= EXACT_LIMIT:
        exact = held_karp(cost)
        if path_cost(exact, cost) < path_cost(order, cost) - 1e-12:
            order = exact
    length = 0.0
    if isinstance(graph, RouteGraph):
        length = float(sum(graph.length[a, b] for a, b in zip(order[:-1], order[1:])))
    return Tour(order, path_cost(order, cost), length)


# -- flight plan ------------------------------------------------------------


@dataclass(frozen=True)
class Capture:
    yaw: float
    pitch: float
    target: str
    kind: str

    def to_json(self) -> dict:
        return {"yaw_deg": self.yaw, "pitch_deg": self.pitch, "target": self.target, "kind": self.kind}


@dataclass(frozen=True)
class Waypoint:
    position: tuple[float, float, float]
    captures: tuple[Capture, ...] = ()

    @property
    def is_hover(self) -> bool:
        return bool(self.captures)


@dataclass
class FlightPlan:
    launch: tuple[float, float, float]
    waypoints: list[Waypoint]

    @property
    def images(self) -> int:
        return sum(len(w.captures) for w in self.waypoints)

    @property
    def hover(self) -> int:
        return sum(1 for w in self.waypoints if w.is_hover)

    @property
    def trajectory_m(self) -> float:
        pts = np.array([self.launch] + [w.position for w in self.waypoints], dtype=float)
        if len(pts) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(pts, axis=0), axis=1).sum())

    def captures(self):
        for w in self.waypoints:
            for c in w.captures:
                yield w.position, c


def _captures(group: HoverGroup, kind: str) -> tuple[Capture, ...]:
    caps = [Capture(float(m.yaw) % 360.0, float(m.pitch), m.target, kind) for m in group.members]
    return tuple(sorted(caps, key=lambda c: (c.yaw, c.pitch, c.target)))


def sequence_views(tour: Tour, graph: RouteGraph, space: SafeSpace) -> FlightPlan:
    """Waypoints in tour order, with transit corners between hover groups."""
    wps: list[Waypoint] = []
    cur = graph.launch
    for idx in tour.order:
        node = graph.nodes[idx]
        for g in node.groups:
            pos = np.asarray(g.position, dtype=float)
            _, pts = space.path(cur, pos)
            for q in pts[1:-1]:
                wps.append(Waypoint(tuple(float(v) for v in q)))
            wps.append(Waypoint(tuple(float(v) for v in pos), _captures(g, node.kind)))
            cur = pos
    return FlightPlan(tuple(float(v) for v in graph.launch), wps)
