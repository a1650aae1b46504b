"""Planar views at the safe altitude: the five-view station grid,
pairwise reconstructability, station redundancy and greedy refinement."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .camera import CameraModel, View3D
from .dipping import MoveRecord, dominates
from .quality import greedy_set_cover
from .scene import KIND_FACADE, Mesh25D, SurfaceSamples
from .visibility import view_sees


@dataclass(frozen=True)
class PlanarParams:
    overlap: tuple[float, float] = (0.8, 0.8)
    tilt_pitch: float = 45.0
    tau_r: float = 0.2
    tau_p: float = 2.5
    max_iters: int = 10
    parallax_deg: float = 15.0
    parallax_sigma_deg: float = 5.0
    beta: float = 0.5


@dataclass(frozen=True)
class PlanarStation:
    position: tuple[float, float, float]
    views: tuple[View3D, ...]


def station_views(position, tilt_pitch: float = 45.0) -> tuple[View3D, ...]:
    pos = tuple(float(v) for v in position)
    nadir = View3D(pos, 0.0, -90.0, "planar")
    tilted = tuple(View3D(pos, yaw, -tilt_pitch, "planar") for yaw in (0.0, 90.0, 180.0, 270.0))
    return (nadir,) + tilted


def make_station(x: float, y: float, H: float, tilt_pitch: float = 45.0) -> PlanarStation:
    pos = (float(x), float(y), float(H))
    return PlanarStation(pos, station_views(pos, tilt_pitch))


def grid_steps(H: float, camera: CameraModel, overlap=(0.8, 0.8)) -> tuple[float, float]:
    w, h = camera.footprint(H)
    return (1 - overlap[0]) * w, (1 - overlap[1]) * h


def generate_planar(bounds, H: float, camera: CameraModel, overlap=(0.8, 0.8), tilt_pitch: float = 45.0) -> list[PlanarStation]:
    """Station grid centred on ``bounds`` with nadir footprints overlapping by
    ``overlap`` along x (image width) and y (image height)."""
    xmin, ymin, xmax, ymax = bounds
    sx, sy = grid_steps(H, camera, overlap)
    nx = int(math.ceil((xmax - xmin) / sx - 1e-9)) + 1
    ny = int(math.ceil((ymax - ymin) / sy - 1e-9)) + 1
    x0 = 0.5 * (xmin + xmax) - 0.5 * (nx - 1) * sx
    y0 = 0.5 * (ymin + ymax) - 0.5 * (ny - 1) * sy
    return [make_station(x0 + i * sx, y0 + j * sy, H, tilt_pitch) for j in range(ny) for i in range(nx)]


@dataclass(frozen=True)
class ReconScore:
    values: np.ndarray
    pair_counts: np.ndarray


class ReconModel:
    """Incremental reconstructability over surface samples.

    Views are grouped by shared hover position. Because the pair weight only
    depends on the two camera positions, a sample's score is
    ``sum_{a<b} n_a n_b w_ab + sum_a C(n_a, 2) w_aa`` where ``n_a`` counts
    the views of group ``a`` that see the sample.
    """

    def __init__(self, samples: SurfaceSamples, camera: CameraModel, mesh: Mesh25D | None, d_max: float, params: PlanarParams):
        self.samples = samples
        self.camera = camera
        self.mesh = mesh
        self.d_max = d_max
        self.params = params
        self.pos: list[np.ndarray] = []
        self.views: list[tuple[View3D, ...]] = []
        self.fixed: list[bool] = []
        self.nT = np.zeros((len(samples), 0), dtype=np.int16)  # sample-major view counts
        self.active: list[bool] = []
        self._posarr = np.zeros((0, 3))
        self._count_cache: dict = {}
        self._csr = None

    @property
    def n(self) -> np.ndarray:
        """Group-major view of the per-sample view counts."""
        return self.nT.T

    # geometry
    def counts(self, position, views) -> np.ndarray:
        key = (tuple(round(float(v), 9) for v in position), tuple((v.yaw, v.pitch) for v in views))
        hit = self._count_cache.get(key)
        if hit is None:
            hit = self._counts(position, views)
            self._count_cache[key] = hit
        return hit.copy()

    def _counts(self, position, views) -> np.ndarray:
        out = np.zeros(len(self.samples), dtype=np.int16)
        pts, nrm = self.samples.points, self.samples.normals
        pos = np.asarray(position, dtype=float)
        v = pos - pts
        dist = np.linalg.norm(v, axis=1)
        pre = (dist <= self.d_max) & (np.einsum("ij,ij->i", v, nrm) > 1e-9)
        if not pre.any():
            return out
        idx = np.nonzero(pre)[0]
        seen_any = np.zeros(len(idx), dtype=bool)
        per_view = []
        for view in views:
            m = view_sees(pos, view.yaw, view.pitch, pts[idx], nrm[idx], self.camera, None, self.d_max)
            per_view.append(m)
            seen_any |= m
        if self.mesh is not None and seen_any.any():
            j = np.nonzero(seen_any)[0]
            start = pts[idx[j]] + 1e-6 * nrm[idx[j]]
            clear = np.zeros(len(idx), dtype=bool)
            clear[j] = self.mesh.segments_clear(start, np.broadcast_to(pos, start.shape))
        else:
            clear = seen_any
        for m in per_view:
            out[idx] += (m & clear).astype(np.int16)
        return out

    def _geometry(self, position):
        v = np.asarray(position, dtype=float) - self.samples.points
        d = np.linalg.norm(v, axis=1)
        return v / np.maximum(d, 1e-12)[:, None], d

    def pair_weight(self, ua, da, ub, db, idx=None) -> np.ndarray:
        p = self.params
        cos_a = np.clip(np.einsum("...j,...j->...", ua, ub), -1.0, 1.0)
        alpha = np.degrees(np.arccos(cos_a))
        w_alpha = np.exp(-((alpha - p.parallax_deg) ** 2) / (2 * p.parallax_sigma_deg**2))
        w_d = np.clip(1.0 - np.minimum(da, db) / self.d_max, 0.0, 1.0)
        nrm = self.samples.normals if idx is None else self.samples.normals[idx]
        cos_ta = np.einsum("...j,...j->...", ua, nrm)
        cos_tb = np.einsum("...j,...j->...", ub, nrm)
        w_t = np.maximum(0.0, np.minimum(cos_ta, cos_tb))
        return w_alpha * w_d * w_t

    def add_group(self, position, views, fixed: bool = False) -> int:
        self.pos.append(np.asarray(position, dtype=float))
        self.views.append(tuple(views))
        self.fixed.append(fixed)
        self.active.append(True)
        c = self.counts(position, views)
        self.nT = np.hstack([self.nT, c[:, None]])
        self._csr = None
        self._posarr = np.vstack([self._posarr, np.asarray(position, dtype=float)[None]])
        return len(self.pos) - 1

    def _self_term(self, n, u, d) -> np.ndarray:
        nn = n.astype(float)
        return 0.5 * nn * (nn - 1) * self.pair_weight(u, d, u, d)

    def _partners(self, g: int, n_g, u_g, d_g):
        """Sparse (group, sample, n_b, weight) for every active partner b != g
        seeing a sample that ``n_g`` also sees."""
        sel = np.nonzero(n_g > 0)[0]
        if len(sel) == 0:
            e = np.zeros(0, dtype=int)
            return e, e, np.zeros(0), np.zeros(0)
        if self._csr is None:
            # inactive groups keep zero columns, so only live partners appear
            self._csr = sparse.csr_matrix(self.nT)
        sub = self._csr[sel].tocoo()
        keep = sub.col != g
        ki, b, nb = sub.row[keep], sub.col[keep], sub.data[keep]
        s = sel[ki]
        vb = self._posarr[b] - self.samples.points[s]
        db = np.sqrt(np.einsum("ij,ij->i", vb, vb))
        ub = vb / np.maximum(db, 1e-12)[:, None]
        w = self.pair_weight(u_g[s], d_g[s], ub, db, s)
        return b, s, nb.astype(float), w

    def _cross_with(self, g: int, n_g, u_g, d_g) -> np.ndarray:
        """sum_b n_b w(g, b) over active groups b != g, per sample."""
        _, s, nb, w = self._partners(g, n_g, u_g, d_g)
        return np.bincount(s, weights=nb * w, minlength=len(self.samples))

    def contribution(self, g: int) -> np.ndarray:
        n_g = self.n[g]
        mask = n_g > 0
        out = np.zeros(len(self.samples))
        if not mask.any():
            return out
        u, d = self._geometry(self.pos[g])
        cross = self._cross_with(g, n_g, u, d)
        out = n_g * cross + self._self_term(n_g, u, d)
        return np.where(mask, out, 0.0)

    def compute(self):
        """Full recomputation of per-sample scores and per-group contributions."""
        G = len(self.pos)
        self.contrib = np.zeros((G, len(self.samples)))
        for g in range(G):
            if self.active[g]:
                self.contrib[g] = self.contribution(g)
        act = [g for g in range(G) if self.active[g]]
        selfs = np.zeros(len(self.samples))
        for g in act:
            selfs += self._self_term(self.n[g], *self._geometry(self.pos[g]))
        # each cross pair appears in two contributions
        self.q_r = 0.5 * (self.contrib[act].sum(axis=0) + selfs) if act else np.zeros(len(self.samples))
        return self.q_r

    def score(self) -> ReconScore:
        tot = self.n[[g for g in range(len(self.pos)) if self.active[g]]].sum(axis=0).astype(float)
        return ReconScore(self.q_r.copy(), (0.5 * tot * (tot - 1)).astype(int))

    def remove(self, g: int):
        n_g = self.n[g]
        mask = n_g > 0
        self.q_r = self.q_r - self.contrib[g]
        if mask.any():
            b, s, nb, w = self._partners(g, n_g, *self._geometry(self.pos[g]))
            self.contrib[b, s] -= nb * n_g[s] * w
        self.contrib[g] = 0.0
        self.active[g] = False
        self.nT[:, g] = 0
        self._csr = None
        self.q_r = np.maximum(self.q_r, 0.0)

    def trial_move(self, g: int, position):
        """Scores if group ``g`` moved to ``position`` (state unchanged)."""
        views = tuple(View3D(tuple(float(v) for v in position), v.yaw, v.pitch, v.target) for v in self.views[g])
        n_new = self.counts(position, views)
        u, d = self._geometry(position)
        mask = n_new > 0
        cross = self._cross_with(g, n_new, u, d)
        c_new = np.where(mask, n_new * cross + self._self_term(n_new, u, d), 0.0)
        return self.q_r - self.contrib[g] + c_new, (n_new, u, d, views)

    def commit_move(self, g: int, position, state):
        n_new, u, d, views = state
        self.remove(g)
        self.active[g] = True
        self.pos[g] = np.asarray(position, dtype=float)
        self.views[g] = views
        self.n[g] = n_new
        self._csr = None
        self._posarr[g] = self.pos[g]
        self.contrib[g] = self.contribution(g)
        # refresh partners' contributions with the new geometry
        b, s, nb, w = self._partners(g, n_new, u, d)
        self.contrib[b, s] += nb * n_new[s] * w
        self.q_r = self.q_r + self.contrib[g]


def reconstructability(samples: SurfaceSamples, stations, mesh, camera: CameraModel, params: PlanarParams | None = None, d_max: float | None = None) -> ReconScore:
    """Pairwise reconstructability of every sample from the given stations
    (anything with ``position`` and ``views``)."""
    params = params or PlanarParams()
    model = ReconModel(samples, camera, mesh, camera.d_max_m if d_max is None else d_max, params)
    for st in stations:
        model.add_group(st.position, st.views)
    model.compute()
    return model.score()


def redundancy_from(model: ReconModel, g: int, tau_r: float) -> float:
    q = model.q_r
    c = model.contrib[g]
    share = np.divide(c, q, out=np.zeros_like(c), where=q > 1e-15)
    return float(np.sum(np.maximum(0.0, q - tau_r) * share))


def redundancy(station, stations, samples, mesh, camera, params: PlanarParams | None = None) -> float:
    """Removable surplus of ``station`` within ``stations``."""
    params = params or PlanarParams()
    model = ReconModel(samples, camera, mesh, camera.d_max_m, params)
    gid = None
    for st in stations:
        k = model.add_group(st.position, st.views)
        if st is station:
            gid = k
    if gid is None:
        raise ValueError("station not among stations")
    model.compute()
    return redundancy_from(model, gid, params.tau_r)


@dataclass
class PlanarResult:
    stations: list[PlanarStation]
    initial_count: int
    q_r: np.ndarray
    plane_coverage: float
    initial_plane_coverage: float
    log: list[MoveRecord] = field(default_factory=list)
    initial_stations: list[PlanarStation] = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    removed: int = 0


class _PlaneCover:
    """Nadir coverage of ground and roof samples by planar stations."""

    def __init__(self, samples: SurfaceSamples, camera, mesh, d_max: float):
        self.mask = samples.kind != KIND_FACADE
        self.pts = samples.points[self.mask]
        self.nrm = samples.normals[self.mask]
        self.camera = camera
        self.mesh = mesh
        self.d_max = d_max
        self.rows: dict[int, np.ndarray] = {}

    def row(self, position) -> np.ndarray:
        key = tuple(round(float(v), 9) for v in position)
        if key not in self.rows:
            self.rows[key] = view_sees(position, 0.0, -90.0, self.pts, self.nrm, self.camera, self.mesh, self.d_max)
        return self.rows[key]

    def quality(self, rows, beta: float) -> tuple[float, float, float]:
        """(Q, Q_c, Q_u) for the given nadir coverage rows."""
        if len(rows) == 0 or len(self.pts) == 0:
            return 0.0, 0.0, 1.0
        cover = rows if isinstance(rows, np.ndarray) else np.array(rows)
        q_c = float(cover.any(axis=0).mean())
        if q_c == 0:
            return 0.0, 0.0, 1.0
        n_eff = int(cover.any(axis=1).sum())
        q_u = math.exp(-beta * max(0, n_eff - greedy_set_cover(cover)))
        return q_u + q_c, q_c, q_u


def _aggregate(q_r, tau_r: float) -> float:
    if len(q_r) == 0:
        return 0.0
    return float(np.mean(np.minimum(q_r, 3 * tau_r)))


def optimize_planar(
    stations,
    samples: SurfaceSamples,
    mesh: Mesh25D | None,
    camera: CameraModel,
    params: PlanarParams,
    fixed_groups=(),
    d_max: float | None = None,
) -> PlanarResult:
    """Adjust stations within their 8-neighbourhood (accepting only
    dominating moves of Y = (-Q_plane, -Q_r, count)), then greedily drop the
    most redundant stations while every sample keeps Q_r >= tau_r (or is
    untouched) and no plane sample loses its last nadir view."""
    d_max = camera.d_max_m if d_max is None else d_max
    model = ReconModel(samples, camera, mesh, d_max, params)
    for g in fixed_groups:
        model.add_group(g.position, g.members if hasattr(g, "members") else g.views, fixed=True)
    first = len(model.pos)
    for st in stations:
        model.add_group(st.position, st.views)
    model.compute()
    cover = _PlaneCover(samples, camera, mesh, d_max)
    rows = {g: cover.row(model.pos[g]) for g in range(first, len(model.pos))}
    initial_cov = cover.quality(list(rows.values()), params.beta)[1]
    result = PlanarResult([], len(stations), model.q_r, initial_cov, initial_cov, initial_stations=list(stations))
    H = stations[0].position[2] if stations else 0.0
    offsets = [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]

    def Y(q_r, mat):
        qg, qc, _ = cover.quality(mat, params.beta)
        return (-qg, -_aggregate(q_r, params.tau_r), float(len(mat))), qc

    for _ in range(params.max_iters):
        changed = False
        for g in range(first, len(model.pos)):
            if not model.active[g]:
                continue
            keys = list(rows)
            mat = np.array([rows[k] for k in keys])
            slot = keys.index(g)
            y0, qc0 = Y(model.q_r, mat)
            best = None
            for k, (dx, dy) in enumerate(offsets):
                pos = model.pos[g] + np.array([dx * params.tau_p, dy * params.tau_p, 0.0])
                pos[2] = H
                q_new, state = model.trial_move(g, pos)
                # never push a sample under the threshold it currently meets
                if np.any(q_new < np.minimum(model.q_r, params.tau_r) - 1e-12):
                    continue
                if _aggregate(q_new, params.tau_r) < -y0[1] - 1e-12:
                    continue  # cannot dominate
                row = cover.row(pos)
                trial = mat.copy()
                trial[slot] = row
                y, qc = Y(q_new, trial)
                if qc < qc0 - 1e-12 or not dominates(y, y0):
                    continue
                rank = (y[1], y[0], k)
                if best is None or rank < best[0]:
                    best = (rank, pos, state, row, y)
            if best is not None:
                _, pos, state, row, y = best
                model.commit_move(g, pos, state)
                rows[g] = row
                result.log.append(MoveRecord("planar_move", g, y0, y, tuple(float(v) for v in pos)))
                changed = True
        # greedy removal
        while True:
            live = [g for g in range(first, len(model.pos)) if model.active[g]]
            if len(live) <= 1:
                break
            cover_count = np.sum([rows[g] for g in live], axis=0)
            order = sorted(live, key=lambda g: (-redundancy_from(model, g, params.tau_r), g))
            victim = None
            for g in order:
                c = model.contrib[g]
                touched = c > 1e-15
                if np.any(model.q_r[touched] - c[touched] < params.tau_r):
                    continue
                if np.any(rows[g] & (cover_count <= 1)):
                    continue
                victim = g
                break
            if victim is None:
                break
            model.remove(victim)
            del rows[victim]
            result.log.append(MoveRecord("planar_remove", victim, (), ()))
            result.removed += 1
            changed = True
        result.iterations += 1
        if not changed:
            result.converged = True
            break
    live = [g for g in range(first, len(model.pos)) if model.active[g]]
    result.stations = [PlanarStation(tuple(float(v) for v in model.pos[g]), model.views[g]) for g in live]
    result.q_r = model.q_r.copy()
    result.plane_coverage = cover.quality([rows[g] for g in live], params.beta)[1]
    result.model = model
    return result
