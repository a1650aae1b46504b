"""Scene data model: map parsing, no-dipping zone, candidate grid, 2.5D
extrusion and surface sampling."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import shapely
from shapely.geometry import LinearRing, MultiPolygon, Polygon
from shapely.ops import unary_union

from .geometry import points_in_ring, ring_boundary_distance, signed_area


class SceneError(ValueError):
    """Invalid scene document; ``pointer`` locates the offending value."""

    def __init__(self, message: str, pointer: str = ""):
        super().__init__(message)
        self.pointer = pointer


@dataclass(frozen=True)
class Facade:
    id: int
    building: str
    a: tuple[float, float]
    b: tuple[float, float]
    normal: tuple[float, float]
    length: float
    assumed_height: float
    name: str = ""

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.a) + np.asarray(self.b))

    def at(self, t) -> np.ndarray:
        a = np.asarray(self.a)
        b = np.asarray(self.b)
        t = np.asarray(t, dtype=float)
        return a + t[..., None] * (b - a)

    def plane_distance(self, pts) -> np.ndarray:
        """Signed distance of 2D points to the facade line (positive in front)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))[:, :2]
        return (pts - np.asarray(self.a)) @ np.asarray(self.normal)


@dataclass(frozen=True)
class Building:
    id: str
    ring: np.ndarray = field(repr=False)  # (n, 2), counterclockwise
    height: float | None = None

    @cached_property
    def polygon(self) -> Polygon:
        return Polygon(self.ring)


@dataclass(frozen=True)
class Scene:
    buildings: tuple[Building, ...]
    facades: tuple[Facade, ...]
    safe_altitude: float
    min_flight_altitude: float
    bounds: tuple[float, float, float, float]

    @cached_property
    def footprint(self):
        return unary_union([b.polygon for b in self.buildings]) if self.buildings else Polygon()

    @cached_property
    def edges(self) -> np.ndarray:
        """All ring edges as (E, 2, 2), aligned with ``facades`` order."""
        if not self.facades:
            return np.zeros((0, 2, 2))
        return np.array([[f.a, f.b] for f in self.facades], dtype=float)

    def building_of(self, facade: Facade) -> Building:
        return next(b for b in self.buildings if b.id == facade.building)

    def inside_building(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        out = np.zeros(len(pts), dtype=bool)
        for b in self.buildings:
            out |= points_in_ring(pts, b.ring) & (ring_boundary_distance(pts, b.ring) > 1e-9)
        return out

    def distance_to_buildings(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if not self.buildings:
            return np.full(len(pts), np.inf)
        return shapely.distance(shapely.points(pts[:, :2]), self.footprint)


def _clean_ring(raw, ring_id: str, pointer: str = "") -> np.ndarray:
    pts = [tuple(map(float, p)) for p in raw]
    if len(pts) > 1 and pts[0] == pts[-1]:
        pts = pts[:-1]
    cleaned = []
    for p in pts:
        if cleaned and np.allclose(p, cleaned[-1], atol=1e-9):
            warnings.warn(f"ring {ring_id}: collapsed duplicate vertex {p}", stacklevel=3)
            continue
        cleaned.append(p)
    while len(cleaned) > 1 and np.allclose(cleaned[0], cleaned[-1], atol=1e-9):
        warnings.warn(f"ring {ring_id}: collapsed duplicate closing vertex", stacklevel=3)
        cleaned.pop()
    if len(cleaned) < 3:
        raise SceneError(f"ring {ring_id}: needs at least 3 distinct vertices", pointer)
    ring = np.array(cleaned, dtype=float)
    if np.linalg.matrix_rank(ring - ring[0], tol=1e-9) < 2:
        raise SceneError(f"ring {ring_id}: zero area", pointer)
    if not LinearRing(ring).is_simple:
        raise SceneError(f"ring {ring_id}: self-intersecting", pointer)
    if abs(signed_area(ring)) < 1e-9:
        raise SceneError(f"ring {ring_id}: zero area", pointer)
    if signed_area(ring) < 0:
        ring = ring[::-1].copy()
    return ring


def parse_scene(doc, d_min: float = 10.0) -> Scene:
    """Build a :class:`Scene` from a map document (dict, JSON text or path).

    Rings are normalized to counterclockwise order and each edge becomes a
    facade whose outward normal points away from the interior. When the
    document carries no ``bounds`` the building bounding box is used.
    """
    if isinstance(doc, (str, Path)) and Path(str(doc)).suffix == ".json" and Path(str(doc)).exists():
        doc = json.loads(Path(doc).read_text())
    elif isinstance(doc, str):
        doc = json.loads(doc)
    if not isinstance(doc, dict):
        raise SceneError("scene document must be a JSON object", "")
    if not isinstance(doc.get("buildings", []), list):
        raise SceneError("buildings must be a list", "/buildings")
    if doc.get("unit", "m") != "m":
        raise SceneError("unit must be 'm'", "/unit")
    if "safe_altitude" not in doc:
        raise SceneError("safe_altitude missing", "/safe_altitude")
    H = float(doc["safe_altitude"])
    if H <= 0:
        raise SceneError("safe_altitude must be positive", "/safe_altitude")
    min_alt = float(doc.get("min_flight_altitude", min(10.0, H / 2)))
    if not 0 < min_alt < H:
        raise SceneError("need 0 < min_flight_altitude < safe_altitude", "/min_flight_altitude")
    heights = {str(k): float(v) for k, v in (doc.get("heights") or {}).items()}

    buildings = []
    facades = []
    seen = set()
    for k, entry in enumerate(doc.get("buildings", [])):
        if not isinstance(entry, dict):
            raise SceneError("building entry must be an object", f"/buildings/{k}")
        bid = str(entry.get("id", f"b{k}"))
        if bid in seen:
            raise SceneError(f"duplicate building id {bid}", f"/buildings/{k}/id")
        seen.add(bid)
        try:
            raw = [tuple(map(float, p)) for p in entry.get("ring", [])]
        except (TypeError, ValueError) as exc:
            raise SceneError(f"ring {bid}: vertices must be [x, y] numbers", f"/buildings/{k}/ring") from exc
        ring = _clean_ring(raw, bid, f"/buildings/{k}/ring")
        buildings.append(Building(bid, ring, heights.get(bid)))
    for b in buildings:
        if b.height is not None:
            assumed = b.height
        else:
            assumed = H - d_min
        n = len(b.ring)
        for k in range(n):
            a = b.ring[k]
            c = b.ring[(k + 1) % n]
            e = c - a
            length = float(np.hypot(*e))
            normal = (float(e[1] / length), float(-e[0] / length))
            facades.append(
                Facade(
                    id=len(facades),
                    building=b.id,
                    a=(float(a[0]), float(a[1])),
                    b=(float(c[0]), float(c[1])),
                    normal=normal,
                    length=length,
                    assumed_height=assumed,
                    name=f"{b.id}:{k}",
                )
            )
    if len(buildings) > 1:
        polys = [b.polygon for b in buildings]
        for i in range(len(polys)):
            for j in range(i + 1, len(polys)):
                if polys[i].intersection(polys[j]).area > 1e-9:
                    raise SceneError(f"rings {buildings[i].id} and {buildings[j].id} overlap", f"/buildings/{j}/ring")

    if "bounds" in doc:
        bounds = tuple(float(v) for v in doc["bounds"])
        if len(bounds) != 4 or bounds[2] <= bounds[0] or bounds[3] <= bounds[1]:
            raise SceneError("bounds must be [xmin, ymin, xmax, ymax]", "/bounds")
        for b in buildings:
            lo, hi = b.ring.min(axis=0), b.ring.max(axis=0)
            if lo[0] < bounds[0] or lo[1] < bounds[1] or hi[0] > bounds[2] or hi[1] > bounds[3]:
                raise SceneError(f"building {b.id} extends outside bounds", "/bounds")
    elif buildings:
        allpts = np.vstack([b.ring for b in buildings])
        bounds = (*allpts.min(axis=0).tolist(), *allpts.max(axis=0).tolist())
    else:
        raise SceneError("empty scene needs explicit bounds", "/bounds")
    return Scene(tuple(buildings), tuple(facades), H, min_alt, tuple(bounds))


# -- no-dipping zone ---------------------------------------------------------


def _quad_segs_for(radius: float, tol: float) -> int:
    # chord sagitta r(1 - cos(pi / (4q))) <= tol
    q = 1
    while radius * (1 - math.cos(math.pi / (4 * q))) > tol and q < 4096:
        q *= 2
    return q


@dataclass(frozen=True)
class NoDippingZone:
    """Buildings dilated by ``d_min``.

    Membership is exact (distance to the footprints); ``polygons`` is an
    inscribed polygonal approximation whose chord error stays below 0.5 mm.
    """

    scene: Scene = field(repr=False)
    d_min: float
    geometry: object = field(repr=False)

    @property
    def polygons(self) -> list[np.ndarray]:
        g = self.geometry
        geoms = list(g.geoms) if isinstance(g, MultiPolygon) else ([g] if not g.is_empty else [])
        return [np.asarray(p.exterior.coords)[:-1] for p in geoms]

    def contains(self, pts) -> np.ndarray:
        """Strict membership: distance to some building < d_min."""
        return self.scene.distance_to_buildings(pts) < self.d_min

    def polygon_contains(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return shapely.contains_xy(self.geometry, pts[:, 0], pts[:, 1])

    @cached_property
    def routing_geometry(self):
        """Coarse circumscribed zone (never smaller than the exact one)."""
        q = 4
        r = self.d_min / math.cos(math.pi / (4 * q)) * (1 + 1e-6) + 1e-6
        if not self.scene.buildings:
            return Polygon()
        return unary_union([b.polygon.buffer(r, quad_segs=q) for b in self.scene.buildings])

    @property
    def routing_polygons(self) -> list[np.ndarray]:
        g = self.routing_geometry
        geoms = list(g.geoms) if isinstance(g, MultiPolygon) else ([g] if not g.is_empty else [])
        return [np.asarray(p.exterior.coords)[:-1] for p in geoms]


def compute_no_dipping_zone(scene: Scene, d_min: float) -> NoDippingZone:
    if d_min <= 0:
        raise ValueError("d_min must be positive")
    q = _quad_segs_for(d_min, 5e-4)
    if scene.buildings:
        geom = unary_union([b.polygon.buffer(d_min, quad_segs=q) for b in scene.buildings])
    else:
        geom = Polygon()
    return NoDippingZone(scene, d_min, geom)


def grid_sample_candidates(scene: Scene, zone: NoDippingZone | None, step: float, margin: float = 0.0) -> np.ndarray:
    """Regular grid over the scene bounds grown by ``margin``, minus zone points.

    Rows run along +x; row order is by increasing y (the grid order used for
    every deterministic tie-break downstream).
    """
    if step <= 0:
        raise ValueError("step must be positive")
    xmin, ymin, xmax, ymax = scene.bounds
    xmin, ymin, xmax, ymax = xmin - margin, ymin - margin, xmax + margin, ymax + margin
    if step > max(xmax - xmin, ymax - ymin):
        warnings.warn("grid step exceeds the sampled extent; no candidates", stacklevel=2)
        return np.zeros((0, 2))
    xs = xmin + step * np.arange(int(math.floor((xmax - xmin) / step + 1e-9)) + 1)
    ys = ymin + step * np.arange(int(math.floor((ymax - ymin) / step + 1e-9)) + 1)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    if zone is not None and scene.buildings:
        pts = pts[~zone.contains(pts)]
    return pts


# -- 2.5D model and surface samples -----------------------------------------


@dataclass(frozen=True)
class Prism:
    building: str
    ring: np.ndarray = field(repr=False)
    height: float


@dataclass(frozen=True)
class Mesh25D:
    prisms: tuple[Prism, ...]
    bounds: tuple[float, float, float, float]

    def segments_clear(self, A, B) -> np.ndarray:
        from .geometry import segments_enter_prism

        A = np.atleast_2d(np.asarray(A, dtype=float))
        B = np.atleast_2d(np.asarray(B, dtype=float))
        blocked = np.zeros(len(A), dtype=bool)
        for pr in self.prisms:
            lo = pr.ring.min(axis=0)
            hi = pr.ring.max(axis=0)
            # cheap bbox reject
            smin = np.minimum(A[:, :2], B[:, :2])
            smax = np.maximum(A[:, :2], B[:, :2])
            cand = ~blocked & np.all(smax >= lo - 1e-9, axis=1) & np.all(smin <= hi + 1e-9, axis=1)
            cand &= np.minimum(A[:, 2], B[:, 2]) < pr.height
            if cand.any():
                idx = np.nonzero(cand)[0]
                blocked[idx] = segments_enter_prism(A[idx], B[idx], pr.ring, pr.height)
        return ~blocked


def extrude_25d(scene: Scene, default_height: float | None = None, d_min: float = 10.0) -> Mesh25D:
    """One prism per building; unknown heights default to ``H - d_min``."""
    if default_height is None:
        default_height = scene.safe_altitude - d_min
    if default_height <= 0:
        raise ValueError("default_height must be positive")
    prisms = tuple(
        Prism(b.id, b.ring, b.height if b.height is not None else default_height) for b in scene.buildings
    )
    return Mesh25D(prisms, scene.bounds)


KIND_FACADE, KIND_ROOF, KIND_GROUND = 0, 1, 2


@dataclass(frozen=True)
class SurfaceSamples:
    points: np.ndarray = field(repr=False)  # (N, 3)
    normals: np.ndarray = field(repr=False)  # (N, 3)
    kind: np.ndarray = field(repr=False)  # KIND_*
    owner: np.ndarray = field(repr=False)  # facade id, building index, or -1
    spacing: float

    def __len__(self) -> int:
        return len(self.points)


def _inclusive(length: float, spacing: float) -> np.ndarray:
    n = max(1, int(math.ceil(length / spacing - 1e-9)))
    return np.linspace(0.0, length, n + 1)


def sample_surface(mesh: Mesh25D, spacing: float, facades=None) -> SurfaceSamples:
    """Inclusive regular samples on facades, roofs and open ground.

    ``facades`` (from the owning scene) lets facade samples carry facade ids;
    without it the facade index is counted per prism edge.
    """
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    pts, nrm, kind, owner = [], [], [], []
    fid = 0
    for bi, pr in enumerate(mesh.prisms):
        n = len(pr.ring)
        for k in range(n):
            a = pr.ring[k]
            b = pr.ring[(k + 1) % n]
            e = b - a
            L = float(np.hypot(*e))
            normal = np.array([e[1], -e[0]]) / L
            ts = _inclusive(L, spacing) / L
            zs = _inclusive(pr.height, spacing)
            T, Z = np.meshgrid(ts, zs)
            xy = a + T.ravel()[:, None] * e
            p = np.column_stack([xy, Z.ravel()])
            pts.append(p)
            nrm.append(np.tile([normal[0], normal[1], 0.0], (len(p), 1)))
            kind.append(np.full(len(p), KIND_FACADE))
            owner.append(np.full(len(p), fid if facades is None else facades[fid].id))
            fid += 1
        lo = pr.ring.min(axis=0)
        hi = pr.ring.max(axis=0)
        xs = lo[0] + _inclusive(hi[0] - lo[0], spacing)
        ys = lo[1] + _inclusive(hi[1] - lo[1], spacing)
        gx, gy = np.meshgrid(xs, ys)
        cand = np.column_stack([gx.ravel(), gy.ravel()])
        keep = points_in_ring(cand, pr.ring) | (ring_boundary_distance(cand, pr.ring) <= 1e-9)
        roof = cand[keep]
        if len(roof) == 0:
            roof = pr.ring.mean(axis=0, keepdims=True)
        pts.append(np.column_stack([roof, np.full(len(roof), pr.height)]))
        nrm.append(np.tile([0.0, 0.0, 1.0], (len(roof), 1)))
        kind.append(np.full(len(roof), KIND_ROOF))
        owner.append(np.full(len(roof), bi))
    xmin, ymin, xmax, ymax = mesh.bounds
    xs = xmin + _inclusive(xmax - xmin, spacing)
    ys = ymin + _inclusive(ymax - ymin, spacing)
    gx, gy = np.meshgrid(xs, ys)
    g = np.column_stack([gx.ravel(), gy.ravel()])
    covered = np.zeros(len(g), dtype=bool)
    for pr in mesh.prisms:
        covered |= points_in_ring(g, pr.ring) | (ring_boundary_distance(g, pr.ring) <= 1e-9)
    g = g[~covered]
    pts.append(np.column_stack([g, np.zeros(len(g))]))
    nrm.append(np.tile([0.0, 0.0, 1.0], (len(g), 1)))
    kind.append(np.full(len(g), KIND_GROUND))
    owner.append(np.full(len(g), -1))
    return SurfaceSamples(
        np.vstack(pts),
        np.vstack(nrm),
        np.concatenate(kind).astype(int),
        np.concatenate(owner).astype(int),
        spacing,
    )
