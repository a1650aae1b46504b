"""End-to-end planning: scene -> dipping views -> planar views -> route."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .camera import CameraModel, View3D, unit2_from_yaw
from .dipping import DippingParams, DippingPlan, hover_groups, plan_dipping
from .planar import PlanarParams, PlanarResult, ReconModel, generate_planar, optimize_planar
from .quality import (
    WEIGHTS,
    QualityBreakdown,
    QualityParams,
    View2D,
    consistency,
    facade_terms,
    facade_view,
    ground_quality,
    nearness,
)
from .route import (
    Capture,
    FlightPlan,
    RouteGraph,
    SafeSpace,
    Tour,
    Waypoint,
    build_graph,
    dipping_node,
    planar_node,
    sequence_views,
    solve_tour,
)
from .scene import KIND_FACADE, Scene, compute_no_dipping_zone, extrude_25d, sample_surface
from .visibility import facade_spans


class PlanningError(RuntimeError):
    """A stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class ConfigError(ValueError):
    def __init__(self, message: str, pointer: str = ""):
        super().__init__(message)
        self.pointer = pointer


@dataclass(frozen=True)
class PlannerConfig:
    d_min: float = 10.0
    k_d: float = 0.8
    overlap: tuple[float, float] = (0.8, 0.8)
    weights: tuple[float, float, float, float] = WEIGHTS
    tau_p: float = 1.25
    tau_s: float = 5.0
    tau_r: float = 0.2
    beta: float = 0.5
    tilt_pitch: float = 45.0
    max_iters: int = 10
    grid_step: float = 5.0
    scan_steps: int = 12
    planar_tau_p: float = 2.5
    planar_max_iters: int = 10
    sample_spacing: float = 2.0
    d_max: float | None = None
    launch: tuple[float, float, float] | None = None
    deterministic: bool = True
    camera: CameraModel = field(default_factory=CameraModel)

    def __post_init__(self):
        checks = [
            ("d_min", self.d_min > 0),
            ("k_d", 0 < self.k_d < 1),
            ("overlap", len(self.overlap) == 2 and all(0 <= o < 1 for o in self.overlap)),
            ("weights", len(self.weights) == 4 and all(w >= 0 for w in self.weights)),
            ("tau_p", self.tau_p > 0),
            ("tau_s", self.tau_s > 0),
            ("tau_r", self.tau_r >= 0),
            ("beta", self.beta >= 0),
            ("tilt_pitch", 0 < self.tilt_pitch < 90),
            ("max_iters", self.max_iters >= 1),
            ("grid_step", self.grid_step > 0),
            ("scan_steps", self.scan_steps >= 0),
            ("planar_tau_p", self.planar_tau_p > 0),
            ("planar_max_iters", self.planar_max_iters >= 1),
            ("sample_spacing", self.sample_spacing > 0),
            ("d_max", self.d_max is None or self.d_max > self.d_min),
            ("launch", self.launch is None or len(self.launch) == 3),
        ]
        for name, ok in checks:
            if not ok:
                raise ConfigError(f"config {name} out of range", f"/{name}")

    @property
    def max_range(self) -> float:
        return self.camera.d_max_m if self.d_max is None else self.d_max

    def quality_params(self) -> QualityParams:
        return QualityParams(self.d_min, self.max_range, self.camera.hfov, tuple(self.weights), self.beta)

    def dipping_params(self) -> DippingParams:
        return DippingParams(
            k_d=self.k_d,
            tau_s_deg=self.tau_s,
            scan_steps=self.scan_steps,
            tau_p=self.tau_p,
            grid_step=self.grid_step,
            max_iters=self.max_iters,
        )

    def planar_params(self) -> PlanarParams:
        return PlanarParams(
            overlap=tuple(self.overlap),
            tilt_pitch=self.tilt_pitch,
            tau_r=self.tau_r,
            tau_p=self.planar_tau_p,
            max_iters=self.planar_max_iters,
            beta=self.beta,
        )

    def to_json(self) -> dict:
        doc = asdict(self)
        doc["overlap"] = list(self.overlap)
        doc["weights"] = list(self.weights)
        doc["launch"] = None if self.launch is None else list(self.launch)
        doc["camera"] = self.camera.to_json()
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "PlannerConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object", "")
        names = {f.name for f in fields(cls)}
        unknown = sorted(set(doc) - names)
        if unknown:
            raise ConfigError(f"unknown config key {unknown[0]}", f"/{unknown[0]}")
        kw = dict(doc)
        try:
            if "camera" in kw:
                kw["camera"] = CameraModel.from_json(kw["camera"])
            for key in ("overlap", "weights", "launch"):
                if kw.get(key) is not None:
                    kw[key] = tuple(float(v) for v in kw[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc), "/camera" if "camera" in str(exc) else "") from exc
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "PlannerConfig":
        return cls.from_json(json.loads(Path(path).read_text()))


# -- reports ------------------------------------------------------------------


@dataclass
class QualityReport:
    facades: dict[int, QualityBreakdown]
    consistency: dict[int, float]
    mean_view_q_d: float
    view_q_d: list[float]
    plane: QualityBreakdown
    recon: np.ndarray = field(repr=False)
    tau_r: float = 0.2
    unsafe: list[int] = field(default_factory=list)
    unobservable: list[int] = field(default_factory=list)
    images: int = 0
    hover: int = 0
    trajectory_m: float = 0.0

    def recon_histogram(self, bins=(0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0, 2.0, math.inf)) -> list[int]:
        return np.histogram(self.recon, bins=np.array(bins))[0].tolist()

    def to_json(self) -> dict:
        return {
            "facades": {str(k): v.to_json() for k, v in sorted(self.facades.items())},
            "direction_consistency": {str(k): v for k, v in sorted(self.consistency.items())},
            "mean_view_q_d": self.mean_view_q_d,
            "plane": self.plane.to_json(),
            "reconstructability": {
                "min": float(self.recon.min()) if len(self.recon) else None,
                "mean": float(self.recon.mean()) if len(self.recon) else None,
                "below_tau_r": int((self.recon < self.tau_r).sum()),
                "histogram_edges": [0.0, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0, 2.0, "inf"],
                "histogram": self.recon_histogram(),
            },
            "unsafe_waypoints": list(self.unsafe),
            "unobservable_facades": list(self.unobservable),
            "images": self.images,
            "hover": self.hover,
            "trajectory_m": self.trajectory_m,
        }


@dataclass
class PlanSummary:
    images: int
    hover: int
    trajectory_m: float

    def to_json(self) -> dict:
        return {"images": self.images, "hover": self.hover, "trajectory_m": self.trajectory_m}


@dataclass
class PlanResult:
    flightplan: FlightPlan
    report: QualityReport
    summary: PlanSummary
    dipping: DippingPlan | None
    planar: PlanarResult | None
    graph: RouteGraph
    tour: Tour


def default_launch(scene: Scene) -> tuple[float, float, float]:
    return (scene.bounds[0], scene.bounds[1], scene.safe_altitude)


def _stage(name):
    def wrap(fn):
        def inner(*a, **kw):
            try:
                return fn(*a, **kw)
            except PlanningError:
                raise
            except Exception as exc:  # noqa: BLE001 - rethrown with the stage tag
                raise PlanningError(name, f"{type(exc).__name__}: {exc}") from exc

        return inner

    return wrap


@_stage("dipping")
def _dipping(scene, zone, config):
    if not scene.facades:
        return None
    return plan_dipping(scene, zone, config.camera, config.quality_params(), config.dipping_params())


def dipping_hover_groups(plan: DippingPlan | None) -> list[list]:
    """Hover groups per dipping point, in point order."""
    if plan is None:
        return []
    out = []
    for pid, seqs in plan.all_sequences().items():
        out.append(hover_groups(seqs, plan.params.k_d))
    return out


@_stage("planar")
def _planar(scene, config, samples, mesh, fixed):
    stations = generate_planar(scene.bounds, scene.safe_altitude, config.camera, config.overlap, config.tilt_pitch)
    return optimize_planar(stations, samples, mesh, config.camera, config.planar_params(), fixed_groups=fixed, d_max=config.max_range)


@_stage("route")
def _route(scene, zone, config, per_point, stations):
    nodes = [dipping_node(groups) for groups in per_point if groups]
    nodes += [planar_node(st, scene) for st in stations]
    space = SafeSpace(scene, config.d_min, zone.routing_geometry)
    launch = config.launch if config.launch is not None else default_launch(scene)
    graph = build_graph(nodes, space, scene, launch)
    tour = solve_tour(graph)
    return graph, tour, sequence_views(tour, graph, space)


def plan(scene: Scene, config: PlannerConfig | None = None) -> PlanResult:
    config = config or PlannerConfig()
    zone = _stage("zone")(compute_no_dipping_zone)(scene, config.d_min)
    dplan = _dipping(scene, zone, config)
    per_point = dipping_hover_groups(dplan)
    mesh = extrude_25d(scene, d_min=config.d_min)
    samples = sample_surface(mesh, config.sample_spacing, scene.facades)
    fixed = [g for groups in per_point for g in groups]
    presult = _planar(scene, config, samples, mesh, fixed)
    graph, tour, fp = _route(scene, zone, config, per_point, presult.stations)
    report = evaluate(fp, scene, config, samples=samples, mesh=mesh)
    if dplan is not None:
        report.unobservable = sorted(dplan.unobservable)
    return PlanResult(fp, report, summarize(fp), dplan, presult, graph, tour)


def summarize(fp: FlightPlan) -> PlanSummary:
    return PlanSummary(fp.images, fp.hover, fp.trajectory_m)


# -- evaluation -----------------------------------------------------------


def _facade_records(fp: FlightPlan, scene: Scene, qparams: QualityParams, fid: int, any_targeted: bool):
    facade = scene.facades[fid]
    caps = []
    for pos, c in fp.captures():
        if abs(c.pitch + 90.0) < 1e-9:
            continue
        if any_targeted and c.target != str(fid):
            continue
        caps.append((pos, c))
    if not caps:
        return []
    pts = np.array([p[:2] for p, _ in caps], dtype=float)
    spans = facade_spans(pts, facade, scene, qparams.d_max)
    out = []
    for (pos, c), s in zip(caps, spans):
        if not s:
            continue
        v = View2D.make(pos[:2], unit2_from_yaw(c.yaw))
        fv = facade_view(v, facade, s, qparams, pitch_deg=c.pitch)
        if fv.intervals:
            out.append(fv)
    return out


def evaluate(fp: FlightPlan, scene: Scene, config: PlannerConfig | None = None, samples=None, mesh=None) -> QualityReport:
    """Score a flight plan: per-facade quality from its facade views (views
    targeting the facade, or every oblique view when no view names a
    facade), nadir ground/roof quality and per-sample reconstructability."""
    config = config or PlannerConfig()
    qparams = config.quality_params()
    mesh = mesh if mesh is not None else extrude_25d(scene, d_min=config.d_min)
    if samples is None:
        samples = sample_surface(mesh, config.sample_spacing, scene.facades)
    space = SafeSpace(scene, config.d_min)
    H, lo = scene.safe_altitude, scene.min_flight_altitude
    unsafe = []
    for k, w in enumerate(fp.waypoints):
        z = w.position[2]
        ok = space.points_safe(np.array(w.position))[0]
        if w.is_hover and not (lo - 1e-9 <= z <= H + 1e-9):
            ok = False
        if not ok:
            unsafe.append(k)
    targeted = {c.target for _, c in fp.captures()}
    any_targeted = any(t.isdigit() for t in targeted)
    facades, cons, vq = {}, {}, []
    for f in scene.facades:
        recs = _facade_records(fp, scene, qparams, f.id, any_targeted)
        facades[f.id] = facade_terms(recs, qparams)
        if recs:
            cons[f.id] = consistency([r.angle for r in recs])
            vq.extend(float(nearness(r.distance, qparams)) for r in recs)
    plane_mask = samples.kind != KIND_FACADE
    nadirs = [
        View3D(tuple(pos), c.yaw, c.pitch, c.target) for pos, c in fp.captures() if abs(c.pitch + 90.0) < 1e-9
    ]
    plane = ground_quality(nadirs, samples.points[plane_mask], config.camera, mesh, config.beta, config.max_range)
    model = ReconModel(samples, config.camera, mesh, config.max_range, config.planar_params())
    for w in fp.waypoints:
        if w.is_hover:
            views = [View3D(w.position, c.yaw, c.pitch, c.target) for c in w.captures]
            model.add_group(w.position, views)
    recon = model.compute() if model.pos else np.zeros(len(samples))
    return QualityReport(
        facades,
        cons,
        float(np.mean(vq)) if vq else 0.0,
        vq,
        plane,
        np.asarray(recon),
        config.tau_r,
        unsafe,
        [],
        fp.images,
        fp.hover,
        fp.trajectory_m,
    )


def op_baseline(scene: Scene, config: PlannerConfig | None = None) -> FlightPlan:
    """Regular five-view grid at the safe altitude, no dipping views, flown
    in boustrophedon order (the oblique-photography comparison plan)."""
    config = config or PlannerConfig()
    stations = generate_planar(scene.bounds, scene.safe_altitude, config.camera, config.overlap, config.tilt_pitch)
    rows: dict[float, list] = {}
    for st in stations:
        rows.setdefault(round(st.position[1], 9), []).append(st)
    wps = []
    for k, y in enumerate(sorted(rows)):
        row = sorted(rows[y], key=lambda s: s.position[0], reverse=bool(k % 2))
        for st in row:
            caps = tuple(
                sorted(
                    (Capture(float(v.yaw) % 360.0, float(v.pitch), v.target, "planar") for v in st.views),
                    key=lambda c: (c.yaw, c.pitch),
                )
            )
            wps.append(Waypoint(tuple(st.position), caps))
    launch = config.launch if config.launch is not None else default_launch(scene)
    return FlightPlan(tuple(float(v) for v in launch), wps)


def with_overrides(config: PlannerConfig, **kw) -> PlannerConfig:
    return replace(config, **kw)
