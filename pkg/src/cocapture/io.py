"""File formats: scene/camera/config loading with located errors, and
flight plan export (canonical JSON plus a per-capture CSV)."""

from __future__ import annotations

import csv
import io
import json
from importlib import resources
from pathlib import Path

import jsonschema

from .camera import CameraModel
from .pipeline import ConfigError, PlannerConfig, PlanResult, QualityReport
from .route import Capture, FlightPlan, Waypoint
from .scene import Scene, SceneError, parse_scene

DECIMALS = 6
CSV_HEADER = ("x_m", "y_m", "z_m", "yaw_deg", "pitch_deg", "capture")

_NUM = {"type": "number"}
_XY = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}

SCENE_SCHEMA = {
    "type": "object",
    "required": ["safe_altitude"],
    "properties": {
        "unit": {"type": "string"},
        "safe_altitude": _NUM,
        "min_flight_altitude": _NUM,
        "bounds": {"type": "array", "items": _NUM, "minItems": 4, "maxItems": 4},
        "heights": {"type": "object", "additionalProperties": _NUM},
        "buildings": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["ring"],
                "properties": {"id": {"type": ["string", "integer"]}, "ring": {"type": "array", "items": _XY}},
            },
        },
    },
}

CAMERA_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {k: _NUM for k in ("focal_mm", "sensor_w_mm", "sensor_h_mm", "image_w_px", "image_h_px", "d_max_m", "gsd_cm")},
}

FLIGHTPLAN_SCHEMA = {
    "type": "object",
    "required": ["launch", "waypoints"],
    "properties": {
        "launch": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
        "waypoints": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["position", "captures"],
                "properties": {
                    "position": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3},
                    "captures": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["yaw_deg", "pitch_deg"],
                            "properties": {
                                "yaw_deg": _NUM,
                                "pitch_deg": _NUM,
                                "target": {"type": "string"},
                                "kind": {"type": "string"},
                            },
                        },
                    },
                },
            },
        },
    },
}


def bundled_fixture(name: str) -> Path:
    """Path of a JSON file shipped in ``cocapture/fixtures`` (suffix optional)."""
    fname = name if name.endswith(".json") else f"{name}.json"
    path = Path(str(resources.files("cocapture") / "fixtures" / fname))
    if not path.is_file():
        raise FileNotFoundError(f"no bundled fixture {fname}")
    return path


class InputError(ValueError):
    """Unreadable or invalid input file; names the file and JSON pointer."""

    def __init__(self, path, message: str, pointer: str | None = None):
        loc = str(path) if pointer is None else f"{path}#{pointer}"
        super().__init__(f"{loc}: {message}")
        self.path = str(path)
        self.pointer = pointer


def _pointer(parts) -> str:
    return "".join(f"/{p}" for p in parts)


def read_json(path) -> object:
    path = Path(path)
    if not path.is_file():
        raise InputError(path, "file not found")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(path, f"invalid JSON ({exc.msg} at line {exc.lineno})") from exc


def _validate(doc, schema, path):
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as exc:
        raise InputError(path, exc.message, _pointer(exc.absolute_path)) from exc


def load_scene(path, d_min: float = 10.0) -> Scene:
    doc = read_json(path)
    _validate(doc, SCENE_SCHEMA, path)
    try:
        return parse_scene(doc, d_min)
    except SceneError as exc:
        raise InputError(path, str(exc), exc.pointer) from exc


def load_camera(path) -> CameraModel:
    doc = read_json(path)
    _validate(doc, CAMERA_SCHEMA, path)
    try:
        return CameraModel.from_json(doc)
    except ValueError as exc:
        raise InputError(path, str(exc), "") from exc


def load_config(path, camera: CameraModel | None = None) -> PlannerConfig:
    doc = read_json(path)
    if isinstance(doc, dict) and camera is not None and "camera" not in doc:
        doc = {**doc, "camera": camera.to_json()}
    try:
        return PlannerConfig.from_json(doc)
    except ConfigError as exc:
        raise InputError(path, str(exc), exc.pointer) from exc
    except TypeError as exc:
        raise InputError(path, str(exc), "") from exc


# -- canonical JSON ----------------------------------------------------------


def _r(x: float) -> float:
    v = round(float(x), DECIMALS)
    return 0.0 if v == 0 else v


def dumps(doc) -> str:
    """Deterministic JSON text (sorted keys, fixed indent, trailing newline)."""
    return json.dumps(_rounded(doc), sort_keys=True, indent=2) + "\n"


def _rounded(doc):
    if isinstance(doc, float):
        return _r(doc)
    if isinstance(doc, dict):
        return {str(k): _rounded(v) for k, v in doc.items()}
    if isinstance(doc, (list, tuple)):
        return [_rounded(v) for v in doc]
    return doc


def quantize(fp: FlightPlan) -> FlightPlan:
    """The plan as stored: every number rounded to ``DECIMALS``."""
    wps = [
        Waypoint(tuple(_r(v) for v in w.position), tuple(Capture(_r(c.yaw), _r(c.pitch), c.target, c.kind) for c in w.captures))
        for w in fp.waypoints
    ]
    return FlightPlan(tuple(_r(v) for v in fp.launch), wps)


def flightplan_to_json(fp: FlightPlan) -> dict:
    # summary derived from the stored numbers so reloading reproduces it
    fp = quantize(fp)
    return {
        "launch": list(fp.launch),
        "waypoints": [
            {
                "position": [_r(v) for v in w.position],
                "captures": [
                    {"yaw_deg": _r(c.yaw), "pitch_deg": _r(c.pitch), "target": c.target, "kind": c.kind}
                    for c in w.captures
                ],
            }
            for w in fp.waypoints
        ],
        "summary": {"images": fp.images, "hover": fp.hover, "trajectory_m": _r(fp.trajectory_m)},
    }


def flightplan_from_json(doc, path="<flightplan>") -> FlightPlan:
    _validate(doc, FLIGHTPLAN_SCHEMA, path)
    wps = []
    for w in doc["waypoints"]:
        caps = tuple(
            Capture(float(c["yaw_deg"]), float(c["pitch_deg"]), str(c.get("target", "")), str(c.get("kind", "")))
            for c in w["captures"]
        )
        wps.append(Waypoint(tuple(float(v) for v in w["position"]), caps))
    return FlightPlan(tuple(float(v) for v in doc["launch"]), wps)


def load_flightplan(path) -> FlightPlan:
    return flightplan_from_json(read_json(path), path)


def flightplan_csv(fp: FlightPlan) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for pos, c in fp.captures():
        w.writerow([f"{_r(pos[0]):.6f}", f"{_r(pos[1]):.6f}", f"{_r(pos[2]):.6f}", f"{_r(c.yaw):.6f}", f"{_r(c.pitch):.6f}", "true"])
    return buf.getvalue()


def _writable(out) -> Path:
    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    return out


def write_flightplan(fp: FlightPlan, out) -> tuple[Path, Path]:
    out = _writable(out)
    j = out / "flightplan.json"
    c = out / "flightplan.csv"
    j.write_text(dumps(flightplan_to_json(fp)))
    c.write_text(flightplan_csv(fp))
    return j, c


def write_report(report: QualityReport, out) -> Path:
    out = _writable(out)
    p = out / "quality.json"
    p.write_text(dumps(report.to_json()))
    return p


def write_outputs(result: PlanResult, out) -> list[Path]:
    """The four plan outputs: flightplan.json/.csv, quality.json, summary.json."""
    j, c = write_flightplan(result.flightplan, out)
    q = write_report(result.report, out)
    s = Path(out) / "summary.json"
    stored = quantize(result.flightplan)
    s.write_text(dumps({"images": stored.images, "hover": stored.hover, "trajectory_m": stored.trajectory_m}))
    return [j, c, q, s]


def dipping_plan_json(result: PlanResult) -> dict:
    """Dipping hover groups: position, member directions and target facades."""
    groups = []
    for node in result.graph.nodes:
        if node.kind != "dipping":
            continue
        for g in node.groups:
            groups.append(
                {
                    "position": list(g.position),
                    "merged": g.merged,
                    "views": [{"yaw_deg": m.yaw, "pitch_deg": m.pitch, "facade": m.target} for m in g.members],
                }
            )
    return {"hover_groups": groups}


def planar_plan_json(result: PlanResult) -> dict:
    stations = []
    if result.planar is not None:
        for st in result.planar.stations:
            stations.append({"position": list(st.position), "views": [[v.yaw, v.pitch] for v in st.views]})
    return {"stations": stations}
