"""Aerial path planning for joint geometry and texture capture of urban
scenes: dipping views for facades, planar views for ground and roofs, and
a structure-aware route connecting them."""

from .camera import CameraModel, View3D
from .dipping import DippingParams, optimize_dipping, plan_dipping
from .pipeline import PlannerConfig, PlanningError, PlanResult, QualityReport, evaluate, op_baseline, plan
from .route import FlightPlan, SafeSpace, safe_distance, solve_tour
from .scene import NoDippingZone, Scene, SceneError, compute_no_dipping_zone, parse_scene

__version__ = "0.1.0"

__all__ = [
    "CameraModel",
    "DippingParams",
    "FlightPlan",
    "NoDippingZone",
    "PlanResult",
    "PlannerConfig",
    "PlanningError",
    "QualityReport",
    "SafeSpace",
    "Scene",
    "SceneError",
    "View3D",
    "compute_no_dipping_zone",
    "evaluate",
    "op_baseline",
    "optimize_dipping",
    "parse_scene",
    "plan",
    "plan_dipping",
    "safe_distance",
    "solve_tour",
]
