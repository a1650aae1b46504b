"""Pinhole camera model and view-orientation conventions.

Yaw is measured clockwise from +y (north-up maps), pitch is negative when
looking down. A horizontal view with yaw 90 looks along +x.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class CameraModel:
    focal_mm: float = 12.67
    sensor_w_mm: float = 17.73
    sensor_h_mm: float = 13.30
    image_w_px: int = 5472
    image_h_px: int = 4104
    d_max_m: float = 80.0
    gsd_cm: float = 4.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value > 0:
                raise ValueError(f"camera {name} must be positive")

    @property
    def hfov(self) -> float:
        return 2 * math.atan(self.sensor_w_mm / (2 * self.focal_mm))

    @property
    def vfov(self) -> float:
        return 2 * math.atan(self.sensor_h_mm / (2 * self.focal_mm))

    def footprint(self, distance: float) -> tuple[float, float]:
        """Width and height (m) of the image footprint on a plane at ``distance``."""
        return (self.sensor_w_mm * distance / self.focal_mm, self.sensor_h_mm * distance / self.focal_mm)

    def h_pic(self, distance: float) -> float:
        return self.sensor_h_mm * distance / self.focal_mm

    def gsd_distance(self) -> float:
        """Distance at which one pixel spans ``gsd_cm``."""
        pitch_mm = self.sensor_w_mm / self.image_w_px
        return self.gsd_cm / 100.0 * self.focal_mm / pitch_mm

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "CameraModel":
        keys = {"focal_mm", "sensor_w_mm", "sensor_h_mm", "image_w_px", "image_h_px", "d_max_m", "gsd_cm"}
        unknown = set(doc) - keys
        if unknown:
            raise ValueError(f"unknown camera keys: {sorted(unknown)}")
        return cls(**{k: doc[k] for k in keys if k in doc})


def direction(yaw_deg, pitch_deg) -> np.ndarray:
    psi = np.radians(yaw_deg)
    phi = np.radians(pitch_deg)
    return np.array([np.cos(phi) * np.sin(psi), np.cos(phi) * np.cos(psi), np.sin(phi)])


def yaw_of(vec2) -> float:
    """Yaw in [0, 360) of a horizontal direction."""
    yaw = math.degrees(math.atan2(vec2[0], vec2[1])) % 360.0
    return 0.0 if yaw >= 360.0 - 1e-12 else yaw


def unit2_from_yaw(yaw_deg: float) -> np.ndarray:
    psi = math.radians(yaw_deg)
    return np.array([math.sin(psi), math.cos(psi)])


@dataclass(frozen=True)
class View3D:
    position: tuple[float, float, float]
    yaw: float
    pitch: float
    target: str = ""

    @property
    def direction(self) -> np.ndarray:
        return direction(self.yaw, self.pitch)

    @property
    def is_nadir(self) -> bool:
        return abs(self.pitch + 90.0) < 1e-9


def camera_frame(yaw_deg: float, pitch_deg: float):
    fwd = direction(yaw_deg, pitch_deg)
    psi = math.radians(yaw_deg)
    right = np.array([math.cos(psi), -math.sin(psi), 0.0])
    up = np.cross(right, fwd)
    return fwd, right, up


def in_frustum(position, yaw_deg, pitch_deg, pts, camera: CameraModel) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    fwd, right, up = camera_frame(yaw_deg, pitch_deg)
    v = pts - np.asarray(position, dtype=float)
    depth = v @ fwd
    tx = math.tan(camera.hfov / 2) + 1e-12
    ty = math.tan(camera.vfov / 2) + 1e-12
    return (depth > 1e-9) & (np.abs(v @ right) <= depth * tx) & (np.abs(v @ up) <= depth * ty)
