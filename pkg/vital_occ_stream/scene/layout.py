"""
World layout and ego trajectory of a synthetic scene.

Static primitives (ground slab, walls, pillars) and dynamic boxes live in the
global frame; every primitive except the ground is an oriented box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from vital_occ_stream.core.models import class_id
from vital_occ_stream.geometry.boxes import Box3D
from vital_occ_stream.geometry.transforms import RigidTransform
from vital_occ_stream.scene.config import EgoConfig, SceneConfig, WallConfig
from vital_occ_stream.scene.models import DynamicBox


@dataclass(frozen=True)
class GroundSlab:
    z_low: float
    z_high: float
    class_id: int


@dataclass(frozen=True)
class StaticLayout:
    ground: Optional[GroundSlab]
    boxes: Tuple[Tuple[Box3D, int], ...]


def wall_box(wall: WallConfig) -> Box3D:
    (x0, y0), (x1, y1) = wall.start, wall.end
    length = math.hypot(x1 - x0, y1 - y0)
    center = ((x0 + x1) / 2.0, (y0 + y1) / 2.0, wall.base_z + wall.height / 2.0)
    return Box3D(center, (length, wall.thickness, wall.height), math.atan2(y1 - y0, x1 - x0))


def build_static_layout(config: SceneConfig) -> StaticLayout:
    ground = None
    g = config.static.ground
    if g.enabled:
        ground = GroundSlab(g.top_z - g.thickness, g.top_z, class_id(g.class_name))
    boxes = [(wall_box(w), class_id(w.class_name)) for w in config.static.walls]
    boxes += [(Box3D(p.center, p.size, p.yaw), class_id(p.class_name)) for p in config.static.pillars]
    return StaticLayout(ground, tuple(boxes))


def dynamic_boxes_at(config: SceneConfig, time_s: float) -> List[DynamicBox]:
    """Global-frame dynamic boxes after ``time_s`` seconds of constant-velocity motion."""
    out = []
    for idx, spawn in enumerate(config.dynamic):
        velocity = np.asarray(spawn.velocity, dtype=np.float64)
        center = np.asarray(spawn.center, dtype=np.float64) + velocity * time_s
        out.append(
            DynamicBox(
                class_id=class_id(spawn.class_name),
                box=Box3D(tuple(center), spawn.size, spawn.yaw),
                velocity=tuple(float(v) for v in velocity),
                track_id=idx if spawn.track_id is None else int(spawn.track_id),
            )
        )
    return out


class EgoTrajectory:
    """Ego pose as a function of time, interpolated between waypoints."""

    def __init__(self, config: EgoConfig):
        points = np.asarray(config.waypoints, dtype=np.float64)
        self.times = points[:, 0]
        values = points[:, 1:].copy()
        values[:, 2] = np.unwrap(values[:, 2])
        self.values = values
        self._spline = CubicSpline(self.times, values, axis=0) if len(points) >= 3 else None

    def state(self, time_s: float) -> Tuple[float, float, float]:
        """``(x, y, yaw)`` at ``time_s``, held constant outside the waypoint span."""
        t = float(np.clip(time_s, self.times[0], self.times[-1]))
        if len(self.times) == 1:
            x, y, yaw = self.values[0]
        elif self._spline is None:
            x, y, yaw = (float(np.interp(t, self.times, self.values[:, k])) for k in range(3))
        else:
            x, y, yaw = self._spline(t)
        return float(x), float(y), float(yaw)

    def pose(self, time_s: float) -> RigidTransform:
        x, y, yaw = self.state(time_s)
        return RigidTransform.from_yaw(yaw, (x, y, 0.0))
