"""
Scene description models for the synthetic world generator.

A scene file is YAML with the sections ``grid``, ``ego``, ``static``,
``dynamic.N`` and ``camera.N`` (see ``docs/formats.md``).  Static and dynamic
geometry is given in the global frame; cameras are mounted on the ego.
"""

import math
from typing import Annotated, List, Optional, Tuple

from pydantic import AfterValidator, BaseModel, Field, field_validator, model_validator

from vital_occ_stream.core.models import CLASS_IDS, EMPTY_LABEL
from vital_occ_stream.geometry.grid import GridFrame, GridSpec
from vital_occ_stream.geometry.transforms import RigidTransform


def _check_class_name(v: str) -> str:
    if v not in CLASS_IDS or CLASS_IDS[v] == EMPTY_LABEL:
        raise ValueError(f"unknown semantic class '{v}'")
    return v


def _check_positive_size(v: Tuple[float, float, float]) -> Tuple[float, float, float]:
    if any(not s > 0 for s in v):
        raise ValueError(f"box size components must be > 0, got {v}")
    return v


ClassName = Annotated[str, AfterValidator(_check_class_name)]
BoxSize = Annotated[Tuple[float, float, float], AfterValidator(_check_positive_size)]


# ---------------------------------------------------------------------------
# Section models
# ---------------------------------------------------------------------------

class MountConfig(BaseModel):
    """Rigid mount on the ego body: translation plus yaw/pitch."""
    translation: Tuple[float, float, float] = Field(default=(0.0, 0.0, 0.0), description="Mount position in the ego frame (m)")
    yaw: float = Field(default=0.0, description="Rotation about ego +z (rad)")
    pitch: float = Field(default=0.0, description="Downward tilt about the mount's y axis (rad)")

    def transform(self) -> RigidTransform:
        return RigidTransform.from_yaw_pitch(self.yaw, self.pitch, self.translation)


class EgoConfig(BaseModel):
    """Ego trajectory as global-frame waypoints."""
    waypoints: List[Tuple[float, float, float, float]] = Field(
        default_factory=lambda: [(0.0, 0.0, 0.0, 0.0)],
        description="(t seconds, x m, y m, yaw rad); interpolated with a cubic spline when ≥ 3 are given",
    )

    @field_validator("waypoints")
    @classmethod
    def _check_waypoints(cls, v: List[Tuple[float, float, float, float]]) -> List[Tuple[float, float, float, float]]:
        if not v:
            raise ValueError("at least one waypoint is required")
        times = [w[0] for w in v]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint times must be strictly increasing")
        return v


class GroundConfig(BaseModel):
    """Horizontal slab spanning the whole world."""
    enabled: bool = Field(default=True, description="Emit the ground slab")
    class_name: ClassName = Field(default="driveable_surface", description="Semantic class of the slab")
    top_z: float = Field(default=-0.2, description="Slab top height (m)")
    thickness: float = Field(default=0.8, description="Slab thickness (m)")


class WallConfig(BaseModel):
    """Vertical wall along a global-frame segment."""
    start: Tuple[float, float] = Field(..., description="Segment start (x, y) in m")
    end: Tuple[float, float] = Field(..., description="Segment end (x, y) in m")
    height: float = Field(default=3.0, gt=0, description="Wall height above base_z (m)")
    thickness: float = Field(default=0.4, gt=0, description="Wall thickness (m)")
    base_z: float = Field(default=-0.2, description="Wall base height (m)")
    class_name: ClassName = Field(default="manmade", description="Semantic class")

    @model_validator(mode="after")
    def _check_length(self) -> "WallConfig":
        if math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]) <= 0:
            raise ValueError("wall start and end coincide")
        return self


class BoxConfig(BaseModel):
    """Static oriented box (pillars, parked obstacles, vegetation blobs)."""
    class_name: ClassName = Field(default="manmade", description="Semantic class")
    center: Tuple[float, float, float] = Field(..., description="Box center in the global frame (m)")
    size: BoxSize = Field(..., description="(length, width, height) in m")
    yaw: float = Field(default=0.0, description="Heading about +z (rad)")


class StaticLayoutConfig(BaseModel):
    ground: GroundConfig = Field(default_factory=GroundConfig, description="Ground slab")
    walls: List[WallConfig] = Field(default_factory=list, description="Wall segments")
    pillars: List[BoxConfig] = Field(default_factory=list, description="Static boxes")


class DynamicBoxConfig(BaseModel):
    """A moving object with constant global-frame velocity."""
    class_name: ClassName = Field(..., description="Semantic class (one of the ten object classes)")
    center: Tuple[float, float, float] = Field(..., description="Center at t = 0 in the global frame (m)")
    size: BoxSize = Field(..., description="(length, width, height) in m")
    yaw: float = Field(default=0.0, description="Heading about +z (rad)")
    velocity: Tuple[float, float, float] = Field(default=(0.0, 0.0, 0.0), description="Velocity (m/s)")
    track_id: Optional[int] = Field(default=None, description="Stable identity; defaults to the section index")


class CameraConfig(BaseModel):
    """Pinhole camera (OpenCV axes: x right, y down, z forward)."""
    name: str = Field(default="", description="Camera name; defaults to the section key")
    width: int = Field(default=64, ge=1, description="Image width (px)")
    height: int = Field(default=48, ge=1, description="Image height (px)")
    fx: float = Field(default=40.0, gt=0, description="Focal length x (px)")
    fy: float = Field(default=40.0, gt=0, description="Focal length y (px)")
    cx: Optional[float] = Field(default=None, description="Principal point x (px); defaults to width / 2")
    cy: Optional[float] = Field(default=None, description="Principal point y (px); defaults to height / 2")
    mount: MountConfig = Field(
        default_factory=lambda: MountConfig(translation=(0.0, 0.0, 1.5)),
        description="Camera pose on the ego",
    )
    max_range: float = Field(default=60.0, gt=0, description="Depths beyond this are undefined (m)")


class SceneConfig(BaseModel):
    """Full scene description."""
    grid: GridSpec = Field(default_factory=GridSpec.occ3d, description="Full-resolution lattice")
    frames: int = Field(default=8, ge=0, description="Number of frames to generate")
    dt: float = Field(default=0.5, gt=0, description="Seconds between frames")
    feature_channels: int = Field(default=16, ge=1, description="C_init of the lifted features")
    feature_noise_std: float = Field(default=0.1, ge=0, description="Gaussian noise on pixel features")
    depth_noise_std: float = Field(default=0.0, ge=0, description="Gaussian noise on the depth used for lifting (m)")
    visibility: bool = Field(default=True, description="Compute camera visibility masks")
    lidar_to_ego: MountConfig = Field(default_factory=MountConfig, description="Grid-to-ego mount for lidar-frame grids")
    ego: EgoConfig = Field(default_factory=EgoConfig, description="Ego trajectory")
    static: StaticLayoutConfig = Field(default_factory=StaticLayoutConfig, description="Static layout")
    dynamic: List[DynamicBoxConfig] = Field(default_factory=list, description="Moving objects")
    cameras: List[CameraConfig] = Field(default_factory=list, description="Camera rig")

    def grid_to_ego(self) -> RigidTransform:
        if self.grid.frame is GridFrame.LIDAR:
            return self.lidar_to_ego.transform()
        return RigidTransform.identity()
