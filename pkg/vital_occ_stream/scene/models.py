"""
Per-frame records produced by the synthetic world generator.

Boxes, velocities and ground-truth grids are expressed in the grid frame of
the frame they belong to (the ego frame for ego grids, the lidar frame for
lidar grids).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.decoder.models import SemanticGrid
from vital_occ_stream.geometry.boxes import Box3D
from vital_occ_stream.geometry.grid import GridSpec
from vital_occ_stream.geometry.transforms import EgoPose, RigidTransform


@dataclass(frozen=True)
class DynamicBox:
    class_id: int
    box: Box3D
    velocity: Tuple[float, float, float]
    track_id: int


@dataclass(frozen=True, eq=False)
class CameraRig:
    """Pinhole camera with its rendered feature and depth images."""

    name: str
    intrinsics: NDArray[np.float64]
    cam_to_ego: RigidTransform
    image_dims: Tuple[int, int]
    feature_image: NDArray[np.float32]
    depth_image: NDArray[np.float64]
    lift_depth: Optional[NDArray[np.float64]] = None

    def __post_init__(self) -> None:
        k = np.array(self.intrinsics, dtype=np.float64)
        if k.shape != (3, 3) or abs(np.linalg.det(k)) < 1e-12:
            raise ContractViolation(f"camera {self.name}: intrinsics must be an invertible 3x3 matrix")
        w, h = self.image_dims
        if self.depth_image.shape != (h, w) or self.feature_image.shape[1:] != (h, w):
            raise ContractViolation(f"camera {self.name}: image shapes do not match ({w}, {h})")
        finite = np.isfinite(self.depth_image)
        if np.any(self.depth_image[finite] <= 0):
            raise ContractViolation(f"camera {self.name}: depth must be > 0 where defined")
        for arr in (k, self.feature_image, self.depth_image):
            arr.setflags(write=False)
        object.__setattr__(self, "intrinsics", k)

    @property
    def depth_for_lift(self) -> NDArray[np.float64]:
        return self.depth_image if self.lift_depth is None else self.lift_depth


@dataclass(frozen=True, eq=False)
class SceneFrame:
    """Everything the pipeline and the metrics need for one timestep."""

    timestep: int
    ego: EgoPose
    spec: GridSpec
    gt_grid: SemanticGrid
    dynamic_boxes: List[DynamicBox] = field(default_factory=list)
    cameras: List[CameraRig] = field(default_factory=list)
    grid_to_ego: RigidTransform = field(default_factory=RigidTransform.identity)
