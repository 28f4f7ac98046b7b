"""
Depth-given camera lift: every pixel with a finite depth is unprojected into
the grid frame and its feature vector is summed into the containing cell.
"""

from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from numpy.typing import NDArray

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.geometry.grid import GridSpec
from vital_occ_stream.numerics.volume import VoxelVolume
from vital_occ_stream.scene.models import CameraRig, SceneFrame

logger = logging.getLogger(__name__)


def unproject(rig: CameraRig, depth: Optional[NDArray[np.float64]] = None) -> NDArray[np.float64]:
    """Ego-frame points ``(H*W, 3)`` for every pixel; rows are NaN where depth is undefined."""
    w, h = rig.image_dims
    d = (rig.depth_for_lift if depth is None else depth).reshape(-1)
    v, u = np.meshgrid(np.arange(h) + 0.5, np.arange(w) + 0.5, indexing="ij")
    pix = np.stack([u.reshape(-1), v.reshape(-1), np.ones(u.size)], axis=0)
    rays = (np.linalg.inv(rig.intrinsics) @ pix).T
    with np.errstate(invalid="ignore"):
        cam = rays * np.where(np.isfinite(d), d, np.nan)[:, None]
    return rig.cam_to_ego.apply(cam)


def splat_sums(frame: SceneFrame, spec: GridSpec, channels: Optional[int] = None) -> NDArray[np.float64]:
    """Per-cell feature sums ``(N, C)`` accumulated in 64 bits."""
    if channels is None:
        channels = frame.cameras[0].feature_image.shape[0] if frame.cameras else 1
    sums = np.zeros((spec.num_cells, channels), dtype=np.float64)
    ego_to_grid = frame.grid_to_ego.inverse()
    for rig in frame.cameras:
        if rig.feature_image.shape[0] != channels:
            raise ContractViolation(
                f"camera {rig.name} has {rig.feature_image.shape[0]} feature channels, expected {channels}"
            )
        points = ego_to_grid.apply(unproject(rig))
        valid = np.all(np.isfinite(points), axis=1)
        cells = spec.world_to_cell(np.where(valid[:, None], points, 0.0))
        keep = valid & spec.in_bounds(cells)
        features = rig.feature_image.reshape(rig.feature_image.shape[0], -1).T.astype(np.float64)
        np.add.at(sums, spec.flat_index(cells[keep]), features[keep])
        logger.debug(
            f"🎥 SCENE: t={frame.timestep} {rig.name}: {int(keep.sum())}/{keep.size} pixels splatted"
        )
    return sums


def lift_splat(frame: SceneFrame, spec: GridSpec, channels: Optional[int] = None) -> VoxelVolume:
    """``V_init``: summed pixel features per cell; empty cells are zero."""
    return VoxelVolume.from_cells(splat_sums(frame, spec, channels).astype(np.float32), spec.dims)
