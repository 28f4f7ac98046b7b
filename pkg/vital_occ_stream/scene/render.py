"""
Pinhole rendering of the synthetic world: exact z-depth, first-hit class,
class-coded feature images and camera visibility.

Camera axes follow OpenCV (x right, y down, z forward).  A pixel ray is
``o + s · R K⁻¹ [u + ½, v + ½, 1]ᵀ`` so the ray parameter ``s`` at a hit is
the z-depth.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import NDArray

from vital_occ_stream.core.models import NUM_SEMANTIC_CLASSES
from vital_occ_stream.geometry.boxes import Box3D, ray_box_entry
from vital_occ_stream.geometry.grid import GridSpec
from vital_occ_stream.geometry.transforms import RigidTransform
from vital_occ_stream.scene.config import CameraConfig
from vital_occ_stream.scene.layout import GroundSlab
from vital_occ_stream.scene.models import CameraRig
from vital_occ_stream.utils.parallel import map_chunks

logger = logging.getLogger(__name__)

# Columns are the camera x, y, z axes expressed in a forward-looking body frame
CAMERA_AXES = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])

CLASS_CODE_SEED = 20240917
PIXEL_CHUNK = 4096
VISIBILITY_PIXEL_CHUNK = 512


@dataclass(frozen=True)
class EgoSurfaces:
    """Renderable geometry expressed in one frame's ego coordinates."""

    ground: Optional[GroundSlab]
    boxes: Tuple[Tuple[Box3D, int], ...]


def class_code_table(channels: int) -> NDArray[np.float64]:
    """Fixed per-class feature codes ``(K + 1, C)``; row 0 (empty) is zero."""
    table = np.random.default_rng(CLASS_CODE_SEED).standard_normal((NUM_SEMANTIC_CLASSES + 1, channels))
    table[0] = 0.0
    return table


def camera_to_ego(config: CameraConfig) -> RigidTransform:
    mount = config.mount.transform()
    return RigidTransform(mount.rotation @ CAMERA_AXES, mount.translation)


def intrinsics(config: CameraConfig) -> NDArray[np.float64]:
    cx = config.width / 2.0 if config.cx is None else config.cx
    cy = config.height / 2.0 if config.cy is None else config.cy
    return np.array([[config.fx, 0.0, cx], [0.0, config.fy, cy], [0.0, 0.0, 1.0]])


def pixel_directions(k: NDArray[np.float64], width: int, height: int) -> NDArray[np.float64]:
    """Camera-frame ray directions with unit z, row-major over (v, u)."""
    v, u = np.meshgrid(np.arange(height) + 0.5, np.arange(width) + 0.5, indexing="ij")
    pix = np.stack([u.reshape(-1), v.reshape(-1), np.ones(u.size)], axis=0)
    return (np.linalg.inv(k) @ pix).T


def _cast(
    surfaces: EgoSurfaces, origin: NDArray[np.float64], dirs: NDArray[np.float64]
) -> Tuple[NDArray[np.float64], NDArray[np.int64]]:
    depth = np.full(dirs.shape[0], np.inf)
    label = np.zeros(dirs.shape[0], dtype=np.int64)
    if surfaces.ground is not None and origin[2] > surfaces.ground.z_high:
        with np.errstate(divide="ignore"):
            s = np.where(dirs[:, 2] < 0.0, (surfaces.ground.z_high - origin[2]) / dirs[:, 2], np.inf)
        closer = s < depth
        depth = np.where(closer, s, depth)
        label = np.where(closer, surfaces.ground.class_id, label)
    for box, cls in surfaces.boxes:
        s = ray_box_entry(box, origin, dirs)
        closer = s < depth
        depth = np.where(closer, s, depth)
        label = np.where(closer, cls, label)
    return depth, label


def render_camera(
    config: CameraConfig,
    surfaces: EgoSurfaces,
    feature_channels: int,
    rng: np.random.Generator,
    feature_noise_std: float = 0.0,
    depth_noise_std: float = 0.0,
) -> Tuple[CameraRig, NDArray[np.int64]]:
    """Render one camera; returns the rig and the per-pixel first-hit class."""
    k = intrinsics(config)
    cam_to_ego = camera_to_ego(config)
    w, h = config.width, config.height
    dirs = pixel_directions(k, w, h) @ cam_to_ego.rotation.T
    origin = cam_to_ego.translation

    parts = map_chunks(lambda s, e: _cast(surfaces, origin, dirs[s:e]), dirs.shape[0], PIXEL_CHUNK)
    depth = np.concatenate([p[0] for p in parts])
    label = np.concatenate([p[1] for p in parts])
    beyond = depth > config.max_range
    depth[beyond] = np.inf
    label[beyond] = 0

    hit = np.isfinite(depth)
    codes = class_code_table(feature_channels)
    features = codes[label] + rng.standard_normal((label.size, feature_channels)) * feature_noise_std
    features[~hit] = 0.0

    lift_depth = None
    if depth_noise_std > 0:
        lift_depth = depth + rng.standard_normal(depth.size) * depth_noise_std
        lift_depth = np.where(hit, np.maximum(lift_depth, 1e-3), np.inf).reshape(h, w)

    rig = CameraRig(
        name=config.name,
        intrinsics=k,
        cam_to_ego=cam_to_ego,
        image_dims=(w, h),
        feature_image=features.T.reshape(feature_channels, h, w).astype(np.float32),
        depth_image=depth.reshape(h, w),
        lift_depth=lift_depth,
    )
    return rig, label.reshape(h, w)


def visibility_mask(
    rigs: Sequence[CameraRig],
    spec: GridSpec,
    grid_to_ego: RigidTransform,
    max_ranges: Sequence[float],
) -> NDArray[np.bool_]:
    """
    Cells seen by any camera: every cell a pixel ray crosses up to and
    including its first hit (or up to the camera range when nothing is hit).
    Rays are sampled every half cell.
    """
    mask = np.zeros(spec.num_cells, dtype=bool)
    ego_to_grid = grid_to_ego.inverse()
    step = spec.resolution / 2.0
    for rig, max_range in zip(rigs, max_ranges):
        w, h = rig.image_dims
        dirs = pixel_directions(rig.intrinsics, w, h) @ rig.cam_to_ego.rotation.T
        stop = np.where(np.isfinite(rig.depth_image.reshape(-1)), rig.depth_image.reshape(-1), max_range)
        # Extend a quarter cell past the surface so the hit cell itself is marked
        stop = stop + spec.resolution / 4.0 / np.linalg.norm(dirs, axis=1)
        origin = ego_to_grid.apply(rig.cam_to_ego.translation)
        grid_dirs = dirs @ ego_to_grid.rotation.T

        def _mark(start: int, end: int) -> NDArray[np.int64]:
            d = grid_dirs[start:end]
            norms = np.linalg.norm(d, axis=1)
            counts = np.ceil(stop[start:end] * norms / step).astype(np.int64) + 1
            total = int(counts.sum())
            ray = np.repeat(np.arange(end - start), counts)
            within = np.arange(total) - np.repeat(np.cumsum(counts) - counts, counts)
            s = np.minimum(within * step / norms[ray], stop[start:end][ray])
            points = origin + s[:, None] * d[ray]
            cells = spec.world_to_cell(points)
            inside = spec.in_bounds(cells)
            return np.unique(spec.flat_index(cells[inside]))

        for flat in map_chunks(_mark, dirs.shape[0], VISIBILITY_PIXEL_CHUNK):
            mask[flat] = True
    return mask.reshape(spec.dims)
