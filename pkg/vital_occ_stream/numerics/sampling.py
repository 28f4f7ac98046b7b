"""
Trilinear sampling and lattice resampling.

Points are given in continuous cell space (cell centers at integer + 0.5).
Two padding modes are supported:

* ``zeros``  corners outside the lattice contribute nothing and points
  outside ``[0, dim]`` on any axis return the zero vector.  Used for warping
  and deformable sampling.
* ``border`` coordinates are clamped to the outermost cell centers, so a
  constant volume resamples to the same constant.  Used for resolution
  changes inside one frame.
"""

from __future__ import annotations

from enum import Enum
from itertools import product
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.geometry.grid import cell_index_centers
from vital_occ_stream.numerics.volume import VoxelVolume
from vital_occ_stream.utils.parallel import map_chunks

POINT_CHUNK = 32768

# Fractions this close to a lattice point are snapped onto it
SNAP_TOL = 1e-9


class Padding(str, Enum):
    ZEROS = "zeros"
    BORDER = "border"


def _sample_block(
    flat: NDArray[np.float32],
    dims: NDArray[np.int64],
    points: NDArray[np.float64],
    padding: Padding,
) -> NDArray[np.float64]:
    u = points - 0.5
    if padding is Padding.BORDER:
        u = np.clip(u, 0.0, (dims - 1).astype(np.float64))
    base = np.floor(u)
    frac = u - base
    snap_lo = frac < SNAP_TOL
    snap_hi = frac > 1.0 - SNAP_TOL
    base = np.where(snap_hi, base + 1.0, base)
    frac = np.where(snap_lo | snap_hi, 0.0, frac)
    base = base.astype(np.int64)

    out = np.zeros((points.shape[0], flat.shape[0]), dtype=np.float64)
    strides = np.array([dims[1] * dims[2], dims[2], 1], dtype=np.int64)
    for corner in product((0, 1), repeat=3):
        offs = np.asarray(corner, dtype=np.int64)
        idx = base + offs
        w = np.prod(np.where(offs == 1, frac, 1.0 - frac), axis=1)
        if padding is Padding.BORDER:
            idx = np.clip(idx, 0, dims - 1)
            valid = w != 0.0
        else:
            valid = np.all((idx >= 0) & (idx < dims), axis=1) & (w != 0.0)
        if not np.any(valid):
            continue
        lin = idx[valid] @ strides
        out[valid] += w[valid, None] * flat[:, lin].T.astype(np.float64)

    if padding is Padding.ZEROS:
        outside = np.any((points < 0.0) | (points > dims), axis=1)
        out[outside] = 0.0
    return out


def trilinear_sample(
    vol: VoxelVolume,
    points: ArrayLike,
    padding: Padding | str = Padding.ZEROS,
) -> NDArray[np.float32]:
    """Sample ``vol`` at ``(M, 3)`` cell-space points → ``(M, C)`` features."""
    padding = Padding(padding)
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ContractViolation(f"points must be (M, 3), got shape {pts.shape}")
    if pts.shape[0] == 0:
        return np.zeros((0, vol.channels), dtype=np.float32)
    flat = vol.data.reshape(vol.channels, -1)
    dims = np.asarray(vol.dims, dtype=np.int64)

    def _run(start: int, stop: int) -> NDArray[np.float32]:
        return _sample_block(flat, dims, pts[start:stop], padding).astype(np.float32)

    return np.concatenate(map_chunks(_run, pts.shape[0], POINT_CHUNK), axis=0)


def resample_volume(
    vol: VoxelVolume,
    out_dims: Sequence[int],
    padding: Padding | str = Padding.BORDER,
) -> VoxelVolume:
    """Resample onto an ``out_dims`` lattice spanning the same extent."""
    out_dims = tuple(int(d) for d in out_dims)
    if out_dims == vol.dims:
        return vol
    scale = np.asarray(vol.dims, dtype=np.float64) / np.asarray(out_dims, dtype=np.float64)
    points = cell_index_centers(out_dims) * scale
    return VoxelVolume.from_cells(trilinear_sample(vol, points, padding), out_dims)
