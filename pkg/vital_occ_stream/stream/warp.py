"""
Motion-aware warping of the previous final volume into the current frame.

Each current cell center pulls its feature from where that point sat in the
previous frame; the gather is a trilinear sample with zero fill outside.
"""

import logging
from typing import Optional

import numpy as np

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.geometry.grid import GridSpec, cell_index_centers
from vital_occ_stream.geometry.transforms import RigidTransform, conjugate
from vital_occ_stream.numerics.sampling import Padding, trilinear_sample
from vital_occ_stream.numerics.volume import VoxelVolume

logger = logging.getLogger(__name__)


def warp_volume(
    prev: VoxelVolume,
    transform: RigidTransform,
    spec_half: GridSpec,
    grid_to_ego: Optional[RigidTransform] = None,
) -> VoxelVolume:
    """
    Resample ``prev`` onto the current lattice.

    ``transform`` maps previous-ego coordinates to current-ego coordinates.
    For grids living in a sensor frame, ``grid_to_ego`` is the sensor mount
    and the motion is conjugated into that frame first.
    """
    if prev.dims != spec_half.dims:
        raise ContractViolation(f"warp input dims {prev.dims} != lattice dims {spec_half.dims}")
    if grid_to_ego is not None:
        transform = conjugate(transform, grid_to_ego)
    if transform.is_identity():
        return prev

    # Work in cell space: c_prev = R' c + (R' m + t' - m) / res with (R', t') = T⁻¹
    inverse = transform.inverse()
    m = spec_half.min_corner_array
    offset = (inverse.rotation @ m + inverse.translation - m) / spec_half.resolution
    centers = cell_index_centers(spec_half.dims)
    pulled = centers @ inverse.rotation.T + offset

    samples = trilinear_sample(prev, pulled, Padding.ZEROS)
    warped = VoxelVolume.from_cells(samples, spec_half.dims)
    logger.debug(
        f"🌀 STREAM: warped {prev.dims} by |t|={np.linalg.norm(transform.translation):.3f} m"
    )
    return warped
