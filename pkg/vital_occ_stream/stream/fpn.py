"""
Lightweight 3D feature pyramid producing V_curr at half resolution.
"""

import logging

import numpy as np

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.numerics.conv import conv3d
from vital_occ_stream.numerics.sampling import Padding, resample_volume
from vital_occ_stream.numerics.volume import VoxelVolume, concat_channels
from vital_occ_stream.stream.models import FpnParams

logger = logging.getLogger(__name__)


def relu_volume(vol: VoxelVolume) -> VoxelVolume:
    return VoxelVolume(np.maximum(vol.data, np.float32(0.0)))


def fpn3d(v_init: VoxelVolume, params: FpnParams) -> VoxelVolume:
    """
    Two strided levels (half and quarter resolution), all three levels
    resampled to half resolution, stacked and mixed by a 1×1×1 convolution.
    """
    if any(d % 4 for d in v_init.dims):
        raise ContractViolation(f"fpn3d input dims {v_init.dims} must be divisible by 4")
    half = tuple(d // 2 for d in v_init.dims)

    level1 = relu_volume(conv3d(params.level1, v_init))
    if level1.dims != half:
        raise ContractViolation(f"fpn level1 produced {level1.dims}, expected {half}")
    level2 = relu_volume(conv3d(params.level2, level1))

    stacked = concat_channels(
        [
            resample_volume(v_init, half, Padding.BORDER),
            level1,
            resample_volume(level2, half, Padding.BORDER),
        ]
    )
    v_curr = conv3d(params.compress, stacked)
    logger.debug(f"🧱 STREAM: fpn3d {v_init.dims}x{v_init.channels} → {v_curr.dims}x{v_curr.channels}")
    return v_curr
