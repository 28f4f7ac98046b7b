"""
RefineNet: bottleneck convolutions with 3D channel and spatial attention,
plus stream fusion.
"""

import logging
from typing import Tuple

import numpy as np

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.numerics.conv import conv3d
from vital_occ_stream.numerics.functional import PoolKind, channel_pool, sigmoid, spatial_pool
from vital_occ_stream.numerics.layers import apply_mlp
from vital_occ_stream.numerics.volume import VoxelVolume, add_volumes, concat_channels, expect_channels
from vital_occ_stream.stream.fpn import relu_volume
from vital_occ_stream.stream.models import AttentionMaps, RefineNetParams

logger = logging.getLogger(__name__)


def cbam3d(v_out: VoxelVolume, params: RefineNetParams) -> AttentionMaps:
    """Channel attention from pooled descriptors, then spatial attention logits."""
    expect_channels(v_out, params.channels, "cbam3d input")
    avg = spatial_pool(v_out, PoolKind.AVG)
    mx = spatial_pool(v_out, PoolKind.MAX)
    channel_mask = sigmoid(apply_mlp(params.cbam_mlp, avg) + apply_mlp(params.cbam_mlp, mx))

    modulated = VoxelVolume(
        (v_out.astype64() * channel_mask[:, None, None, None]).astype(np.float32)
    )
    pooled = concat_channels(
        [channel_pool(modulated, PoolKind.AVG), channel_pool(modulated, PoolKind.MAX)]
    )
    spatial_mask = conv3d(params.spatial_conv, pooled)
    return AttentionMaps(channel_mask=channel_mask, spatial_mask=spatial_mask)


def bottleneck(v_warp: VoxelVolume, params: RefineNetParams) -> VoxelVolume:
    squeezed = relu_volume(conv3d(params.squeeze, v_warp))
    body = relu_volume(conv3d(params.body, squeezed))
    return conv3d(params.expand, body)


def refine(v_warp: VoxelVolume, params: RefineNetParams) -> Tuple[VoxelVolume, AttentionMaps]:
    """``v_refwarp = σ(M_s) ⊙ (M_c ⊙ v_out) + v_warp``."""
    expect_channels(v_warp, params.channels, "refine input")
    v_out = bottleneck(v_warp, params)
    maps = cbam3d(v_out, params)
    spatial_gate = sigmoid(maps.spatial_mask.data)
    modulated = spatial_gate * (maps.channel_mask[:, None, None, None] * v_out.astype64())
    v_refwarp = VoxelVolume((modulated + v_warp.astype64()).astype(np.float32))
    return v_refwarp, maps


def fuse(v_refwarp: VoxelVolume, v_curr: VoxelVolume) -> VoxelVolume:
    """V_SA = V_refwarp + V_curr."""
    if not v_refwarp.same_shape(v_curr):
        raise ContractViolation(
            f"fuse shape mismatch: {v_refwarp.data.shape} vs {v_curr.data.shape}"
        )
    return add_volumes(v_refwarp, v_curr)
