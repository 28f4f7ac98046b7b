"""
Recurrence state and learned parameter sets of stream-based aggregation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from numpy.typing import NDArray

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.decoder.models import DecoderParams
from vital_occ_stream.geometry.grid import GridSpec
from vital_occ_stream.geometry.transforms import EgoPose, RigidTransform
from vital_occ_stream.numerics.layers import Activation, Conv3dLayer, LinearLayer
from vital_occ_stream.numerics.volume import VoxelVolume
from vital_occ_stream.numerics.weights import WeightStore
from vital_occ_stream.query.models import InstanceQuery

# Timestep of the cold-start state; the first frame must be timestep 0
COLD_START_TIMESTEP = -1


@dataclass(frozen=True, eq=False)
class StreamState:
    """What one frame hands to the next: V_fin, its pose and surviving queries."""

    prev_volume: VoxelVolume
    prev_pose: EgoPose
    prev_queries: Tuple[InstanceQuery, ...] = ()
    timestep: int = COLD_START_TIMESTEP

    @classmethod
    def cold_start(cls, channels: int, spec_half: GridSpec) -> "StreamState":
        """Zero volume at identity pose; the next frame warps nothing."""
        return cls(
            prev_volume=VoxelVolume.zeros(channels, spec_half.dims),
            prev_pose=EgoPose(COLD_START_TIMESTEP, RigidTransform.identity()),
        )

    @property
    def is_cold(self) -> bool:
        return self.timestep == COLD_START_TIMESTEP


@dataclass(frozen=True, eq=False)
class AttentionMaps:
    """Channel mask M_c in (0, 1) and pre-sigmoid spatial logits M_s."""

    channel_mask: NDArray[np.float64]
    spatial_mask: VoxelVolume

    def __post_init__(self) -> None:
        if self.spatial_mask.channels != 1:
            raise ContractViolation("spatial mask must have one channel")
        if not self.spatial_mask.is_finite():
            raise ContractViolation("spatial mask has non-finite entries")


@dataclass(frozen=True, eq=False)
class FpnParams:
    level1: Conv3dLayer
    level2: Conv3dLayer
    compress: Conv3dLayer

    @classmethod
    def from_store(
        cls,
        store: WeightStore,
        init_channels: int,
        level1_channels: int,
        level2_channels: int,
        channels: int,
        seed: Optional[int] = None,
    ) -> "FpnParams":
        stacked = init_channels + level1_channels + level2_channels
        return cls(
            level1=store.conv("fpn.level1", init_channels, level1_channels, 3, stride=2, padding=1, seed=seed),
            level2=store.conv("fpn.level2", level1_channels, level2_channels, 3, stride=2, padding=1, seed=seed),
            compress=store.conv("fpn.compress", stacked, channels, 1, seed=seed),
        )


@dataclass(frozen=True, eq=False)
class RefineNetParams:
    """Bottleneck C → C/4 → C/4 → C and the 3D channel/spatial attention."""

    squeeze: Conv3dLayer
    body: Conv3dLayer
    expand: Conv3dLayer
    cbam_mlp: Tuple[LinearLayer, LinearLayer]
    spatial_conv: Conv3dLayer

    def __post_init__(self) -> None:
        c = self.squeeze.c_in
        if c % 4:
            raise ContractViolation(f"RefineNet channels must be divisible by 4, got {c}")
        chain = (self.squeeze.c_out, self.body.c_in, self.body.c_out, self.expand.c_in)
        if len(set(chain)) != 1 or self.expand.c_out != c:
            raise ContractViolation(f"RefineNet channel chain is inconsistent: {c} → {chain} → {self.expand.c_out}")
        if self.spatial_conv.c_in != 2 or self.spatial_conv.c_out != 1:
            raise ContractViolation("spatial_conv must map 2 → 1 channels")
        if self.cbam_mlp[0].in_features != c or self.cbam_mlp[1].out_features != c:
            raise ContractViolation("cbam_mlp must map C → C/r → C")

    @property
    def channels(self) -> int:
        return self.squeeze.c_in

    @classmethod
    def from_store(
        cls,
        store: WeightStore,
        channels: int,
        reduction: int = 4,
        spatial_kernel: int = 7,
        seed: Optional[int] = None,
    ) -> "RefineNetParams":
        c, b = channels, channels // 4
        hidden = max(1, c // reduction)
        return cls(
            squeeze=store.conv("streamagg.squeeze", c, b, 1, seed=seed),
            body=store.conv("streamagg.body", b, b, 3, padding=1, seed=seed),
            expand=store.conv("streamagg.expand", b, c, 1, seed=seed),
            cbam_mlp=(
                store.linear("streamagg.cbam_mlp.0", c, hidden, Activation.RELU, seed=seed),
                store.linear("streamagg.cbam_mlp.1", hidden, c, seed=seed),
            ),
            spatial_conv=store.conv(
                "streamagg.spatial_conv", 2, 1, spatial_kernel, padding=spatial_kernel // 2, seed=seed
            ),
        )


@dataclass(frozen=True, eq=False)
class AuxHeadParams:
    """Occupied-mask MLP (1 → H → 1) and the forecast decoder."""

    occupied_mlp: Tuple[LinearLayer, LinearLayer]
    forecast: DecoderParams

    @classmethod
    def from_store(
        cls,
        store: WeightStore,
        channels: int,
        occupied_hidden: int,
        upsample_channels: int,
        decoder_hidden: int,
        seed: Optional[int] = None,
    ) -> "AuxHeadParams":
        return cls(
            occupied_mlp=(
                store.linear("streamagg.occ_head.0", 1, occupied_hidden, Activation.RELU, seed=seed),
                store.linear("streamagg.occ_head.1", occupied_hidden, 1, seed=seed),
            ),
            forecast=DecoderParams.from_store(
                store, "streamagg.fore_head", channels, upsample_channels, decoder_hidden, seed=seed
            ),
        )
