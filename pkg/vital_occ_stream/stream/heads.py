"""
Auxiliary supervision heads: occupied mask from the spatial attention logits
and next-state forecast from the refined warped volume.
"""

from typing import Sequence

from vital_occ_stream.decoder.decode import decode_logits
from vital_occ_stream.numerics.layers import apply_mlp_cells
from vital_occ_stream.numerics.sampling import Padding, resample_volume
from vital_occ_stream.numerics.volume import VoxelVolume
from vital_occ_stream.stream.models import AttentionMaps, AuxHeadParams


def occupied_head(maps: AttentionMaps, params: AuxHeadParams, full_dims: Sequence[int]) -> VoxelVolume:
    """Upsample pre-sigmoid M_s to full resolution, then a per-cell MLP → 1 logit."""
    upsampled = resample_volume(maps.spatial_mask, full_dims, Padding.BORDER)
    logits = apply_mlp_cells(params.occupied_mlp, upsampled.cells())
    return VoxelVolume.from_cells(logits, upsampled.dims)


def forecast_head(v_refwarp: VoxelVolume, params: AuxHeadParams) -> VoxelVolume:
    return decode_logits(v_refwarp, params.forecast)
