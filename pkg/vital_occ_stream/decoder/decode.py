"""
Occupancy decoder: stride-2 deconvolution then a per-cell MLP to class logits.
"""

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from vital_occ_stream.core.models import NUM_SEMANTIC_CLASSES
from vital_occ_stream.decoder.models import DecoderParams, SemanticGrid
from vital_occ_stream.numerics.conv import deconv3d_x2
from vital_occ_stream.numerics.layers import apply_mlp_cells
from vital_occ_stream.numerics.volume import VoxelVolume

logger = logging.getLogger(__name__)


def decode_logits(
    volume: VoxelVolume,
    params: DecoderParams,
    out_dims: Optional[Sequence[int]] = None,
) -> VoxelVolume:
    """Half-resolution features → full-resolution logit volume."""
    upsampled = deconv3d_x2(params.deconv, volume, out_dims)
    logits = apply_mlp_cells(params.mlp, upsampled.cells())
    return VoxelVolume.from_cells(logits, upsampled.dims)


def labels_from_logits(logits: VoxelVolume, num_classes: int = NUM_SEMANTIC_CLASSES) -> SemanticGrid:
    """Per-cell argmax; ties go to the lowest class id."""
    return SemanticGrid(np.argmax(logits.data, axis=0).astype(np.uint8), num_classes)


def decode(
    v_fin: VoxelVolume,
    params: DecoderParams,
    out_dims: Optional[Sequence[int]] = None,
) -> Tuple[VoxelVolume, SemanticGrid]:
    logits = decode_logits(v_fin, params, out_dims)
    labels = labels_from_logits(logits, params.num_logits - 1)
    logger.debug(
        f"🧩 DECODER: decoded {logits.dims} grid, "
        f"{int(np.count_nonzero(labels.labels))} occupied cells"
    )
    return logits, labels
