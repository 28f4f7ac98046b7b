"""
Outputs of one streaming step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

from vital_occ_stream.decoder.models import SemanticGrid
from vital_occ_stream.numerics.volume import VoxelVolume
from vital_occ_stream.query.models import InstanceQuery

# Stage names in execution order; timings are reported in this order
STAGES = (
    "lift",
    "fpn",
    "warp",
    "refine",
    "fuse",
    "aux_heads",
    "detect",
    "v2q",
    "select",
    "index",
    "dqa",
    "ffn",
    "decode",
)


@dataclass(frozen=True, eq=False)
class AuxOutputs:
    """Auxiliary head logits at full resolution; ``None`` when the head did not run."""

    occupied_logits: Optional[VoxelVolume] = None
    forecast_logits: Optional[VoxelVolume] = None


@dataclass(frozen=True, eq=False)
class FrameOutput:
    timestep: int
    labels: SemanticGrid
    logits: VoxelVolume
    aux: AuxOutputs
    selected_query_count: int
    v_fin: VoxelVolume
    v_sa: VoxelVolume
    selected_queries: Tuple[InstanceQuery, ...] = ()
    timings_ms: Dict[str, float] = field(default_factory=dict)
