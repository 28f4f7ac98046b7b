"""
Decoded occupancy grids, decoder parameters and metric report models.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, Field

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.core.models import EMPTY_LABEL, NUM_SEMANTIC_CLASSES
from vital_occ_stream.numerics.layers import Activation, Conv3dLayer, LinearLayer
from vital_occ_stream.numerics.weights import WeightStore


# ---------------------------------------------------------------------------
# Semantic grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SemanticGrid:
    """One class id per cell (0 = empty) plus an optional visibility mask."""

    labels: NDArray[np.uint8]
    num_classes: int = NUM_SEMANTIC_CLASSES
    mask: Optional[NDArray[np.bool_]] = None

    def __post_init__(self) -> None:
        labels = np.ascontiguousarray(self.labels)
        if labels.ndim != 3:
            raise ContractViolation(f"labels must be (X, Y, Z), got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() > self.num_classes):
            raise ContractViolation(f"labels must lie in [0, {self.num_classes}]")
        labels = labels.astype(np.uint8, copy=True)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        if self.mask is not None:
            mask = np.array(self.mask, dtype=bool)
            if mask.shape != labels.shape:
                raise ContractViolation(f"mask shape {mask.shape} != labels shape {labels.shape}")
            mask.setflags(write=False)
            object.__setattr__(self, "mask", mask)

    @classmethod
    def empty(cls, dims: Sequence[int], num_classes: int = NUM_SEMANTIC_CLASSES) -> "SemanticGrid":
        return cls(np.zeros(tuple(dims), dtype=np.uint8), num_classes)

    @property
    def dims(self) -> Tuple[int, int, int]:
        x, y, z = self.labels.shape
        return (int(x), int(y), int(z))

    def occupied(self) -> NDArray[np.bool_]:
        return self.labels != EMPTY_LABEL

    def with_mask(self, mask: Optional[ArrayLike]) -> "SemanticGrid":
        return SemanticGrid(self.labels, self.num_classes, None if mask is None else np.asarray(mask, dtype=bool))

    def equals(self, other: "SemanticGrid") -> bool:
        same_mask = (self.mask is None and other.mask is None) or (
            self.mask is not None and other.mask is not None and np.array_equal(self.mask, other.mask)
        )
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.labels, other.labels)
            and same_mask
        )


# ---------------------------------------------------------------------------
# Decoder parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DecoderParams:
    """Stride-2 deconvolution followed by a per-cell MLP to class logits."""

    deconv: Conv3dLayer
    mlp: Tuple[LinearLayer, ...]

    @property
    def num_logits(self) -> int:
        return self.mlp[-1].out_features

    @classmethod
    def from_store(
        cls,
        store: WeightStore,
        prefix: str,
        channels: int,
        upsample_channels: int,
        hidden: int,
        num_logits: int = NUM_SEMANTIC_CLASSES + 1,
        seed: Optional[int] = None,
    ) -> "DecoderParams":
        deconv = store.conv(f"{prefix}.deconv", channels, upsample_channels, 2, stride=2, seed=seed)
        mlp = (
            store.linear(f"{prefix}.mlp.0", upsample_channels, hidden, Activation.RELU, seed=seed),
            store.linear(f"{prefix}.mlp.1", hidden, num_logits, seed=seed),
        )
        return cls(deconv, mlp)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

class LossReport(BaseModel):
    """Evaluable training objectives; out-of-scope terms stay ``None``."""
    occ: float = Field(..., ge=0, description="Mean cross-entropy of the decoder logits")
    fore: Optional[float] = Field(default=None, description="Mean cross-entropy of the forecast head")
    bin: Optional[float] = Field(default=None, description="Mean binary cross-entropy of the occupied head")
    depth: Optional[float] = Field(default=None, description="Not computed")
    det: Optional[float] = Field(default=None, description="Not computed")
    mask: Optional[float] = Field(default=None, description="Not computed")
    total: float = Field(..., ge=0, description="Weighted sum of occ, fore and bin")
    weights: Dict[str, float] = Field(default_factory=dict, description="Loss weights (depth, det, mask, occ, fore, bin)")


class RayIouReport(BaseModel):
    thresholds: Dict[str, float] = Field(default_factory=dict, description="RayIoU per depth tolerance (m)")
    mean: float = Field(default=0.0, description="Mean over tolerances")
    rays: int = Field(default=0, description="Rays cast per frame")


class FrameMetrics(BaseModel):
    """Per-frame metric row."""
    timestep: int = Field(..., description="Frame timestep")
    miou: Optional[float] = Field(default=None, description="mIoU of this frame")
    geometry_iou: Optional[float] = Field(default=None, description="Class-agnostic IoU of this frame")
    rayiou: Optional[float] = Field(default=None, description="Mean RayIoU of this frame")
    selected_queries: Optional[int] = Field(default=None, description="Queries surviving selection")


class MetricReport(BaseModel):
    """Aggregate metrics over a sequence of frames."""
    frame_count: int = Field(default=0, description="Frames scored")
    per_class_iou: Dict[str, Optional[float]] = Field(default_factory=dict, description="IoU per semantic class")
    miou: Optional[float] = Field(default=None, description="Mean IoU over defined classes")
    miou_dynamic: Optional[float] = Field(default=None, description="Mean IoU over object classes")
    miou_static: Optional[float] = Field(default=None, description="Mean IoU over surface classes")
    geometry_iou: Optional[float] = Field(default=None, description="Class-agnostic occupancy IoU")
    rayiou: Optional[RayIouReport] = Field(default=None, description="Ray-based metric block")
    losses: Optional[LossReport] = Field(default=None, description="Mean losses over frames")
    timings_ms: Dict[str, float] = Field(default_factory=dict, description="Mean per-stage latency (ms)")
    frames: List[FrameMetrics] = Field(default_factory=list, description="Per-frame rows")
