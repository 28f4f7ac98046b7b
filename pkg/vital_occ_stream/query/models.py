"""
Instance queries and the learned parameter sets of query-guided aggregation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Protocol, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.core.models import NUM_SEMANTIC_CLASSES
from vital_occ_stream.geometry.boxes import Box3D
from vital_occ_stream.numerics.layers import Activation, LinearLayer
from vital_occ_stream.numerics.weights import WeightStore

# Box parameter vector fed to the detector feature projection
BOX_ENCODING_DIM = 8


class LabeledBox(Protocol):
    """Anything carrying a ground-truth box and its class."""

    box: Box3D
    class_id: int


@dataclass(frozen=True, eq=False)
class InstanceQuery:
    """Feature vector plus oriented box, confidence, class and track identity."""

    feature: NDArray[np.float32]
    box: Box3D
    confidence: float
    class_id: int
    track_id: int

    def __post_init__(self) -> None:
        feat = np.array(self.feature, dtype=np.float32).reshape(-1)
        feat.setflags(write=False)
        object.__setattr__(self, "feature", feat)
        if not 0.0 <= self.confidence <= 1.0:
            raise ContractViolation(f"query confidence must be in [0, 1], got {self.confidence}")

    def with_feature(self, feature: ArrayLike) -> "InstanceQuery":
        return replace(self, feature=np.asarray(feature, dtype=np.float32))


def encode_box(box: Box3D) -> NDArray[np.float64]:
    """``[cx, cy, cz, l, w, h, sin yaw, cos yaw]``."""
    return np.array(
        [*box.center, *box.size, np.sin(box.yaw), np.cos(box.yaw)], dtype=np.float64
    )


def stack_features(queries) -> NDArray[np.float64]:
    if not queries:
        return np.zeros((0, 0), dtype=np.float64)
    return np.stack([q.feature for q in queries]).astype(np.float64)


# ---------------------------------------------------------------------------
# Parameter sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DetectorParams:
    """Class embedding table and box projection used to build query features."""

    class_embed: NDArray[np.float32]
    box_proj: LinearLayer

    @classmethod
    def from_store(cls, store: WeightStore, channels: int, seed: Optional[int] = None) -> "DetectorParams":
        embed = store.ensure("detector.class_embed", "weight", (NUM_SEMANTIC_CLASSES + 1, channels), seed)
        proj = store.linear("detector.box_proj", BOX_ENCODING_DIM, channels, seed=seed)
        return cls(embed, proj)


@dataclass(frozen=True, eq=False)
class DeformAttnParams:
    """Voxel-to-query deformable attention: H heads of O sampling points."""

    heads: int
    points: int
    offset_net: LinearLayer
    weight_net: LinearLayer
    value_proj: NDArray[np.float32]
    output_proj: NDArray[np.float32]

    def __post_init__(self) -> None:
        if self.heads < 1 or self.points < 1:
            raise ContractViolation(f"heads and points must be >= 1, got {self.heads}, {self.points}")
        if self.offset_net.out_features != self.heads * self.points * 3:
            raise ContractViolation("offset_net must emit heads * points * 3 values")
        if self.weight_net.out_features != self.heads * self.points:
            raise ContractViolation("weight_net must emit heads * points values")
        h, dh, c = self.value_proj.shape
        if h != self.heads or self.output_proj.shape != (self.heads, c, dh):
            raise ContractViolation(
                f"value/output projections {self.value_proj.shape}/{self.output_proj.shape} "
                f"inconsistent with {self.heads} heads"
            )

    @property
    def channels(self) -> int:
        return int(self.value_proj.shape[2])

    @classmethod
    def from_store(
        cls, store: WeightStore, channels: int, heads: int, points: int, seed: Optional[int] = None
    ) -> "DeformAttnParams":
        head_dim = max(1, channels // heads)
        return cls(
            heads=heads,
            points=points,
            offset_net=store.linear("queryagg.v2q.offsets", channels, heads * points * 3, seed=seed),
            weight_net=store.linear("queryagg.v2q.attention", channels, heads * points, seed=seed),
            value_proj=store.ensure("queryagg.v2q.value_proj", "weight", (heads, head_dim, channels), seed),
            output_proj=store.ensure("queryagg.v2q.output_proj", "weight", (heads, channels, head_dim), seed),
        )


@dataclass(frozen=True, eq=False)
class DqaParams:
    """Dynamic query aggregation (single head, d = C) and the residual FFN."""

    w_q: LinearLayer
    w_k: LinearLayer
    w_v: LinearLayer
    gate: LinearLayer
    pos_enc: LinearLayer
    ffn: Tuple[LinearLayer, LinearLayer]
    norm_pre: Tuple[NDArray[np.float32], NDArray[np.float32]]
    norm_post: Tuple[NDArray[np.float32], NDArray[np.float32]]
    eps: float = field(default=1e-5)

    def __post_init__(self) -> None:
        c = self.w_q.in_features
        if self.gate.in_features != 2 * c or self.gate.out_features != c:
            raise ContractViolation("gate must map 2C → C")
        if self.gate.activation is not Activation.SIGMOID:
            raise ContractViolation("gate must use a sigmoid activation")
        if self.pos_enc.in_features != 3 or self.pos_enc.out_features != c:
            raise ContractViolation("pos_enc must map 3 → C")
        if self.ffn[0].in_features != c or self.ffn[1].out_features != c:
            raise ContractViolation("ffn must map C → hidden → C")

    @property
    def channels(self) -> int:
        return self.w_q.in_features

    @classmethod
    def from_store(
        cls, store: WeightStore, channels: int, expansion: int = 4, seed: Optional[int] = None
    ) -> "DqaParams":
        c = channels
        hidden = expansion * c
        return cls(
            w_q=store.linear("queryagg.dqa.query", c, c, seed=seed),
            w_k=store.linear("queryagg.dqa.key", c, c, seed=seed),
            w_v=store.linear("queryagg.dqa.value", c, c, seed=seed),
            gate=store.linear("queryagg.dqa.gate", 2 * c, c, Activation.SIGMOID, seed=seed),
            pos_enc=store.linear("queryagg.dqa.pos_enc", 3, c, seed=seed),
            ffn=(
                store.linear("queryagg.ffn.0", c, hidden, Activation.RELU, seed=seed),
                store.linear("queryagg.ffn.1", hidden, c, seed=seed),
            ),
            norm_pre=store.norm("queryagg.ffn.norm_pre", c, seed=seed),
            norm_post=store.norm("queryagg.ffn.norm_post", c, seed=seed),
        )
