"""
Learned layer containers: dense (per-cell MLP) and 3D convolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.numerics.functional import sigmoid
from vital_occ_stream.utils.parallel import map_chunks

# Cells per chunk when applying an MLP over a volume
CELL_CHUNK = 65536


class Activation(str, Enum):
    NONE = "none"
    RELU = "relu"
    SIGMOID = "sigmoid"


def _frozen(a: ArrayLike, ndim: int, what: str) -> NDArray[np.float32]:
    arr = np.array(a, dtype=np.float32)
    if arr.ndim != ndim:
        raise ContractViolation(f"{what} must have {ndim} dims, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LinearLayer:
    """``y = act(W x + b)`` with ``W`` of shape (out, in)."""

    weights: NDArray[np.float32]
    bias: NDArray[np.float32]
    activation: Activation = Activation.NONE

    def __post_init__(self) -> None:
        w = _frozen(self.weights, 2, "linear weights")
        b = _frozen(self.bias, 1, "linear bias")
        if b.shape[0] != w.shape[0]:
            raise ContractViolation(f"bias length {b.shape[0]} != weight rows {w.shape[0]}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)
        object.__setattr__(self, "activation", Activation(self.activation))

    @classmethod
    def zeros(cls, out_features: int, in_features: int, activation: Activation = Activation.NONE) -> "LinearLayer":
        return cls(np.zeros((out_features, in_features)), np.zeros(out_features), activation)

    @property
    def in_features(self) -> int:
        return int(self.weights.shape[1])

    @property
    def out_features(self) -> int:
        return int(self.weights.shape[0])

    def apply(self, x: ArrayLike) -> NDArray[np.float64]:
        """Apply to ``(..., in)`` inputs with float64 accumulation."""
        x64 = np.asarray(x, dtype=np.float64)
        if x64.shape[-1] != self.in_features:
            raise ContractViolation(
                f"linear layer expects {self.in_features} inputs, got {x64.shape[-1]}"
            )
        y = x64 @ self.weights.astype(np.float64).T + self.bias.astype(np.float64)
        if self.activation is Activation.RELU:
            return np.maximum(y, 0.0)
        if self.activation is Activation.SIGMOID:
            return sigmoid(y)
        return y


def apply_mlp(layers: Sequence[LinearLayer], x: ArrayLike) -> NDArray[np.float64]:
    out = np.asarray(x, dtype=np.float64)
    for layer in layers:
        out = layer.apply(out)
    return out


def apply_mlp_cells(layers: Sequence[LinearLayer], cells: NDArray) -> NDArray[np.float32]:
    """Apply an MLP to an ``(N, C)`` cell matrix in fixed chunks."""
    n = cells.shape[0]
    out_features = layers[-1].out_features if layers else cells.shape[1]
    if n == 0:
        return np.zeros((0, out_features), dtype=np.float32)

    def _run(start: int, stop: int) -> NDArray[np.float32]:
        return apply_mlp(layers, cells[start:stop]).astype(np.float32)

    return np.concatenate(map_chunks(_run, n, CELL_CHUNK), axis=0)


@dataclass(frozen=True, eq=False)
class Conv3dLayer:
    """3D convolution kernel ``(C_out, C_in, k, k, k)`` with stride and zero padding."""

    kernel: NDArray[np.float32]
    bias: NDArray[np.float32]
    stride: int = 1
    padding: int = 0

    def __post_init__(self) -> None:
        k = _frozen(self.kernel, 5, "conv3d kernel")
        b = _frozen(self.bias, 1, "conv3d bias")
        if not (k.shape[2] == k.shape[3] == k.shape[4]):
            raise ContractViolation(f"conv3d kernel must be cubic, got {k.shape[2:]}")
        if b.shape[0] != k.shape[0]:
            raise ContractViolation(f"bias length {b.shape[0]} != C_out {k.shape[0]}")
        if self.stride < 1 or self.padding < 0:
            raise ContractViolation(f"invalid stride/padding {self.stride}/{self.padding}")
        object.__setattr__(self, "kernel", k)
        object.__setattr__(self, "bias", b)

    @classmethod
    def zeros(
        cls, c_out: int, c_in: int, size: int, stride: int = 1, padding: int = 0
    ) -> "Conv3dLayer":
        return cls(np.zeros((c_out, c_in, size, size, size)), np.zeros(c_out), stride, padding)

    @property
    def c_out(self) -> int:
        return int(self.kernel.shape[0])

    @property
    def c_in(self) -> int:
        return int(self.kernel.shape[1])

    @property
    def size(self) -> int:
        return int(self.kernel.shape[2])

    def output_dims(self, dims: Sequence[int]) -> tuple:
        return tuple((d + 2 * self.padding - self.size) // self.stride + 1 for d in dims)
