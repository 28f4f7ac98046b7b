"""
Elementwise activations, pooling reductions and softmax.

Reductions accumulate in float64; results that feed volumes are cast back to
float32 by the caller.
"""

from __future__ import annotations

from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import expit

from vital_occ_stream.numerics.volume import VoxelVolume


class PoolKind(str, Enum):
    AVG = "avg"
    MAX = "max"


def sigmoid(x: ArrayLike) -> NDArray[np.float64]:
    return expit(np.asarray(x, dtype=np.float64))


def relu(x: ArrayLike) -> NDArray:
    return np.maximum(x, 0)


def softmax(v: ArrayLike, temperature_divisor: float = 1.0, axis: int = -1) -> NDArray[np.float64]:
    """Max-subtracted softmax of ``v / temperature_divisor`` along ``axis``."""
    if not temperature_divisor > 0:
        raise ValueError(f"temperature_divisor must be > 0, got {temperature_divisor}")
    x = np.asarray(v, dtype=np.float64) / temperature_divisor
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def channel_pool(vol: VoxelVolume, kind: PoolKind | str) -> VoxelVolume:
    """Per-cell reduction across channels → 1-channel volume."""
    kind = PoolKind(kind)
    data = vol.astype64()
    if kind is PoolKind.AVG:
        pooled = np.mean(data, axis=0, keepdims=True)
    else:
        pooled = np.max(data, axis=0, keepdims=True)
    return VoxelVolume(pooled.astype(np.float32))


def spatial_pool(vol: VoxelVolume, kind: PoolKind | str) -> NDArray[np.float64]:
    """Per-channel reduction across all cells → C-vector (float64)."""
    kind = PoolKind(kind)
    flat = vol.astype64().reshape(vol.channels, -1)
    if kind is PoolKind.AVG:
        return np.mean(flat, axis=1)
    return np.max(flat, axis=1)


def channel_standardize(
    cells: ArrayLike,
    scale: ArrayLike,
    shift: ArrayLike,
    eps: float = 1e-5,
) -> NDArray[np.float64]:
    """Per-row standardisation of an ``(N, C)`` matrix with learned affine."""
    x = np.asarray(cells, dtype=np.float64)
    mean = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * np.asarray(scale, dtype=np.float64) + np.asarray(
        shift, dtype=np.float64
    )
