"""
Dense voxel feature volume.

Layout is channel-major ``(C, X, Y, Z)`` in C order, 32-bit floats; the
spatial part follows the x-major convention of :mod:`vital_occ_stream.geometry.grid`.
Volumes are immutable: the backing array is flagged read-only on construction
and every operation returns a new volume.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from vital_occ_stream.core.exceptions import ContractViolation

Dims = Tuple[int, int, int]


@dataclass(frozen=True, eq=False)
class VoxelVolume:
    """C channels over an X×Y×Z lattice."""

    data: NDArray[np.float32]

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.data, dtype=np.float32)
        if arr.ndim != 4:
            raise ContractViolation(f"volume data must be (C, X, Y, Z), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ContractViolation(f"volume has an empty axis: {arr.shape}")
        if arr is self.data and arr.flags.writeable:
            arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    # ------------------------------------------------------------------
    # Constructors
    # ------------------------------------------------------------------

    @classmethod
    def zeros(cls, channels: int, dims: Sequence[int]) -> "VoxelVolume":
        return cls(np.zeros((channels, *dims), dtype=np.float32))

    @classmethod
    def full(cls, channels: int, dims: Sequence[int], value: float) -> "VoxelVolume":
        return cls(np.full((channels, *dims), value, dtype=np.float32))

    @classmethod
    def from_cells(cls, values: ArrayLike, dims: Sequence[int]) -> "VoxelVolume":
        """Build from an ``(N, C)`` per-cell array in x-major order."""
        v = np.asarray(values)
        return cls(np.ascontiguousarray(v.T).reshape(v.shape[1], *dims))

    # ------------------------------------------------------------------
    # Accessors
    # ------------------------------------------------------------------

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def dims(self) -> Dims:
        _, x, y, z = self.data.shape
        return (int(x), int(y), int(z))

    @property
    def num_cells(self) -> int:
        x, y, z = self.dims
        return x * y * z

    def cells(self) -> NDArray[np.float32]:
        """Per-cell feature matrix ``(N, C)`` in x-major order (a copy)."""
        return self.data.reshape(self.channels, -1).T.copy()

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.data)))

    def same_shape(self, other: "VoxelVolume") -> bool:
        return self.data.shape == other.data.shape

    def astype64(self) -> NDArray[np.float64]:
        return self.data.astype(np.float64)

    def __repr__(self) -> str:
        return f"VoxelVolume(channels={self.channels}, dims={self.dims})"


def concat_channels(volumes: Sequence[VoxelVolume]) -> VoxelVolume:
    dims = {v.dims for v in volumes}
    if len(dims) != 1:
        raise ContractViolation(f"cannot concatenate volumes with dims {sorted(dims)}")
    return VoxelVolume(np.concatenate([v.data for v in volumes], axis=0))


def add_volumes(a: VoxelVolume, b: VoxelVolume) -> VoxelVolume:
    """Exact elementwise float32 sum."""
    if not a.same_shape(b):
        raise ContractViolation(f"shape mismatch: {a.data.shape} vs {b.data.shape}")
    return VoxelVolume(a.data + b.data)


def expect_channels(vol: VoxelVolume, channels: int, what: str) -> None:
    if vol.channels != channels:
        raise ContractViolation(f"{what}: expected {channels} channels, got {vol.channels}")


def expect_dims(vol: VoxelVolume, dims: Sequence[int], what: str) -> None:
    if tuple(vol.dims) != tuple(dims):
        raise ContractViolation(f"{what}: expected dims {tuple(dims)}, got {vol.dims}")
