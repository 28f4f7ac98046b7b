"""
Voxel lattice geometry.

Cell ``(i, j, k)`` spans ``min_corner + [i, i+1) × resolution`` along each
axis; its center sits at ``min_corner + (i + 0.5, j + 0.5, k + 0.5) ×
resolution``.  Continuous *cell space* coordinates are ``(p − min_corner) /
resolution``, so cell centers lie at integer + 0.5.

Memory order is x-major: the flat index of cell ``(i, j, k)`` is
``(i * Y + j) * Z + k`` (z varies fastest), matching a C-ordered
``(X, Y, Z)`` array.
"""

from __future__ import annotations

from enum import Enum
from typing import Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from vital_occ_stream.core.exceptions import ContractViolation

EXTENT_TOL = 1e-9


class GridFrame(str, Enum):
    """Frame of reference the lattice is defined in."""
    EGO = "ego"
    LIDAR = "lidar"


class GridSpec(BaseModel):
    """Voxel lattice: cell counts, metric origin, isotropic resolution, frame."""

    model_config = ConfigDict(frozen=True)

    dims: Tuple[int, int, int] = Field(..., description="Cell counts (X, Y, Z)")
    min_corner: Tuple[float, float, float] = Field(..., description="Lower lattice corner in meters")
    resolution: float = Field(..., description="Cell edge length in meters")
    frame: GridFrame = Field(default=GridFrame.EGO, description="Frame the lattice lives in")

    @field_validator("dims")
    @classmethod
    def _check_dims(cls, v: Tuple[int, int, int]) -> Tuple[int, int, int]:
        if any(d < 1 for d in v):
            raise ValueError(f"dims must all be >= 1, got {v}")
        return v

    @field_validator("resolution")
    @classmethod
    def _check_resolution(cls, v: float) -> float:
        if not v > 0:
            raise ValueError(f"resolution must be > 0, got {v}")
        return v

    # ------------------------------------------------------------------
    # Presets and constructors
    # ------------------------------------------------------------------

    @classmethod
    def occ3d(cls) -> "GridSpec":
        """Occ3D-nuScenes lattice: 200×200×16, x,y ∈ [−40, 40], z ∈ [−1, 5.4], 0.4 m, ego frame."""
        return cls.from_bounds((-40.0, -40.0, -1.0), (40.0, 40.0, 5.4), 0.4, GridFrame.EGO)

    @classmethod
    def surroundocc(cls) -> "GridSpec":
        """SurroundOcc lattice: 200×200×16, x,y ∈ [−50, 50], z ∈ [−5, 3], 0.5 m, lidar frame."""
        return cls.from_bounds((-50.0, -50.0, -5.0), (50.0, 50.0, 3.0), 0.5, GridFrame.LIDAR)

    @classmethod
    def from_bounds(
        cls,
        min_corner: ArrayLike,
        max_corner: ArrayLike,
        resolution: float,
        frame: GridFrame = GridFrame.EGO,
    ) -> "GridSpec":
        """Build a spec from metric bounds; the extent must be a whole number of cells."""
        lo = np.asarray(min_corner, dtype=np.float64)
        hi = np.asarray(max_corner, dtype=np.float64)
        counts = np.rint((hi - lo) / resolution).astype(int)
        spec = cls(
            dims=tuple(int(c) for c in counts),
            min_corner=tuple(float(v) for v in lo),
            resolution=float(resolution),
            frame=frame,
        )
        if np.abs(spec.max_corner_array - hi).max() > EXTENT_TOL * max(1.0, float(np.abs(hi).max())):
            raise ContractViolation(
                f"extent {hi - lo} is not a whole number of {resolution} m cells"
            )
        return spec

    # ------------------------------------------------------------------
    # Derived geometry
    # ------------------------------------------------------------------

    @property
    def num_cells(self) -> int:
        x, y, z = self.dims
        return x * y * z

    @property
    def min_corner_array(self) -> NDArray[np.float64]:
        return np.asarray(self.min_corner, dtype=np.float64)

    @property
    def extent(self) -> NDArray[np.float64]:
        return np.asarray(self.dims, dtype=np.float64) * self.resolution

    @property
    def max_corner_array(self) -> NDArray[np.float64]:
        return self.min_corner_array + self.extent

    def half(self) -> "GridSpec":
        """The half-resolution lattice covering the same extent (dims / 2)."""
        if any(d % 2 for d in self.dims):
            raise ContractViolation(f"dims {self.dims} are not divisible by 2")
        return GridSpec(
            dims=tuple(d // 2 for d in self.dims),
            min_corner=self.min_corner,
            resolution=self.resolution * 2.0,
            frame=self.frame,
        )

    def to_cell_space(self, points: ArrayLike) -> NDArray[np.float64]:
        """Metric ``(..., 3)`` points → continuous cell coordinates."""
        return (np.asarray(points, dtype=np.float64) - self.min_corner_array) / self.resolution

    def from_cell_space(self, coords: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(coords, dtype=np.float64) * self.resolution + self.min_corner_array

    def world_to_cell(self, points: ArrayLike) -> NDArray[np.int64]:
        """Metric points → integer cell indices (may be out of range)."""
        return np.floor(self.to_cell_space(points)).astype(np.int64)

    def in_bounds(self, cells: ArrayLike) -> NDArray[np.bool_]:
        c = np.asarray(cells)
        dims = np.asarray(self.dims)
        return np.all((c >= 0) & (c < dims), axis=-1)

    def flat_index(self, cells: ArrayLike) -> NDArray[np.int64]:
        c = np.asarray(cells, dtype=np.int64)
        _, y, z = self.dims
        return (c[..., 0] * y + c[..., 1]) * z + c[..., 2]

    def unflatten(self, flat: ArrayLike) -> NDArray[np.int64]:
        return np.stack(np.unravel_index(np.asarray(flat, dtype=np.int64), self.dims), axis=-1)


def cell_index_centers(dims: Tuple[int, int, int]) -> NDArray[np.float64]:
    """Continuous cell-space centers ``(i+0.5, j+0.5, k+0.5)`` in x-major order."""
    grids = np.meshgrid(*(np.arange(d, dtype=np.float64) + 0.5 for d in dims), indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=-1)


def cell_centers(spec: GridSpec) -> NDArray[np.float64]:
    """Metric centers of every cell, shape ``(X*Y*Z, 3)``, x-major order."""
    return spec.min_corner_array + cell_index_centers(spec.dims) * spec.resolution
