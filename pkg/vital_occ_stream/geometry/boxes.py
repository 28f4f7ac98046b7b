"""
Oriented 3D boxes: containment, bird's-eye-view overlap and ray intersection.

A box has a center, a size ``(l, w, h)`` along its local x/y/z axes and a
yaw about +z.  Containment is inclusive of the faces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.geometry.grid import GridSpec
from vital_occ_stream.geometry.transforms import RigidTransform, rotation_z


@dataclass(frozen=True)
class Box3D:
    """Oriented box; center and size in meters, yaw in radians."""

    center: Tuple[float, float, float]
    size: Tuple[float, float, float]
    yaw: float = 0.0

    def __post_init__(self) -> None:
        center = tuple(float(v) for v in self.center)
        size = tuple(float(v) for v in self.size)
        if len(center) != 3 or len(size) != 3:
            raise ContractViolation(f"box center/size must be 3-vectors, got {center}, {size}")
        if not all(math.isfinite(v) for v in center + size) or not math.isfinite(self.yaw):
            raise ContractViolation("box parameters must be finite")
        if any(s <= 0 for s in size):
            raise ContractViolation(f"box size components must be > 0, got {size}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "yaw", float(self.yaw))

    @property
    def center_array(self) -> NDArray[np.float64]:
        return np.asarray(self.center, dtype=np.float64)

    @property
    def half_size(self) -> NDArray[np.float64]:
        return np.asarray(self.size, dtype=np.float64) / 2.0

    def translated(self, offset: ArrayLike) -> "Box3D":
        return Box3D(tuple(self.center_array + np.asarray(offset, dtype=np.float64)), self.size, self.yaw)

    def transformed(self, transform: RigidTransform) -> "Box3D":
        """Re-express the box in another frame; the frame change must be a pure yaw."""
        heading = math.atan2(transform.rotation[1, 0], transform.rotation[0, 0])
        center = transform.apply(self.center_array)
        return Box3D(tuple(center), self.size, self.yaw + heading)

    def to_local(self, points: ArrayLike) -> NDArray[np.float64]:
        """Points expressed in the box frame (inverse yaw about the center)."""
        p = np.asarray(points, dtype=np.float64) - self.center_array
        return p @ rotation_z(self.yaw)

    def contains(self, points: ArrayLike) -> NDArray[np.bool_]:
        local = self.to_local(points)
        return np.all(np.abs(local) <= self.half_size, axis=-1)

    def footprint(self) -> NDArray[np.float64]:
        """BEV corners ``(4, 2)`` in counter-clockwise order."""
        hl, hw = self.size[0] / 2.0, self.size[1] / 2.0
        local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + self.center_array[:2]

    def aabb(self) -> Tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Axis-aligned bounds ``(lo, hi)`` enclosing the box."""
        fp = self.footprint()
        lo = np.array([fp[:, 0].min(), fp[:, 1].min(), self.center[2] - self.size[2] / 2.0])
        hi = np.array([fp[:, 0].max(), fp[:, 1].max(), self.center[2] + self.size[2] / 2.0])
        return lo, hi


# ---------------------------------------------------------------------------
# Polygon overlap
# ---------------------------------------------------------------------------

def polygon_area(poly: NDArray[np.float64]) -> float:
    """Shoelace area of a simple polygon given as ``(n, 2)`` vertices."""
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def clip_polygon(subject: NDArray[np.float64], clipper: NDArray[np.float64]) -> NDArray[np.float64]:
    """Sutherland–Hodgman clip of ``subject`` by the convex CCW polygon ``clipper``."""
    output = [tuple(p) for p in subject]
    n = len(clipper)
    for i in range(n):
        if not output:
            break
        a, b = clipper[i], clipper[(i + 1) % n]
        edge = b - a

        def inside(p: Tuple[float, float]) -> bool:
            return edge[0] * (p[1] - a[1]) - edge[1] * (p[0] - a[0]) >= 0.0

        def intersect(p: Tuple[float, float], q: Tuple[float, float]) -> Tuple[float, float]:
            d = (q[0] - p[0], q[1] - p[1])
            denom = edge[0] * d[1] - edge[1] * d[0]
            if denom == 0.0:
                return q
            t = (edge[1] * (p[0] - a[0]) - edge[0] * (p[1] - a[1])) / denom
            return (p[0] + t * d[0], p[1] + t * d[1])

        inputs, output = output, []
        prev = inputs[-1]
        for curr in inputs:
            if inside(curr):
                if not inside(prev):
                    output.append(intersect(prev, curr))
                output.append(curr)
            elif inside(prev):
                output.append(intersect(prev, curr))
            prev = curr
    return np.asarray(output, dtype=np.float64).reshape(-1, 2)


def bev_iou(a: Box3D, b: Box3D) -> float:
    """Intersection-over-union of the two boxes' bird's-eye-view footprints."""
    fa, fb = a.footprint(), b.footprint()
    inter = polygon_area(clip_polygon(fa, fb))
    union = a.size[0] * a.size[1] + b.size[0] * b.size[1] - inter
    if union <= 0.0:
        return 0.0
    return float(min(max(inter / union, 0.0), 1.0))


# ---------------------------------------------------------------------------
# Ray intersection
# ---------------------------------------------------------------------------

def ray_box_entry(
    box: Box3D, origin: ArrayLike, directions: ArrayLike
) -> NDArray[np.float64]:
    """
    Slab test of rays ``origin + s * d`` against the box.

    Returns the entry parameter ``s`` per ray, ``inf`` for misses and for rays
    starting inside the box.
    """
    o = box.to_local(np.asarray(origin, dtype=np.float64)[None, :])[0]
    d = np.asarray(directions, dtype=np.float64) @ rotation_z(box.yaw)
    half = box.half_size

    t_near = np.full(d.shape[0], -np.inf)
    t_far = np.full(d.shape[0], np.inf)
    for axis in range(3):
        da = d[:, axis]
        parallel = da == 0.0
        outside_slab = abs(o[axis]) > half[axis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-half[axis] - o[axis]) / da
            t2 = (half[axis] - o[axis]) / da
        lo = np.where(parallel, -np.inf, np.minimum(t1, t2))
        hi = np.where(parallel, np.inf if not outside_slab else -np.inf, np.maximum(t1, t2))
        t_near = np.maximum(t_near, lo)
        t_far = np.minimum(t_far, hi)
    hit = (t_near <= t_far) & (t_near > 0.0)
    return np.where(hit, t_near, np.inf)


# ---------------------------------------------------------------------------
# Lattice rasterisation
# ---------------------------------------------------------------------------

def box_cells(box: Box3D, spec: GridSpec) -> NDArray[np.int64]:
    """Flat ids of every cell whose center lies inside ``box``, ascending."""
    lo, hi = box.aabb()
    m = spec.min_corner_array
    res = spec.resolution
    dims = np.asarray(spec.dims)
    first = np.maximum(np.ceil((lo - m) / res - 0.5).astype(np.int64) - 1, 0)
    last = np.minimum(np.floor((hi - m) / res - 0.5).astype(np.int64) + 1, dims - 1)
    if np.any(last < first):
        return np.zeros(0, dtype=np.int64)
    axes = [np.arange(first[a], last[a] + 1, dtype=np.int64) for a in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    centers = m + (grid.astype(np.float64) + 0.5) * res
    inside = box.contains(centers)
    return np.sort(spec.flat_index(grid[inside]))
