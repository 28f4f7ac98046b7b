"""
RayIoU: first-hit depth and class agreement along a fixed angular ray set.

Rays leave a common origin over a uniform azimuth × elevation lattice.  Each
ray is traversed cell by cell (Amanatides–Woo) through the predicted and the
ground-truth grids.  At tolerance τ a ray whose ground truth hits class ``g``
is a true positive when the prediction hits ``g`` within τ meters of the
ground-truth depth; otherwise it is a false negative for ``g`` and, if the
prediction hit something, a false positive for that class.  Rays with no
ground-truth hit but a predicted hit are false positives.

This reconstructs the metric from its definition on an angular lattice; it
is not numerically equivalent to benchmark tooling built on lidar rays.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from vital_occ_stream.core.config import RaySetConfig
from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.decoder.models import RayIouReport, SemanticGrid
from vital_occ_stream.geometry.grid import GridSpec
from vital_occ_stream.utils.parallel import map_chunks

logger = logging.getLogger(__name__)

RAY_CHUNK = 8192


def ray_directions(ray_set: RaySetConfig) -> NDArray[np.float64]:
    """Unit directions ``(E * A, 3)``, elevation-major."""
    if ray_set.elevation_count == 1:
        elevations = np.array([math.radians(ray_set.elevation_min_deg)])
    else:
        elevations = np.radians(
            np.linspace(ray_set.elevation_min_deg, ray_set.elevation_max_deg, ray_set.elevation_count)
        )
    azimuths = math.radians(ray_set.azimuth_offset_deg) + 2.0 * math.pi * np.arange(
        ray_set.azimuth_count
    ) / ray_set.azimuth_count
    el, az = np.meshgrid(elevations, azimuths, indexing="ij")
    dirs = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)
    return dirs.reshape(-1, 3)


@dataclass(frozen=True)
class RayHits:
    """First occupied cell per ray; ``flat == -1`` for misses. Distances in cell units."""

    flat: NDArray[np.int64]
    t_entry: NDArray[np.float64]
    t_exit: NDArray[np.float64]


def _traverse_block(
    occupied: NDArray[np.bool_], origin: NDArray[np.float64], dirs: NDArray[np.float64]
) -> RayHits:
    dims = np.asarray(occupied.shape, dtype=np.int64)
    n = dirs.shape[0]
    cell = np.broadcast_to(np.floor(origin).astype(np.int64), (n, 3)).copy()
    step = np.sign(dirs).astype(np.int64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(dirs != 0.0, 1.0 / dirs, np.inf)
        boundary = cell + (step > 0)
        t_max = np.where(dirs != 0.0, (boundary - origin) * inv, np.inf)
    t_delta = np.abs(inv)

    flat = np.full(n, -1, dtype=np.int64)
    t_entry = np.full(n, np.inf)
    t_exit = np.full(n, np.inf)
    t_current = np.zeros(n)
    active = np.all((cell >= 0) & (cell < dims), axis=1)
    rows = np.arange(n)

    for _ in range(int(dims.sum()) + 3):
        if not np.any(active):
            break
        idx = rows[active]
        c = cell[idx]
        hit = occupied[c[:, 0], c[:, 1], c[:, 2]]
        if np.any(hit):
            h = idx[hit]
            flat[h] = (cell[h, 0] * dims[1] + cell[h, 1]) * dims[2] + cell[h, 2]
            t_entry[h] = t_current[h]
            t_exit[h] = t_max[h].min(axis=1)
            active[h] = False
            idx = idx[~hit]
        if idx.size == 0:
            continue
        axis = np.argmin(t_max[idx], axis=1)
        t_current[idx] = t_max[idx, axis]
        cell[idx, axis] += step[idx, axis]
        t_max[idx, axis] += t_delta[idx, axis]
        inside = np.all((cell[idx] >= 0) & (cell[idx] < dims), axis=1)
        active[idx[~inside]] = False
    return RayHits(flat, t_entry, t_exit)


def first_hits(
    grid: SemanticGrid, origin_cells: ArrayLike, directions: ArrayLike
) -> RayHits:
    """Cast rays from a cell-space origin; directions need not be normalised."""
    occupied = grid.occupied()
    origin = np.asarray(origin_cells, dtype=np.float64)
    dirs = np.asarray(directions, dtype=np.float64)
    if np.any(origin < 0) or np.any(origin >= np.asarray(grid.dims)):
        raise ContractViolation(f"ray origin {origin.tolist()} lies outside the grid")
    parts = map_chunks(
        lambda s, e: _traverse_block(occupied, origin, dirs[s:e]), dirs.shape[0], RAY_CHUNK
    )
    if not parts:
        empty = np.zeros(0)
        return RayHits(np.zeros(0, dtype=np.int64), empty, empty)
    return RayHits(
        np.concatenate([p.flat for p in parts]),
        np.concatenate([p.t_entry for p in parts]),
        np.concatenate([p.t_exit for p in parts]),
    )


@dataclass
class RayCounts:
    """Per-class TP/FP/FN per tolerance, additive over frames."""

    thresholds: List[float]
    num_classes: int
    tp: NDArray[np.int64] = field(init=False)
    fp: NDArray[np.int64] = field(init=False)
    fn: NDArray[np.int64] = field(init=False)
    rays: int = 0

    def __post_init__(self) -> None:
        shape = (len(self.thresholds), self.num_classes + 1)
        self.tp = np.zeros(shape, dtype=np.int64)
        self.fp = np.zeros(shape, dtype=np.int64)
        self.fn = np.zeros(shape, dtype=np.int64)

    def add(self, other: "RayCounts") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn
        self.rays = max(self.rays, other.rays)

    def scores(self) -> List[Optional[float]]:
        out: List[Optional[float]] = []
        for k in range(len(self.thresholds)):
            tp, fp, fn = self.tp[k, 1:], self.fp[k, 1:], self.fn[k, 1:]
            denom = tp + fp + fn
            defined = denom > 0
            out.append(float(np.mean(tp[defined] / denom[defined])) if np.any(defined) else None)
        return out

    def report(self) -> Optional[RayIouReport]:
        scores = self.scores()
        if any(s is None for s in scores):
            return None
        return RayIouReport(
            thresholds={_threshold_key(t): s for t, s in zip(self.thresholds, scores)},
            mean=float(np.mean(scores)),
            rays=self.rays,
        )


def _threshold_key(t: float) -> str:
    return f"{t:g}"


def ray_counts(
    pred: SemanticGrid,
    gt: SemanticGrid,
    spec: GridSpec,
    origin: Sequence[float],
    ray_set: RaySetConfig,
) -> RayCounts:
    if pred.dims != gt.dims or tuple(gt.dims) != tuple(spec.dims):
        raise ContractViolation(f"rayiou dims differ: pred {pred.dims}, gt {gt.dims}, spec {spec.dims}")
    origin_cells = spec.to_cell_space(np.asarray(origin, dtype=np.float64))
    dirs = ray_directions(ray_set)
    gt_hits = first_hits(gt, origin_cells, dirs)
    pred_hits = first_hits(pred, origin_cells, dirs)

    gt_cls = np.where(gt_hits.flat >= 0, gt.labels.reshape(-1)[np.maximum(gt_hits.flat, 0)], 0).astype(np.int64)
    pred_cls = np.where(pred_hits.flat >= 0, pred.labels.reshape(-1)[np.maximum(pred_hits.flat, 0)], 0).astype(
        np.int64
    )
    # rays that miss in either grid never match
    both = (gt_hits.flat >= 0) & (pred_hits.flat >= 0)
    gap = np.full(dirs.shape[0], np.inf)
    gap[both] = np.abs(pred_hits.t_entry[both] - gt_hits.t_entry[both]) * spec.resolution

    counts = RayCounts(list(ray_set.thresholds), max(pred.num_classes, gt.num_classes))
    counts.rays = int(dirs.shape[0])
    k = counts.num_classes + 1
    for i, tau in enumerate(ray_set.thresholds):
        match = (gt_cls > 0) & (pred_cls == gt_cls) & (gap <= tau)
        missed = (gt_cls > 0) & ~match
        false_pos = (pred_cls > 0) & ~match
        counts.tp[i] = np.bincount(gt_cls[match], minlength=k)
        counts.fn[i] = np.bincount(gt_cls[missed], minlength=k)
        counts.fp[i] = np.bincount(pred_cls[false_pos], minlength=k)
    return counts


def rayiou(
    pred: SemanticGrid,
    gt: SemanticGrid,
    spec: GridSpec,
    origin: Sequence[float],
    ray_set: RaySetConfig,
) -> Dict[str, Optional[float]]:
    """RayIoU per tolerance (keys ``"1"``, ``"2"``, ``"4"``) plus ``"mean"``."""
    counts = ray_counts(pred, gt, spec, origin, ray_set)
    scores = counts.scores()
    result: Dict[str, Optional[float]] = {
        _threshold_key(t): s for t, s in zip(ray_set.thresholds, scores)
    }
    defined = [s for s in scores if s is not None]
    result["mean"] = float(np.mean(defined)) if len(defined) == len(scores) else None
    logger.debug(f"📡 METRICS: rayiou over {counts.rays} rays: {result}")
    return result
