"""
Sequence-level metric aggregation shared by streaming runs and offline
evaluation of dumped grids.

Aggregate IoU/mIoU come from confusion counts summed over all frames (not
from averaging frame scores); RayIoU likewise sums TP/FP/FN over frames.
"""

from __future__ import annotations

import logging
from typing import Dict, List, Optional, Sequence

from vital_occ_stream.core.config import RaySetConfig
from vital_occ_stream.decoder.losses import mean_losses
from vital_occ_stream.decoder.metrics import ConfusionAccumulator
from vital_occ_stream.decoder.models import FrameMetrics, LossReport, MetricReport, SemanticGrid
from vital_occ_stream.decoder.rayiou import RayCounts, ray_counts
from vital_occ_stream.geometry.grid import GridSpec

logger = logging.getLogger(__name__)


class MetricAggregator:
    """Accumulates per-frame scores and emits a :class:`MetricReport`."""

    def __init__(self, use_mask: bool = False, ray_set: Optional[RaySetConfig] = None):
        self.use_mask = use_mask
        self.ray_set = ray_set
        self._confusion = ConfusionAccumulator()
        self._rays: Optional[RayCounts] = None
        self._losses: List[LossReport] = []
        self._timings: Dict[str, List[float]] = {}
        self._rows: List[FrameMetrics] = []

    def add_frame(
        self,
        timestep: int,
        pred: SemanticGrid,
        gt: SemanticGrid,
        spec: GridSpec,
        loss: Optional[LossReport] = None,
        timings_ms: Optional[Dict[str, float]] = None,
        selected_queries: Optional[int] = None,
    ) -> FrameMetrics:
        frame_iou = self._confusion.add(pred, gt, self.use_mask)
        frame_ray = None
        if self.ray_set is not None:
            counts = ray_counts(pred, gt, spec, self.ray_set.origin, self.ray_set)
            scores = counts.scores()
            if all(s is not None for s in scores):
                frame_ray = float(sum(scores) / len(scores))
            if self._rays is None:
                self._rays = counts
            else:
                self._rays.add(counts)
        if loss is not None:
            self._losses.append(loss)
        for stage, ms in (timings_ms or {}).items():
            self._timings.setdefault(stage, []).append(ms)

        row = FrameMetrics(
            timestep=timestep,
            miou=frame_iou.miou,
            geometry_iou=frame_iou.geometry_iou,
            rayiou=frame_ray,
            selected_queries=selected_queries,
        )
        self._rows.append(row)
        logger.debug(f"📊 METRICS: frame {timestep} miou={row.miou} iou={row.geometry_iou} ray={row.rayiou}")
        return row

    @property
    def frame_count(self) -> int:
        return len(self._rows)

    def report(self) -> MetricReport:
        total = self._confusion.result()
        if total is None:
            return MetricReport()
        return MetricReport(
            frame_count=len(self._rows),
            per_class_iou=total.per_class_dict(),
            miou=total.miou,
            miou_dynamic=total.miou_dynamic,
            miou_static=total.miou_static,
            geometry_iou=total.geometry_iou,
            rayiou=self._rays.report() if self._rays is not None else None,
            losses=mean_losses(self._losses),
            timings_ms={stage: sum(v) / len(v) for stage, v in self._timings.items()},
            frames=list(self._rows),
        )


def score_grids(
    pairs: Sequence[tuple],
    use_mask: bool = False,
    ray_set: Optional[RaySetConfig] = None,
) -> MetricReport:
    """Score ``(timestep, pred, gt, spec)`` tuples in the given order."""
    aggregator = MetricAggregator(use_mask, ray_set)
    for timestep, pred, gt, spec in pairs:
        aggregator.add_frame(timestep, pred, gt, spec)
    return aggregator.report()
