"""
Supplementary query selection.

Inference keeps every query above the confidence threshold.  Training also
requires a ground-truth match: queries are visited by descending confidence
and greedily matched to the unmatched box with the highest bird's-eye-view
IoU.  Large objects then need IoU ≥ the IoU threshold; small objects need
``σ_c · D_center + σ_b · D_size`` below the score threshold.
"""

import logging
from typing import List, Optional, Sequence

import numpy as np

from vital_occ_stream.core.config import SelectionConfig, SelectionMode
from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.geometry.boxes import Box3D, bev_iou
from vital_occ_stream.query.models import InstanceQuery, LabeledBox

logger = logging.getLogger(__name__)


def small_object_score(query_box: Box3D, gt_box: Box3D, sigma_center: float, sigma_size: float) -> float:
    """``σ_c · |Δcenter|₂ + σ_b · |Δsize|₁``."""
    d_center = float(np.linalg.norm(query_box.center_array - gt_box.center_array))
    d_size = float(np.abs(np.asarray(query_box.size) - np.asarray(gt_box.size)).sum())
    return sigma_center * d_center + sigma_size * d_size


def match_queries(
    queries: Sequence[InstanceQuery], gt_boxes: Sequence[LabeledBox]
) -> List[Optional[int]]:
    """Greedy one-to-one BEV-IoU matching by descending confidence."""
    order = sorted(range(len(queries)), key=lambda i: -queries[i].confidence)
    taken = set()
    matches: List[Optional[int]] = [None] * len(queries)
    for i in order:
        best, best_iou = None, 0.0
        for j, gt in enumerate(gt_boxes):
            if j in taken:
                continue
            iou = bev_iou(queries[i].box, gt.box)
            if iou > best_iou:
                best, best_iou = j, iou
        if best is not None:
            taken.add(best)
            matches[i] = best
    return matches


def select_queries(
    queries: Sequence[InstanceQuery],
    gt_boxes: Optional[Sequence[LabeledBox]],
    mode: SelectionMode,
    config: SelectionConfig,
) -> List[InstanceQuery]:
    mode = SelectionMode(mode)
    confident = [q.confidence > config.confidence_threshold for q in queries]
    if mode is SelectionMode.INFER:
        return [q for q, ok in zip(queries, confident) if ok]
    if gt_boxes is None:
        raise ContractViolation("train-mode query selection requires ground-truth boxes")

    candidates = [i for i, ok in enumerate(confident) if ok]
    matches = match_queries([queries[i] for i in candidates], gt_boxes)
    small = config.small_class_ids()

    keep = set()
    for i, match in zip(candidates, matches):
        if match is None:
            continue
        gt = gt_boxes[match]
        if gt.class_id in small:
            score = small_object_score(queries[i].box, gt.box, config.sigma_center, config.sigma_size)
            if score < config.small_score_threshold:
                keep.add(i)
        elif bev_iou(queries[i].box, gt.box) >= config.iou_threshold:
            keep.add(i)

    selected = [q for i, q in enumerate(queries) if i in keep]
    logger.debug(f"✅ QUERY: selected {len(selected)}/{len(queries)} queries ({mode.value})")
    return selected
