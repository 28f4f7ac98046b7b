"""
Voxel IoU / mIoU from confusion matrices.

Per class ``c ≥ 1``: ``IoU_c = TP / (TP + FP + FN)``; classes with no
ground-truth or predicted cells are undefined and left out of every mean.
Confusion counts are additive, so sequence metrics sum the per-frame
matrices before dividing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from numpy.typing import NDArray

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.core.models import DYNAMIC_CLASS_IDS, OCC_CLASS_NAMES, STATIC_CLASS_IDS
from vital_occ_stream.decoder.models import SemanticGrid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class IouResult:
    per_class_iou: NDArray[np.float64]
    miou: Optional[float]
    geometry_iou: Optional[float]
    miou_dynamic: Optional[float]
    miou_static: Optional[float]

    def per_class_dict(self) -> Dict[str, Optional[float]]:
        return {
            OCC_CLASS_NAMES[c]: (None if np.isnan(v) else float(v))
            for c, v in enumerate(self.per_class_iou, start=1)
        }


def _nanmean(values: NDArray[np.float64]) -> Optional[float]:
    defined = values[~np.isnan(values)]
    return float(defined.mean()) if defined.size else None


def evaluation_mask(pred: SemanticGrid, gt: SemanticGrid, use_mask: bool) -> Optional[NDArray[np.bool_]]:
    if not use_mask:
        return None
    if gt.mask is not None:
        return gt.mask
    if pred.mask is not None:
        return pred.mask
    logger.warning("⚠️  METRICS: visibility masking requested but neither grid carries a mask")
    return None


def confusion_matrix(pred: SemanticGrid, gt: SemanticGrid, use_mask: bool = False) -> NDArray[np.int64]:
    """``M[g, p]`` = number of (masked) cells with GT label g and predicted label p."""
    if pred.dims != gt.dims:
        raise ContractViolation(f"grid dims differ: pred {pred.dims} vs gt {gt.dims}")
    k = max(pred.num_classes, gt.num_classes) + 1
    g = gt.labels.astype(np.int64).reshape(-1)
    p = pred.labels.astype(np.int64).reshape(-1)
    mask = evaluation_mask(pred, gt, use_mask)
    if mask is not None:
        keep = mask.reshape(-1)
        g, p = g[keep], p[keep]
    return np.bincount(g * k + p, minlength=k * k).reshape(k, k)


def iou_from_confusion(matrix: NDArray[np.int64]) -> IouResult:
    m = matrix.astype(np.float64)
    tp = np.diag(m)[1:]
    fp = m.sum(axis=0)[1:] - tp
    fn = m.sum(axis=1)[1:] - tp
    denom = tp + fp + fn
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(denom > 0, tp / denom, np.nan)

    geo_tp = m[1:, 1:].sum()
    geo_denom = geo_tp + m[0, 1:].sum() + m[1:, 0].sum()
    geometry = float(geo_tp / geo_denom) if geo_denom > 0 else None

    dynamic = np.array([per_class[c - 1] for c in sorted(DYNAMIC_CLASS_IDS) if c - 1 < per_class.size])
    static = np.array([per_class[c - 1] for c in sorted(STATIC_CLASS_IDS) if c - 1 < per_class.size])
    return IouResult(
        per_class_iou=per_class,
        miou=_nanmean(per_class),
        geometry_iou=geometry,
        miou_dynamic=_nanmean(dynamic),
        miou_static=_nanmean(static),
    )


def iou_miou(pred: SemanticGrid, gt: SemanticGrid, use_mask: bool = False) -> IouResult:
    return iou_from_confusion(confusion_matrix(pred, gt, use_mask))


class ConfusionAccumulator:
    """Sums confusion matrices over frames."""

    def __init__(self) -> None:
        self.matrix: Optional[NDArray[np.int64]] = None
        self.frames = 0

    def add(self, pred: SemanticGrid, gt: SemanticGrid, use_mask: bool = False) -> IouResult:
        frame_matrix = confusion_matrix(pred, gt, use_mask)
        self.matrix = frame_matrix if self.matrix is None else self.matrix + frame_matrix
        self.frames += 1
        return iou_from_confusion(frame_matrix)

    def result(self) -> Optional[IouResult]:
        if self.matrix is None:
            return None
        return iou_from_confusion(self.matrix)
