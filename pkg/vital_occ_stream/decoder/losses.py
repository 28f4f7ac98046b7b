"""
Evaluable training objectives: semantic cross-entropy for the decoder and the
forecast head, binary cross-entropy for the occupied head.
"""

import logging
from typing import Dict, Optional

import numpy as np
from numpy.typing import NDArray
from scipy.special import log_softmax

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.decoder.models import LossReport, SemanticGrid
from vital_occ_stream.numerics.volume import VoxelVolume
from vital_occ_stream.utils.parallel import map_chunks

logger = logging.getLogger(__name__)

# Balancing weights of the full objective; depth, det and mask terms are not computed
LOSS_WEIGHTS: Dict[str, float] = {
    "depth": 0.05,
    "occ": 10.0,
    "det": 0.2,
    "mask": 1.0,
    "fore": 10.0,
    "bin": 10.0,
}

LOSS_CHUNK = 65536


def cross_entropy(logits: VoxelVolume, gt: SemanticGrid) -> float:
    """Mean per-cell cross-entropy over all classes including empty."""
    if logits.dims != gt.dims:
        raise ContractViolation(f"logit dims {logits.dims} != gt dims {gt.dims}")
    if logits.channels != gt.num_classes + 1:
        raise ContractViolation(f"expected {gt.num_classes + 1} logit channels, got {logits.channels}")
    flat = logits.data.reshape(logits.channels, -1)
    labels = gt.labels.reshape(-1).astype(np.int64)

    def _run(start: int, stop: int) -> float:
        logp = log_softmax(flat[:, start:stop].astype(np.float64), axis=0)
        return float(-logp[labels[start:stop], np.arange(stop - start)].sum())

    total = sum(map_chunks(_run, labels.size, LOSS_CHUNK))
    return total / labels.size


def binary_cross_entropy(logits: VoxelVolume, target: NDArray[np.bool_]) -> float:
    """Mean BCE with logits, ``log(1 + e^x) - y x`` evaluated stably."""
    if logits.channels != 1 or logits.dims != tuple(target.shape):
        raise ContractViolation(f"bin logits {logits.data.shape} do not match target {target.shape}")
    x = logits.data[0].astype(np.float64)
    y = target.astype(np.float64)
    return float(np.mean(np.logaddexp(0.0, x) - y * x))


def losses(
    logits: VoxelVolume,
    forecast_logits: Optional[VoxelVolume],
    bin_logits: Optional[VoxelVolume],
    gt: SemanticGrid,
) -> LossReport:
    occ = cross_entropy(logits, gt)
    fore = cross_entropy(forecast_logits, gt) if forecast_logits is not None else None
    binary = binary_cross_entropy(bin_logits, gt.occupied()) if bin_logits is not None else None
    total = LOSS_WEIGHTS["occ"] * occ
    if fore is not None:
        total += LOSS_WEIGHTS["fore"] * fore
    if binary is not None:
        total += LOSS_WEIGHTS["bin"] * binary
    return LossReport(occ=occ, fore=fore, bin=binary, total=total, weights=dict(LOSS_WEIGHTS))


def mean_losses(reports) -> Optional[LossReport]:
    """Average loss reports over frames.

    Each term is averaged over the frames that report it; the aux terms are
    absent on a cold-start frame.  A term no frame reports stays ``None``.
    """
    reports = list(reports)
    if not reports:
        return None

    def _mean(name: str) -> Optional[float]:
        values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        if not values:
            return None
        return float(np.mean(values))

    return LossReport(
        occ=_mean("occ"),
        fore=_mean("fore"),
        bin=_mean("bin"),
        total=_mean("total"),
        weights=dict(LOSS_WEIGHTS),
    )
