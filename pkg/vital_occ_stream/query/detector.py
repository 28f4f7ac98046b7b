"""
Pluggable instance-query sources.

``oracle_noise`` perturbs the frame's ground-truth dynamic boxes with seeded
Gaussian noise and draws confidences from a truncated normal; ``replay``
reads detections produced elsewhere.  Both build query features as
``class_embed[class] + box_proj(box encoding)``.

Replay file format, one detection per line (``#`` starts a comment)::

    frame_index track_id class_id confidence cx cy cz l w h yaw
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.stats import truncnorm

from vital_occ_stream.core.config import DetectorConfig, DetectorMode
from vital_occ_stream.core.exceptions import ConfigurationError, ContractViolation, InputError
from vital_occ_stream.core.models import NUM_SEMANTIC_CLASSES
from vital_occ_stream.geometry.boxes import Box3D
from vital_occ_stream.query.models import DetectorParams, InstanceQuery, encode_box
from vital_occ_stream.scene.models import SceneFrame
from vital_occ_stream.stream.models import StreamState

logger = logging.getLogger(__name__)

REPLAY_FIELDS = 11
MIN_BOX_EDGE = 0.05


@dataclass(frozen=True)
class Detection:
    """One replayed detection record."""

    frame_index: int
    track_id: int
    class_id: int
    confidence: float
    box: Box3D


@dataclass
class ReplayDetections:
    """Detections grouped by frame index, in file order."""

    path: str
    by_frame: Dict[int, List[Detection]] = field(default_factory=dict)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ReplayDetections":
        path = Path(path)
        if not path.is_file():
            raise InputError("replay detection file not found", path=str(path))
        replay = cls(path=str(path))
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != REPLAY_FIELDS:
                    raise InputError(
                        f"expected {REPLAY_FIELDS} fields, got {len(parts)}", path=str(path), line=lineno
                    )
                try:
                    frame_index, track_id, cls_id = (int(v) for v in parts[:3])
                    values = [float(v) for v in parts[3:]]
                except ValueError as e:
                    raise InputError(f"non-numeric field: {e}", path=str(path), line=lineno) from e
                confidence = values[0]
                if not 0.0 <= confidence <= 1.0:
                    raise InputError(
                        f"confidence {confidence} outside [0, 1]", path=str(path), line=lineno, field="confidence"
                    )
                if not 1 <= cls_id <= NUM_SEMANTIC_CLASSES:
                    raise InputError(
                        f"class id {cls_id} out of range", path=str(path), line=lineno, field="class_id"
                    )
                try:
                    box = Box3D(tuple(values[1:4]), tuple(values[4:7]), values[7])
                except ContractViolation as e:
                    raise InputError(str(e), path=str(path), line=lineno, field="box") from e
                replay.by_frame.setdefault(frame_index, []).append(
                    Detection(frame_index, track_id, cls_id, confidence, box)
                )
        logger.info(
            f"📂 QUERY: Loaded {sum(len(v) for v in replay.by_frame.values())} replay detections "
            f"over {len(replay.by_frame)} frames from {path}"
        )
        return replay


def format_detection(det: Detection) -> str:
    b = det.box
    values = [det.confidence, *b.center, *b.size, b.yaw]
    return f"{det.frame_index} {det.track_id} {det.class_id} " + " ".join(f"{v:.6f}" for v in values)


def query_feature(params: DetectorParams, class_id: int, box: Box3D) -> np.ndarray:
    embed = params.class_embed[class_id].astype(np.float64)
    return (embed + params.box_proj.apply(encode_box(box))).astype(np.float32)


def _confidences(config: DetectorConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    if config.confidence_std == 0.0:
        return np.full(n, config.confidence_mean)
    a = (0.0 - config.confidence_mean) / config.confidence_std
    b = (1.0 - config.confidence_mean) / config.confidence_std
    draws = truncnorm(a, b, loc=config.confidence_mean, scale=config.confidence_std).rvs(
        size=n, random_state=rng
    )
    return np.clip(np.atleast_1d(draws), 0.0, 1.0)


def _oracle_queries(frame: SceneFrame, config: DetectorConfig, params: DetectorParams) -> List[InstanceQuery]:
    gt = sorted(frame.dynamic_boxes, key=lambda d: d.track_id)
    rng = np.random.default_rng([config.seed, frame.timestep])
    n = len(gt)
    center_noise = rng.normal(0.0, 1.0, size=(n, 3)) * config.center_sigma
    size_noise = rng.normal(0.0, 1.0, size=(n, 3)) * config.size_sigma
    yaw_noise = rng.normal(0.0, 1.0, size=n) * config.yaw_sigma
    confidences = _confidences(config, rng, n)

    queries = []
    for i, obj in enumerate(gt):
        box = obj.box
        noisy = Box3D(
            tuple(box.center_array + center_noise[i]),
            tuple(np.maximum(np.asarray(box.size) + size_noise[i], MIN_BOX_EDGE)),
            box.yaw + yaw_noise[i],
        )
        queries.append(
            InstanceQuery(
                feature=query_feature(params, obj.class_id, noisy),
                box=noisy,
                confidence=float(confidences[i]),
                class_id=obj.class_id,
                track_id=obj.track_id,
            )
        )
    return queries


def _replay_queries(
    frame: SceneFrame, replay: Optional[ReplayDetections], params: DetectorParams
) -> List[InstanceQuery]:
    if replay is None:
        raise ConfigurationError("replay detector selected without a detection file", block="detector", field="replay_path")
    return [
        InstanceQuery(
            feature=query_feature(params, det.class_id, det.box),
            box=det.box,
            confidence=det.confidence,
            class_id=det.class_id,
            track_id=det.track_id,
        )
        for det in replay.by_frame.get(frame.timestep, [])
    ]


def cap_queries(queries: Sequence[InstanceQuery], budget: int) -> List[InstanceQuery]:
    """Keep the ``budget`` most confident queries, preserving input order."""
    if len(queries) <= budget:
        return list(queries)
    order = sorted(range(len(queries)), key=lambda i: -queries[i].confidence)
    keep = sorted(order[:budget])
    return [queries[i] for i in keep]


def detector_source(
    frame: SceneFrame,
    state: StreamState,
    config: DetectorConfig,
    params: DetectorParams,
    replay: Optional[ReplayDetections] = None,
) -> List[InstanceQuery]:
    """Instance queries for ``frame``; track ids persist across frames."""
    if config.mode is DetectorMode.ORACLE_NOISE:
        queries = _oracle_queries(frame, config, params)
    else:
        queries = _replay_queries(frame, replay, params)
    queries = cap_queries(queries, config.max_queries)

    carried = {q.track_id for q in state.prev_queries}
    persisted = sum(1 for q in queries if q.track_id in carried)
    logger.debug(
        f"🎯 QUERY: frame {frame.timestep}: {len(queries)} queries from {config.mode.value}, "
        f"{persisted} continuing tracks"
    )
    return queries
