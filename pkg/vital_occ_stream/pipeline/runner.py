"""
The streaming recurrence.

``step`` runs one frame::

    lift → fpn3d → [warp → refine → fuse] → [detect → v2q → select → index → dqa → ffn] → decode

and returns the frame output with the next state.  ``run_sequence`` folds
``step`` over a frame list from the cold-start state and scores every frame.
"""

from __future__ import annotations

import logging
import time
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

from vital_occ_stream.core.config import PipelineConfig
from vital_occ_stream.core.exceptions import ConfigurationError, ContractViolation
from vital_occ_stream.decoder.aggregate import MetricAggregator
from vital_occ_stream.decoder.decode import decode
from vital_occ_stream.decoder.losses import losses
from vital_occ_stream.decoder.models import MetricReport
from vital_occ_stream.geometry.transforms import relative_transform
from vital_occ_stream.numerics.volume import VoxelVolume
from vital_occ_stream.pipeline.models import AuxOutputs, FrameOutput
from vital_occ_stream.pipeline.params import ModelParams
from vital_occ_stream.query.detector import ReplayDetections, detector_source
from vital_occ_stream.query.dqa import dqa, ffn_residual
from vital_occ_stream.query.index import build_voxel_query_index
from vital_occ_stream.query.selection import select_queries
from vital_occ_stream.query.v2q import v2q_deform_attn
from vital_occ_stream.scene.lift import lift_splat
from vital_occ_stream.scene.models import SceneFrame
from vital_occ_stream.stream.fpn import fpn3d
from vital_occ_stream.stream.heads import forecast_head, occupied_head
from vital_occ_stream.stream.models import StreamState
from vital_occ_stream.stream.refine import fuse, refine
from vital_occ_stream.stream.warp import warp_volume

logger = logging.getLogger(__name__)


@contextmanager
def _timed(timings: Dict[str, float], stage: str) -> Iterator[None]:
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[stage] = (time.perf_counter() - start) * 1000.0
        logger.debug(f"   PIPELINE: {stage} {timings[stage]:.2f} ms", extra={"stage": stage})


def initial_state(config: PipelineConfig) -> StreamState:
    return StreamState.cold_start(config.model.channels, config.half_grid)


def _check_frame(state: StreamState, frame: SceneFrame, config: PipelineConfig) -> None:
    if not state.is_cold and frame.timestep != state.timestep + 1:
        raise ContractViolation(
            f"timestep discontinuity: state is at {state.timestep}, frame is {frame.timestep}"
        )
    if frame.spec != config.grid:
        raise ConfigurationError(
            f"frame grid {frame.spec.dims}@{frame.spec.resolution}m does not match the run grid "
            f"{config.grid.dims}@{config.grid.resolution}m",
            block="grid",
        )
    for rig in frame.cameras:
        if rig.feature_image.shape[0] != config.model.init_channels:
            raise ConfigurationError(
                f"camera {rig.name} carries {rig.feature_image.shape[0]} feature channels, "
                f"model expects {config.model.init_channels}",
                block="model",
                field="init_channels",
            )


def step(
    state: StreamState,
    frame: SceneFrame,
    config: PipelineConfig,
    params: ModelParams,
    replay: Optional[ReplayDetections] = None,
) -> Tuple[FrameOutput, StreamState]:
    """Advance the stream by one frame; ``state`` is left untouched."""
    _check_frame(state, frame, config)
    flags = config.flags
    half = config.half_grid
    timings: Dict[str, float] = {}

    with _timed(timings, "lift"):
        v_init = lift_splat(frame, config.grid, config.model.init_channels)
    with _timed(timings, "fpn"):
        v_curr = fpn3d(v_init, params.fpn)

    # StreamAgg; a cold stream has no history, so frame 0 is a single-frame pass
    v_refwarp: Optional[VoxelVolume] = None
    maps = None
    if flags.enable_stream_agg and not state.is_cold:
        with _timed(timings, "warp"):
            motion = relative_transform(state.prev_pose, frame.ego)
            v_warp = warp_volume(state.prev_volume, motion, half, frame.grid_to_ego)
        if flags.enable_refinenet:
            with _timed(timings, "refine"):
                v_refwarp, maps = refine(v_warp, params.refine)
        else:
            v_refwarp = v_warp
        with _timed(timings, "fuse"):
            v_sa = fuse(v_refwarp, v_curr)
    else:
        v_sa = v_curr

    aux = AuxOutputs()
    if flags.enable_aux_heads and v_refwarp is not None:
        with _timed(timings, "aux_heads"):
            aux = AuxOutputs(
                occupied_logits=occupied_head(maps, params.aux, config.grid.dims) if maps is not None else None,
                forecast_logits=forecast_head(v_refwarp, params.aux),
            )

    # QueryAgg
    selected = []
    if flags.enable_query_agg:
        with _timed(timings, "detect"):
            queries = detector_source(frame, state, config.detector, params.detector, replay)
        if flags.enable_v2q:
            with _timed(timings, "v2q"):
                queries = v2q_deform_attn(queries, v_sa, params.deform_attn, half)
        with _timed(timings, "select"):
            selected = select_queries(queries, frame.dynamic_boxes, config.selection.mode, config.selection)
        if flags.enable_dqa:
            with _timed(timings, "index"):
                index = build_voxel_query_index(selected, half)
            with _timed(timings, "dqa"):
                v_dqa = dqa(v_sa, selected, index, params.dqa, half)
        else:
            v_dqa = v_sa
        with _timed(timings, "ffn"):
            v_fin = ffn_residual(v_dqa, params.dqa)
    else:
        v_fin = v_sa

    with _timed(timings, "decode"):
        logits, labels = decode(v_fin, params.decoder, config.grid.dims)

    output = FrameOutput(
        timestep=frame.timestep,
        labels=labels,
        logits=logits,
        aux=aux,
        selected_query_count=len(selected),
        v_fin=v_fin,
        v_sa=v_sa,
        selected_queries=tuple(selected),
        timings_ms=timings,
    )
    next_state = StreamState(
        prev_volume=v_fin,
        prev_pose=frame.ego,
        prev_queries=tuple(selected),
        timestep=frame.timestep,
    )
    logger.debug(
        f"🔁 PIPELINE: frame {frame.timestep} done in {sum(timings.values()):.1f} ms, "
        f"{len(selected)} queries injected",
        extra={"frame": frame.timestep},
    )
    return output, next_state


def run_sequence(
    frames: Sequence[SceneFrame],
    config: PipelineConfig,
    params: ModelParams,
    replay: Optional[ReplayDetections] = None,
) -> Tuple[List[FrameOutput], MetricReport]:
    """Fold ``step`` over ``frames`` from cold start and score every frame."""
    if not frames:
        return [], MetricReport()

    aggregator = MetricAggregator(
        use_mask=config.runtime.use_mask,
        ray_set=config.rayset if config.runtime.rayiou else None,
    )
    state = initial_state(config)
    outputs: List[FrameOutput] = []
    started = time.perf_counter()
    for frame in frames:
        output, state = step(state, frame, config, params, replay)
        loss = losses(
            output.logits,
            output.aux.forecast_logits,
            output.aux.occupied_logits,
            frame.gt_grid,
        )
        aggregator.add_frame(
            frame.timestep,
            output.labels,
            frame.gt_grid,
            frame.spec,
            loss=loss,
            timings_ms=output.timings_ms,
            selected_queries=output.selected_query_count if config.flags.enable_query_agg else None,
        )
        outputs.append(output)

    report = aggregator.report()
    logger.info(
        f"🏁 PIPELINE: {len(frames)} frames in {(time.perf_counter() - started):.2f} s, "
        f"stages={config.flags.stage_count()} miou={report.miou} iou={report.geometry_iou}"
    )
    return outputs, report
