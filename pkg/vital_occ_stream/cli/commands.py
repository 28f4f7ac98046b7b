"""
CLI commands: scene generation, streaming runs, ablation sweeps, offline
evaluation of dumped grids and the self-check suite.

Commands raise :class:`~vital_occ_stream.core.exceptions.OccStreamError`
subclasses; ``main`` turns them into exit codes.
"""

from __future__ import annotations

import logging
import os
import time
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from vital_occ_stream.cli.report import report_filename, write_report
from vital_occ_stream.core.config import (
    CONFIG_DIR,
    AblationFlags,
    AblationPreset,
    DetectorMode,
    PipelineConfig,
    RaySetConfig,
    get_default_pipeline_config,
    load_pipeline_config,
    load_scene_config,
)
from vital_occ_stream.core.exceptions import ConfigurationError, InputError
from vital_occ_stream.decoder.aggregate import score_grids
from vital_occ_stream.decoder.grid_io import write_grid
from vital_occ_stream.decoder.models import MetricReport
from vital_occ_stream.numerics.weights import WeightStore, manifest_path
from vital_occ_stream.pipeline.params import ModelParams
from vital_occ_stream.pipeline.runner import run_sequence
from vital_occ_stream.query.detector import ReplayDetections
from vital_occ_stream.scene.generator import generate_scene
from vital_occ_stream.scene.io import export_scene, frame_filename, load_scene_dir, read_scene_grids
from vital_occ_stream.scene.models import SceneFrame
from vital_occ_stream.utils.parallel import configure_threads

logger = logging.getLogger(__name__)

DEFAULT_SCENE_CONFIG = CONFIG_DIR / "scene_default.yaml"
SWEEP_PRESETS = (AblationPreset.BASE, AblationPreset.STREAM, AblationPreset.WARP_ONLY, AblationPreset.FULL)


class RunManifest(BaseModel):
    """Everything a run needs, resolved from the command line."""
    config_path: Optional[str] = Field(default=None, description="Run configuration file (default: shipped run_default.yaml)")
    weights_path: Optional[str] = Field(default=None, description="Weight file stem (manifest + blob)")
    random_weights: bool = Field(default=False, description="Seeded untrained weights for missing blocks")
    scene_path: Optional[str] = Field(default=None, description="Scene YAML file or exported scene directory")
    seed: Optional[int] = Field(default=None, description="Scene generation and weight-initialisation seed")
    out_dir: Optional[str] = Field(default=None, description="Directory for reports and grid dumps")
    ablation: Optional[AblationPreset] = Field(default=None, description="Stage preset overriding the config flags")
    detections_path: Optional[str] = Field(default=None, description="Replay detection file (switches the detector to replay)")
    rayiou: bool = Field(default=False, description="Add the RayIoU block")
    use_mask: bool = Field(default=False, description="Score only visible cells")
    dump_grids: bool = Field(default=False, description="Write predicted grids per frame")
    json_output: bool = Field(default=False, description="Emit JSON instead of key-value text")
    timings: bool = Field(default=False, description="Include per-stage latency in the report")
    threads: Optional[int] = Field(default=None, ge=1, description="Worker threads")
    save_weights: Optional[str] = Field(default=None, description="Write the parameters used to this stem")

    def validate_paths(self) -> None:
        """Referenced files must exist and the output directory must be writable."""
        for label, value in (("config", self.config_path), ("scene", self.scene_path), ("detections", self.detections_path)):
            if value is not None and not Path(value).exists():
                raise InputError(f"{label} path does not exist", path=value)
        if self.weights_path is not None:
            manifest = manifest_path(self.weights_path)
            if not manifest.is_file():
                raise ConfigurationError(f"weight manifest not found: {manifest}", block="weights")
        if self.out_dir is not None:
            _ensure_writable(Path(self.out_dir))


def _ensure_writable(directory: Path) -> None:
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise InputError(f"cannot create output directory: {e.strerror or e}", path=str(directory)) from e
    if not os.access(directory, os.W_OK):
        raise InputError("output directory is not writable", path=str(directory))


# ---------------------------------------------------------------------------
# Shared resolution helpers
# ---------------------------------------------------------------------------

def resolve_config(manifest: RunManifest) -> PipelineConfig:
    config = load_pipeline_config(manifest.config_path) if manifest.config_path else get_default_pipeline_config()
    update: Dict[str, object] = {}
    if manifest.ablation is not None:
        update["flags"] = AblationFlags.preset(manifest.ablation)
    runtime = config.runtime.model_copy(
        update={
            "rayiou": manifest.rayiou or config.runtime.rayiou,
            "use_mask": manifest.use_mask or config.runtime.use_mask,
            **({"seed": manifest.seed} if manifest.seed is not None else {}),
            **({"threads": manifest.threads} if manifest.threads is not None else {}),
        }
    )
    update["runtime"] = runtime
    if manifest.detections_path is not None:
        update["detector"] = config.detector.model_copy(
            update={"mode": DetectorMode.REPLAY, "replay_path": manifest.detections_path}
        )
    return config.model_copy(update=update)


def resolve_scene(manifest: RunManifest, default_seed: int) -> List[SceneFrame]:
    seed = default_seed if manifest.seed is None else manifest.seed
    path = Path(manifest.scene_path) if manifest.scene_path else DEFAULT_SCENE_CONFIG
    if path.is_dir():
        _, _, frames = load_scene_dir(path)
        return frames
    return generate_scene(load_scene_config(path), seed)


def resolve_params(manifest: RunManifest, config: PipelineConfig) -> Tuple[ModelParams, WeightStore]:
    if manifest.weights_path is not None:
        store = WeightStore.load(manifest.weights_path)
    elif manifest.random_weights:
        store = WeightStore()
    else:
        raise ConfigurationError(
            "no weight file given; pass --weights <stem> or --random-weights", block="weights"
        )
    seed = config.runtime.seed if manifest.random_weights else None
    return ModelParams.from_store(config, store, seed=seed), store


def resolve_replay(config: PipelineConfig) -> Optional[ReplayDetections]:
    if config.detector.mode is not DetectorMode.REPLAY:
        return None
    if not config.detector.replay_path:
        raise ConfigurationError("replay detector selected without a detection file", block="detector", field="replay_path")
    return ReplayDetections.load(config.detector.replay_path)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_gen_scene(config_path: Optional[str], seed: int, out_dir: str) -> Path:
    """Generate a scene and export it as a scene directory."""
    path = Path(config_path) if config_path else DEFAULT_SCENE_CONFIG
    config = load_scene_config(path)
    _ensure_writable(Path(out_dir))
    frames = generate_scene(config, seed)
    out = export_scene(frames, config, seed, out_dir)
    logger.info(f"✅ CLI: gen-scene wrote {len(frames)} frames to {out}")
    return out


def cmd_run(manifest: RunManifest) -> MetricReport:
    """Run the streaming pipeline over one scene and write its report."""
    manifest.validate_paths()
    config = resolve_config(manifest)
    configure_threads(config.runtime.threads)
    frames = resolve_scene(manifest, config.runtime.seed)
    params, store = resolve_params(manifest, config)
    replay = resolve_replay(config)

    started = time.perf_counter()
    outputs, report = run_sequence(frames, config, params, replay)
    logger.info(f"🏁 CLI: run finished {len(outputs)} frames in {time.perf_counter() - started:.2f} s")

    if manifest.save_weights:
        store.save(manifest.save_weights)
    if manifest.out_dir is not None:
        out = Path(manifest.out_dir)
        write_report(out / report_filename(manifest.json_output), report, manifest.json_output, manifest.timings)
        if manifest.dump_grids:
            for output, frame in zip(outputs, frames):
                write_grid(out / "pred" / frame_filename(output.timestep), output.labels, frame.spec)
        logger.info(f"💾 CLI: report written to {out}")
    return report


def cmd_sweep(manifest: RunManifest) -> Dict[str, MetricReport]:
    """Run the base / stream / warp_only / full presets on the same scene and weights."""
    manifest.validate_paths()
    base_config = resolve_config(manifest.model_copy(update={"ablation": None}))
    configure_threads(base_config.runtime.threads)
    frames = resolve_scene(manifest, base_config.runtime.seed)
    params, store = resolve_params(manifest, base_config)
    replay = resolve_replay(base_config)

    reports: Dict[str, MetricReport] = {}
    for preset in SWEEP_PRESETS:
        config = base_config.model_copy(update={"flags": AblationFlags.preset(preset)})
        _, report = run_sequence(frames, config, params, replay)
        reports[preset.value] = report
        logger.info(
            f"📊 CLI: sweep {preset.value:<9} stages={config.flags.stage_count()} "
            f"miou={report.miou} iou={report.geometry_iou}"
        )
        if manifest.out_dir is not None:
            write_report(
                Path(manifest.out_dir) / report_filename(manifest.json_output, preset.value),
                report,
                manifest.json_output,
                manifest.timings,
            )
    if manifest.save_weights:
        store.save(manifest.save_weights)
    return reports


def cmd_eval(
    pred_dir: str,
    gt_dir: str,
    use_mask: bool = False,
    rayiou: bool = False,
    ray_set: Optional[RaySetConfig] = None,
) -> MetricReport:
    """Score predicted grid dumps against ground-truth dumps frame by frame."""
    preds = read_scene_grids(pred_dir)
    gts = read_scene_grids(gt_dir)
    missing_pred = sorted(set(gts) - set(preds))
    missing_gt = sorted(set(preds) - set(gts))
    if missing_pred or missing_gt:
        raise InputError(
            f"frame sets differ: missing predictions {missing_pred}, missing ground truth {missing_gt}",
            path=pred_dir,
        )
    if not gts:
        raise InputError("no frame_XXXX.grid files found", path=gt_dir)

    pairs = []
    for t in sorted(gts):
        pred, pred_spec = preds[t]
        gt, gt_spec = gts[t]
        if pred_spec != gt_spec:
            raise InputError(f"{frame_filename(t)}: prediction and ground truth grids differ", path=pred_dir)
        pairs.append((t, pred, gt, gt_spec))
    ray_config = (ray_set or get_default_pipeline_config().rayset) if rayiou else None
    report = score_grids(pairs, use_mask=use_mask, ray_set=ray_config)
    logger.info(f"📊 CLI: eval over {report.frame_count} frames: miou={report.miou} iou={report.geometry_iou}")
    return report
