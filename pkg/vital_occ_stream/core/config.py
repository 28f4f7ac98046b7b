"""
Run and scene configuration for the occupancy stream engine.

Configuration comes from YAML files only; the command line picks the file
and may override a handful of fields (seed, thread count, ablation preset).
Top-level section names may be dotted (``dynamic.0``, ``camera.front``);
:func:`parse_section_tree` folds them into nested sections before pydantic
validation.
"""

import logging
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from vital_occ_stream.core.exceptions import ConfigurationError, InputError
from vital_occ_stream.core.models import (
    CLASS_IDS,
    LARGE_OBJECT_CLASSES,
    SMALL_OBJECT_CLASSES,
)
from vital_occ_stream.geometry.grid import GridSpec
from vital_occ_stream.scene.config import SceneConfig
from vital_occ_stream.utils.section_parser import SECTION_KEY, coerce_dict, ordered_sections, parse_section_tree

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CONFIG_DIR = Path(__file__).resolve().parents[2] / "config"
DEFAULT_RUN_CONFIG = "run_default.yaml"


# ---------------------------------------------------------------------------
# Pydantic models
# ---------------------------------------------------------------------------

class ModelDimsConfig(BaseModel):
    """Channel widths of every learned stage."""
    channels: int = Field(default=64, ge=4, description="Voxel feature channels C of V_curr/V_SA/V_fin")
    init_channels: int = Field(default=16, ge=1, description="Lifted feature channels C_init of V_init")
    fpn_level1_channels: int = Field(default=32, ge=1, description="Channels of the half-resolution FPN level")
    fpn_level2_channels: int = Field(default=64, ge=1, description="Channels of the quarter-resolution FPN level")
    cbam_reduction: int = Field(default=4, ge=1, description="Channel-attention MLP reduction ratio r")
    spatial_kernel: int = Field(default=7, ge=1, description="Spatial-attention kernel size (odd)")
    decoder_upsample_channels: int = Field(default=32, ge=1, description="Channels after the decoder deconvolution")
    decoder_hidden: int = Field(default=32, ge=1, description="Hidden width of the decoder MLP")
    occupied_hidden: int = Field(default=16, ge=1, description="Hidden width of the occupied-mask MLP")
    ffn_expansion: int = Field(default=4, ge=1, description="FFN hidden width multiplier")

    @field_validator("channels")
    @classmethod
    def _check_channels(cls, v: int) -> int:
        if v % 4:
            raise ValueError(f"channels must be divisible by 4, got {v}")
        return v

    @field_validator("spatial_kernel")
    @classmethod
    def _check_kernel(cls, v: int) -> int:
        if v % 2 == 0:
            raise ValueError(f"spatial_kernel must be odd, got {v}")
        return v


class DetectorMode(str, Enum):
    ORACLE_NOISE = "oracle_noise"
    REPLAY = "replay"


class DetectorConfig(BaseModel):
    """Instance-query source standing in for the image-to-query detector."""
    mode: DetectorMode = Field(default=DetectorMode.ORACLE_NOISE, description="Query source")
    max_queries: int = Field(default=900, ge=1, description="Query budget per frame")
    center_sigma: float = Field(default=0.3, ge=0, description="Center noise std (m)")
    size_sigma: float = Field(default=0.1, ge=0, description="Size noise std (m)")
    yaw_sigma: float = Field(default=0.1, ge=0, description="Yaw noise std (rad)")
    confidence_mean: float = Field(default=0.8, ge=0, le=1, description="Mean of the truncated confidence distribution")
    confidence_std: float = Field(default=0.15, ge=0, description="Std of the confidence distribution (0 = constant)")
    seed: int = Field(default=0, description="Detector noise seed")
    replay_path: Optional[str] = Field(default=None, description="Detection file for replay mode")


class SelectionMode(str, Enum):
    TRAIN = "train"
    INFER = "infer"


class SelectionConfig(BaseModel):
    """Supplementary query selection thresholds."""
    mode: SelectionMode = Field(default=SelectionMode.INFER, description="train uses GT matching, infer confidence only")
    confidence_threshold: float = Field(default=0.3, gt=0, description="Minimum confidence (exclusive)")
    iou_threshold: float = Field(default=0.4, gt=0, description="BEV IoU required for large objects")
    small_score_threshold: float = Field(default=1.5, gt=0, description="Upper bound on the small-object match score")
    sigma_center: float = Field(default=2.0, gt=0, description="Weight of the center distance term")
    sigma_size: float = Field(default=1.0, gt=0, description="Weight of the L1 size deviation term")
    large_classes: List[str] = Field(default_factory=lambda: sorted(LARGE_OBJECT_CLASSES), description="Classes judged by IoU")
    small_classes: List[str] = Field(default_factory=lambda: sorted(SMALL_OBJECT_CLASSES), description="Classes judged by distance score")

    @field_validator("large_classes", "small_classes")
    @classmethod
    def _check_classes(cls, v: List[str]) -> List[str]:
        unknown = [name for name in v if name not in CLASS_IDS]
        if unknown:
            raise ValueError(f"unknown classes {unknown}")
        return v

    @model_validator(mode="after")
    def _check_disjoint(self) -> "SelectionConfig":
        both = set(self.large_classes) & set(self.small_classes)
        if both:
            raise ValueError(f"classes listed as both large and small: {sorted(both)}")
        return self

    def small_class_ids(self) -> frozenset:
        return frozenset(CLASS_IDS[name] for name in self.small_classes)


class DeformAttnConfig(BaseModel):
    heads: int = Field(default=8, ge=1, description="Attention heads H")
    points: int = Field(default=4, ge=1, description="Sampling points per head O")


class AblationPreset(str, Enum):
    BASE = "base"
    STREAM = "stream"
    FULL = "full"
    WARP_ONLY = "warp_only"


class AblationFlags(BaseModel):
    """Stage toggles; presets mirror the base / stream / full ablation rows."""
    enable_stream_agg: bool = Field(default=True, description="Run StreamAgg (warp, refine, fuse)")
    enable_refinenet: bool = Field(default=True, description="Refine the warped volume before fusion")
    enable_query_agg: bool = Field(default=True, description="Run QueryAgg (detector, V2Q, selection, DQA, FFN)")
    enable_v2q: bool = Field(default=True, description="Update queries from voxel features before DQA")
    enable_dqa: bool = Field(default=True, description="Inject query features into voxels")
    enable_aux_heads: bool = Field(default=True, description="Evaluate occupied-mask and forecast heads")

    @classmethod
    def preset(cls, name: Union[str, AblationPreset]) -> "AblationFlags":
        name = AblationPreset(name)
        if name is AblationPreset.BASE:
            return cls(enable_stream_agg=False, enable_query_agg=False)
        if name is AblationPreset.STREAM:
            return cls(enable_query_agg=False)
        if name is AblationPreset.WARP_ONLY:
            return cls(enable_refinenet=False, enable_query_agg=False)
        return cls()

    def stage_count(self) -> int:
        """Number of wired aggregation stages."""
        stream = 0
        if self.enable_stream_agg:
            stream = 3 if self.enable_refinenet else 2
        query = 0
        if self.enable_query_agg:
            query = 4 + int(self.enable_v2q) + int(self.enable_dqa)
        return stream + query


class RaySetConfig(BaseModel):
    """Angular ray lattice for RayIoU."""
    azimuth_count: int = Field(default=900, ge=1, description="Rays per elevation row")
    elevation_count: int = Field(default=32, ge=1, description="Elevation rows")
    elevation_min_deg: float = Field(default=-30.0, description="Lowest elevation (deg)")
    elevation_max_deg: float = Field(default=10.0, description="Highest elevation (deg)")
    azimuth_offset_deg: float = Field(default=0.0, description="Azimuth of the first ray (deg)")
    origin: Tuple[float, float, float] = Field(default=(0.0, 0.0, 0.0), description="Ray origin in the grid frame (m)")
    thresholds: List[float] = Field(default_factory=lambda: [1.0, 2.0, 4.0], description="Depth tolerances (m)")

    @model_validator(mode="after")
    def _check_range(self) -> "RaySetConfig":
        if self.elevation_max_deg < self.elevation_min_deg:
            raise ValueError("elevation_max_deg must be >= elevation_min_deg")
        if not self.thresholds or any(t <= 0 for t in self.thresholds):
            raise ValueError("thresholds must be a non-empty list of positive distances")
        return self


class RuntimeConfig(BaseModel):
    seed: int = Field(default=0, description="Seed for untrained-weights initialisation")
    threads: int = Field(default=1, ge=1, description="Worker threads for data-parallel stages")
    use_mask: bool = Field(default=False, description="Apply visibility masks when scoring")
    rayiou: bool = Field(default=False, description="Compute RayIoU during runs")


class PipelineConfig(BaseModel):
    """Complete run configuration."""
    grid: GridSpec = Field(default_factory=GridSpec.occ3d, description="Full-resolution output lattice")
    model: ModelDimsConfig = Field(default_factory=ModelDimsConfig, description="Channel widths")
    detector: DetectorConfig = Field(default_factory=DetectorConfig, description="Query source")
    selection: SelectionConfig = Field(default_factory=SelectionConfig, description="Query selection")
    deform_attn: DeformAttnConfig = Field(default_factory=DeformAttnConfig, description="Voxel-to-query attention")
    flags: AblationFlags = Field(default_factory=AblationFlags, description="Stage toggles")
    rayset: RaySetConfig = Field(default_factory=RaySetConfig, description="RayIoU ray lattice")
    runtime: RuntimeConfig = Field(default_factory=RuntimeConfig, description="Seeds and threading")

    @model_validator(mode="after")
    def _check_grid(self) -> "PipelineConfig":
        if any(d % 4 for d in self.grid.dims):
            raise ValueError(f"grid dims {self.grid.dims} must be divisible by 4")
        return self

    @property
    def half_grid(self) -> GridSpec:
        return self.grid.half()


# ---------------------------------------------------------------------------
# Loading helpers
# ---------------------------------------------------------------------------

def _read_yaml(path: Path) -> Dict[str, Any]:
    if not path.is_file():
        raise FileNotFoundError(path)
    with open(path, "r", encoding="utf-8") as fh:
        document = yaml.safe_load(fh)
    if document is None:
        return {}
    if not isinstance(document, dict):
        raise ValueError(f"{path}: top level must be a mapping of sections")
    return document


def _prepare_grid(section: Any) -> Any:
    """Expand ``{preset: occ3d|surroundocc}`` into a GridSpec."""
    if isinstance(section, str):
        section = {"preset": section}
    if isinstance(section, dict) and "preset" in section:
        preset = str(section["preset"]).lower()
        if preset == "occ3d":
            return GridSpec.occ3d()
        if preset == "surroundocc":
            return GridSpec.surroundocc()
        raise ValueError(f"unknown grid preset '{preset}'")
    return section


def _error_field(exc: ValidationError) -> str:
    first = exc.errors()[0]
    return ".".join(str(part) for part in first.get("loc", ()))


# ---------------------------------------------------------------------------
# Public loaders
# ---------------------------------------------------------------------------

def pipeline_config_from_dict(document: Dict[str, Any]) -> PipelineConfig:
    tree = coerce_dict(parse_section_tree(document))
    try:
        if "grid" in tree:
            tree["grid"] = _prepare_grid(tree["grid"])
        return PipelineConfig(**tree)
    except ValidationError as e:
        field = _error_field(e)
        raise ConfigurationError(
            f"invalid run configuration at '{field}': {e.errors()[0]['msg']}",
            block=field.split(".")[0] if field else None,
            field=field,
        ) from e
    except ValueError as e:
        raise ConfigurationError(f"invalid run configuration: {e}", block="grid") from e


def load_pipeline_config(path: PathLike) -> PipelineConfig:
    """Load and validate a run configuration file."""
    path = Path(path)
    try:
        document = _read_yaml(path)
    except FileNotFoundError as e:
        raise ConfigurationError(f"run configuration not found: {path}") from e
    except (yaml.YAMLError, ValueError) as e:
        raise ConfigurationError(f"cannot parse run configuration {path}: {e}") from e
    config = pipeline_config_from_dict(document)
    logger.info(
        f"📋 CONFIG: Loaded run config {path.name}: grid={config.grid.dims}@{config.grid.resolution}m "
        f"frame={config.grid.frame.value}, C={config.model.channels}, "
        f"detector={config.detector.mode.value}, stages={config.flags.stage_count()}"
    )
    return config


def scene_config_from_dict(document: Dict[str, Any], source: Optional[str] = None) -> SceneConfig:
    tree = coerce_dict(parse_section_tree(document))
    try:
        if "grid" in tree:
            tree["grid"] = _prepare_grid(tree["grid"])
        dynamic = []
        for idx, fields in enumerate(ordered_sections(tree, "dynamic")):
            fields.pop(SECTION_KEY, None)
            fields.setdefault("track_id", idx)
            dynamic.append(fields)
        cameras = []
        for fields in ordered_sections(tree, "camera"):
            key = fields.pop(SECTION_KEY, "")
            fields.setdefault("name", f"camera.{key}" if key else f"camera.{len(cameras)}")
            cameras.append(fields)
        tree.pop("camera", None)
        tree["dynamic"] = dynamic
        tree["cameras"] = cameras + list(tree.get("cameras", []))
        return SceneConfig(**tree)
    except ValidationError as e:
        field = _error_field(e)
        raise InputError(
            f"invalid scene field '{field}': {e.errors()[0]['msg']}", path=source, field=field
        ) from e
    except ValueError as e:
        raise InputError(f"invalid scene configuration: {e}", path=source, field="grid") from e


def load_scene_config(path: PathLike) -> SceneConfig:
    """Load and validate a scene description file."""
    path = Path(path)
    try:
        document = _read_yaml(path)
    except FileNotFoundError as e:
        raise InputError("scene file not found", path=str(path)) from e
    except (yaml.YAMLError, ValueError) as e:
        raise InputError(f"cannot parse scene file: {e}", path=str(path)) from e
    config = scene_config_from_dict(document, source=str(path))
    logger.info(
        f"🌍 SCENE: Loaded scene config {path.name}: {config.frames} frames, "
        f"{len(config.dynamic)} dynamic boxes, {len(config.cameras)} cameras"
    )
    return config


def scene_config_to_dict(config: SceneConfig) -> Dict[str, Any]:
    """Serialise a scene config back into the sectioned YAML layout."""
    data = config.model_dump(mode="json")
    document: Dict[str, Any] = {
        key: data[key]
        for key in (
            "grid", "frames", "dt", "feature_channels", "feature_noise_std",
            "depth_noise_std", "visibility", "lidar_to_ego", "ego", "static",
        )
    }
    for idx, box in enumerate(data["dynamic"]):
        document[f"dynamic.{idx}"] = box
    for idx, camera in enumerate(data["cameras"]):
        document[f"camera.{idx}"] = camera
    return document


@lru_cache()
def get_default_pipeline_config() -> PipelineConfig:
    """Return the shipped default run configuration (cached)."""
    path = CONFIG_DIR / DEFAULT_RUN_CONFIG
    if path.is_file():
        return load_pipeline_config(path)
    logger.warning(f"⚠️  CONFIG: {path} not found, using built-in defaults")
    return PipelineConfig()
