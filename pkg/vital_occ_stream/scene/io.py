"""
Scene directories.

Layout (see ``docs/formats.md``)::

    scene.yaml        scene config plus the generation seed
    poses.txt         one line per frame: timestep, R (9 floats, row-major), t (3 floats)
    frame_0000.grid   ground-truth grid dump per frame
    detections.txt    ground-truth dynamic boxes in the replay detection format
"""

from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import yaml

from vital_occ_stream.core.config import scene_config_from_dict, scene_config_to_dict
from vital_occ_stream.core.exceptions import InputError
from vital_occ_stream.decoder.grid_io import read_grid, write_grid
from vital_occ_stream.decoder.models import SemanticGrid
from vital_occ_stream.geometry.grid import GridSpec
from vital_occ_stream.geometry.transforms import EgoPose, RigidTransform
from vital_occ_stream.query.detector import Detection, format_detection
from vital_occ_stream.scene.config import SceneConfig
from vital_occ_stream.scene.generator import generate_scene
from vital_occ_stream.scene.models import SceneFrame

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SCENE_FILE = "scene.yaml"
POSES_FILE = "poses.txt"
DETECTIONS_FILE = "detections.txt"
FRAME_PATTERN = re.compile(r"^frame_(\d+)\.grid$")


def frame_filename(timestep: int) -> str:
    return f"frame_{timestep:04d}.grid"


def _float(v: float) -> str:
    return repr(float(v))


def format_pose(pose: EgoPose) -> str:
    t = pose.ego_to_global
    values = [*t.rotation.reshape(-1), *t.translation]
    return f"{pose.timestep} " + " ".join(_float(v) for v in values)


def write_poses(path: PathLike, poses: Sequence[EgoPose]) -> Path:
    path = Path(path)
    lines = ["# timestep r00 r01 r02 r10 r11 r12 r20 r21 r22 tx ty tz"]
    lines += [format_pose(p) for p in poses]
    path.write_text("\n".join(lines) + "\n", encoding="ascii")
    return path


def read_poses(path: PathLike) -> List[EgoPose]:
    path = Path(path)
    if not path.is_file():
        raise InputError("poses file not found", path=str(path))
    poses: List[EgoPose] = []
    for lineno, raw in enumerate(path.read_text(encoding="ascii").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 13:
            raise InputError(f"expected 13 fields, got {len(parts)}", path=str(path), line=lineno)
        try:
            timestep = int(parts[0])
            values = np.array([float(v) for v in parts[1:]])
            transform = RigidTransform(values[:9].reshape(3, 3), values[9:])
        except ValueError as e:
            raise InputError(f"non-numeric pose field: {e}", path=str(path), line=lineno) from e
        except Exception as e:
            raise InputError(f"invalid pose: {e}", path=str(path), line=lineno) from e
        poses.append(EgoPose(timestep, transform))
    return poses


def list_frame_files(directory: PathLike) -> Dict[int, Path]:
    """``{timestep: path}`` for every ``frame_XXXX.grid`` in ``directory``."""
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError("not a directory", path=str(directory))
    found = {}
    for entry in sorted(directory.iterdir()):
        match = FRAME_PATTERN.match(entry.name)
        if match:
            found[int(match.group(1))] = entry
    return found


def read_scene_grids(directory: PathLike) -> Dict[int, Tuple[SemanticGrid, GridSpec]]:
    return {t: read_grid(p) for t, p in list_frame_files(directory).items()}


def export_scene(frames: Sequence[SceneFrame], config: SceneConfig, seed: int, out_dir: PathLike) -> Path:
    """Write a scene directory; identical inputs give byte-identical files."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        document = {"seed": int(seed), **scene_config_to_dict(config)}
        with open(out / SCENE_FILE, "w", encoding="utf-8") as fh:
            yaml.safe_dump(document, fh, sort_keys=False)
        write_poses(out / POSES_FILE, [f.ego for f in frames])
        detections = []
        for frame in frames:
            write_grid(out / frame_filename(frame.timestep), frame.gt_grid, frame.spec)
            detections += [
                format_detection(Detection(frame.timestep, d.track_id, d.class_id, 1.0, d.box))
                for d in frame.dynamic_boxes
            ]
        header = "# frame_index track_id class_id confidence cx cy cz l w h yaw"
        (out / DETECTIONS_FILE).write_text("\n".join([header, *detections]) + "\n", encoding="ascii")
    except OSError as e:
        raise InputError(f"cannot write scene directory: {e.strerror or e}", path=str(out)) from e
    logger.info(f"💾 SCENE: Exported {len(frames)} frames to {out}")
    return out


def load_scene_dir(directory: PathLike) -> Tuple[SceneConfig, int, List[SceneFrame]]:
    """
    Rebuild the frames of an exported scene.

    Camera images are regenerated from ``scene.yaml`` and its seed; ground
    truth and poses come from the dumped files and must cover every frame.
    """
    directory = Path(directory)
    scene_file = directory / SCENE_FILE
    if not scene_file.is_file():
        raise InputError("scene directory has no scene.yaml", path=str(directory))
    try:
        document = yaml.safe_load(scene_file.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as e:
        raise InputError(f"cannot parse scene file: {e}", path=str(scene_file)) from e
    if not isinstance(document, dict):
        raise InputError("scene file must be a mapping of sections", path=str(scene_file))
    seed = int(document.pop("seed", 0))
    config = scene_config_from_dict(document, source=str(scene_file))
    frames = generate_scene(config, seed)

    poses = read_poses(directory / POSES_FILE)
    grids = read_scene_grids(directory)
    missing = [f.timestep for f in frames if f.timestep not in grids]
    if missing or len(poses) != len(frames):
        raise InputError(
            f"scene directory is incomplete: {len(poses)} poses for {len(frames)} frames, "
            f"missing grids {missing}",
            path=str(directory),
        )

    loaded = []
    for frame, pose in zip(frames, poses):
        grid, spec = grids[frame.timestep]
        if spec != frame.spec:
            raise InputError(f"{frame_filename(frame.timestep)} grid spec differs from scene.yaml", path=str(directory))
        loaded.append(
            SceneFrame(
                timestep=frame.timestep,
                ego=pose,
                spec=frame.spec,
                gt_grid=grid,
                dynamic_boxes=frame.dynamic_boxes,
                cameras=frame.cameras,
                grid_to_ego=frame.grid_to_ego,
            )
        )
    logger.info(f"📂 SCENE: Loaded {len(loaded)} frames from {directory} (seed={seed})")
    return config, seed, loaded
