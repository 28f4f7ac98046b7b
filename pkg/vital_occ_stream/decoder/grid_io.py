"""
SemanticGrid dump format.

One ASCII header line terminated by ``\\n``::

    OCCGRID v1 dims X Y Z min x0 y0 z0 resolution r frame ego classes K mask 0|1

then ``X*Y*Z`` label bytes in x-major order, then (when ``mask 1``) the same
number of mask bytes (0 or 1).
"""

import logging
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from vital_occ_stream.core.exceptions import InputError
from vital_occ_stream.decoder.models import SemanticGrid
from vital_occ_stream.geometry.grid import GridFrame, GridSpec

logger = logging.getLogger(__name__)

MAGIC = "OCCGRID"
VERSION = "v1"

PathLike = Union[str, Path]


def format_header(grid: SemanticGrid, spec: GridSpec) -> str:
    x, y, z = grid.dims
    mx, my, mz = spec.min_corner
    return (
        f"{MAGIC} {VERSION} dims {x} {y} {z} min {mx!r} {my!r} {mz!r} "
        f"resolution {spec.resolution!r} frame {spec.frame.value} "
        f"classes {grid.num_classes} mask {int(grid.mask is not None)}\n"
    )


def write_grid(path: PathLike, grid: SemanticGrid, spec: GridSpec) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(format_header(grid, spec).encode("ascii"))
        fh.write(grid.labels.tobytes(order="C"))
        if grid.mask is not None:
            fh.write(grid.mask.astype(np.uint8).tobytes(order="C"))
    return path


def _parse_header(line: str, path: Path) -> Tuple[GridSpec, int, bool]:
    tokens = line.split()
    if len(tokens) != 18 or tokens[0] != MAGIC or tokens[1] != VERSION:
        raise InputError(f"not an {MAGIC} {VERSION} grid dump", path=str(path), line=1)
    keys = {tokens[i] for i in (2, 6, 10, 12, 14, 16)}
    try:
        if set(keys) != {"dims", "min", "resolution", "frame", "classes", "mask"}:
            raise ValueError("unexpected header keys")
        dims = tuple(int(v) for v in tokens[3:6])
        min_corner = tuple(float(v) for v in tokens[7:10])
        resolution = float(tokens[11])
        frame = GridFrame(tokens[13])
        classes = int(tokens[15])
        has_mask = tokens[17] == "1"
        spec = GridSpec(dims=dims, min_corner=min_corner, resolution=resolution, frame=frame)
    except ValueError as e:
        raise InputError(f"malformed grid header: {e}", path=str(path), line=1) from e
    return spec, classes, has_mask


def read_grid(path: PathLike) -> Tuple[SemanticGrid, GridSpec]:
    path = Path(path)
    if not path.is_file():
        raise InputError("grid dump not found", path=str(path))
    raw = path.read_bytes()
    newline = raw.find(b"\n")
    if newline < 0:
        raise InputError("grid dump has no header line", path=str(path), line=1)
    try:
        header = raw[:newline].decode("ascii")
    except UnicodeDecodeError as e:
        raise InputError("grid header is not ASCII", path=str(path), line=1) from e
    spec, classes, has_mask = _parse_header(header, path)

    n = spec.num_cells
    body = raw[newline + 1 :]
    expected = n * (2 if has_mask else 1)
    if len(body) != expected:
        raise InputError(f"grid body holds {len(body)} bytes, header implies {expected}", path=str(path))
    labels = np.frombuffer(body[:n], dtype=np.uint8).reshape(spec.dims)
    mask: Optional[np.ndarray] = None
    if has_mask:
        mask = np.frombuffer(body[n:], dtype=np.uint8).reshape(spec.dims) != 0
    if labels.max(initial=0) > classes:
        raise InputError(f"label {int(labels.max())} exceeds class count {classes}", path=str(path))
    return SemanticGrid(labels, classes, mask), spec
