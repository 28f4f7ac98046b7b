"""
Parameter storage and the manifest + blob weight file format.

A weight set is two files sharing a stem:

``<stem>.manifest`` (UTF-8 text)::

    # vital-occ-stream weights v1
    blob <stem-basename>.bin
    <block-name> <role> <d0>x<d1>x...
    ...

``<stem>.bin``: the parameter arrays as little-endian float32, concatenated
in manifest order with no padding.  A *block* is a named layer
(``streamagg.squeeze``); its *roles* are the arrays it owns (``weight``,
``bias``, ``scale``, ``shift``...).
"""

from __future__ import annotations

import logging
import zlib
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray

from vital_occ_stream.core.exceptions import ConfigurationError
from vital_occ_stream.numerics.layers import Activation, Conv3dLayer, LinearLayer

logger = logging.getLogger(__name__)

MANIFEST_HEADER = "# vital-occ-stream weights v1"
MANIFEST_SUFFIX = ".manifest"
BLOB_SUFFIX = ".bin"
BLOB_DTYPE = np.dtype("<f4")

# Demo-mode initialisation range
INIT_LOW = -0.05
INIT_HIGH = 0.05

PathLike = Union[str, Path]
Key = Tuple[str, str]


def seeded_uniform(seed: int, name: str, role: str, shape: Sequence[int]) -> NDArray[np.float32]:
    """Deterministic uniform init in [INIT_LOW, INIT_HIGH] keyed by block and role."""
    rng = np.random.default_rng([seed, zlib.crc32(f"{name}:{role}".encode("utf-8"))])
    return rng.uniform(INIT_LOW, INIT_HIGH, size=tuple(shape)).astype(np.float32)


def manifest_path(stem: PathLike) -> Path:
    p = Path(stem)
    if p.suffix == MANIFEST_SUFFIX:
        return p
    return p.with_name(p.name + MANIFEST_SUFFIX)


def _parse_shape(text: str) -> Tuple[int, ...]:
    if text in ("", "scalar"):
        return ()
    return tuple(int(d) for d in text.split("x"))


class WeightStore:
    """Ordered mapping ``(block, role) → float32 array``."""

    def __init__(self) -> None:
        self._arrays: Dict[Key, NDArray[np.float32]] = {}

    # ------------------------------------------------------------------
    # Mapping
    # ------------------------------------------------------------------

    def put(self, name: str, role: str, value: ArrayLike) -> None:
        arr = np.array(value, dtype=np.float32)
        arr.setflags(write=False)
        self._arrays[(name, role)] = arr

    def get(self, name: str, role: str) -> Optional[NDArray[np.float32]]:
        return self._arrays.get((name, role))

    def require(self, name: str, role: str, shape: Optional[Sequence[int]] = None) -> NDArray[np.float32]:
        arr = self._arrays.get((name, role))
        if arr is None:
            raise ConfigurationError(f"missing weight block {name}.{role}", block=name, field=role)
        if shape is not None and tuple(arr.shape) != tuple(shape):
            raise ConfigurationError(
                f"weight block {name}.{role} has shape {arr.shape}, expected {tuple(shape)}",
                block=name,
                field=role,
            )
        return arr

    def keys(self) -> List[Key]:
        return list(self._arrays)

    def __iter__(self) -> Iterator[Key]:
        return iter(self._arrays)

    def __len__(self) -> int:
        return len(self._arrays)

    def total_parameters(self) -> int:
        return int(sum(a.size for a in self._arrays.values()))

    # ------------------------------------------------------------------
    # Layer builders
    # ------------------------------------------------------------------

    def ensure(
        self,
        name: str,
        role: str,
        shape: Sequence[int],
        seed: Optional[int],
        fill: Optional[float] = None,
    ) -> NDArray[np.float32]:
        """Return the stored array, or create one when ``seed`` is given.

        New arrays are seeded-uniform, or the constant ``fill`` when set.
        """
        if (name, role) not in self._arrays and seed is not None:
            if fill is None:
                self.put(name, role, seeded_uniform(seed, name, role, shape))
            else:
                self.put(name, role, np.full(tuple(shape), fill, dtype=np.float32))
        return self.require(name, role, shape)

    def linear(
        self,
        name: str,
        in_features: int,
        out_features: int,
        activation: Activation = Activation.NONE,
        seed: Optional[int] = None,
    ) -> LinearLayer:
        w = self.ensure(name, "weight", (out_features, in_features), seed)
        b = self.ensure(name, "bias", (out_features,), seed)
        return LinearLayer(w, b, activation)

    def conv(
        self,
        name: str,
        c_in: int,
        c_out: int,
        size: int,
        stride: int = 1,
        padding: int = 0,
        seed: Optional[int] = None,
    ) -> Conv3dLayer:
        w = self.ensure(name, "weight", (c_out, c_in, size, size, size), seed)
        b = self.ensure(name, "bias", (c_out,), seed)
        return Conv3dLayer(w, b, stride, padding)

    def norm(self, name: str, channels: int, seed: Optional[int] = None) -> Tuple[NDArray[np.float32], NDArray[np.float32]]:
        """Affine ``(scale, shift)`` of a channel standardisation; new ones start at (1, 0)."""
        scale = self.ensure(name, "scale", (channels,), seed, fill=1.0)
        shift = self.ensure(name, "shift", (channels,), seed, fill=0.0)
        return scale, shift

    # ------------------------------------------------------------------
    # File I/O
    # ------------------------------------------------------------------

    def save(self, stem: PathLike) -> Path:
        manifest = manifest_path(stem)
        blob = manifest.with_name(manifest.name[: -len(MANIFEST_SUFFIX)] + BLOB_SUFFIX)
        manifest.parent.mkdir(parents=True, exist_ok=True)
        lines = [MANIFEST_HEADER, f"blob {blob.name}"]
        with open(blob, "wb") as fh:
            for (name, role), arr in self._arrays.items():
                shape = "x".join(str(d) for d in arr.shape) or "scalar"
                lines.append(f"{name} {role} {shape}")
                fh.write(arr.astype(BLOB_DTYPE).tobytes(order="C"))
        manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
        logger.info(f"💾 WEIGHTS: wrote {len(self)} arrays ({self.total_parameters()} values) to {manifest}")
        return manifest

    @classmethod
    def load(cls, stem: PathLike) -> "WeightStore":
        manifest = manifest_path(stem)
        if not manifest.is_file():
            raise ConfigurationError(f"weight manifest not found: {manifest}", block="weights")
        lines = manifest.read_text(encoding="utf-8").splitlines()
        if not lines or lines[0].strip() != MANIFEST_HEADER:
            raise ConfigurationError(f"{manifest}: missing header '{MANIFEST_HEADER}'", block="weights")
        if len(lines) < 2 or not lines[1].startswith("blob "):
            raise ConfigurationError(f"{manifest}: second line must name the blob file", block="weights")
        blob = manifest.parent / lines[1].split(maxsplit=1)[1].strip()
        if not blob.is_file():
            raise ConfigurationError(f"weight blob not found: {blob}", block="weights")

        entries: List[Tuple[str, str, Tuple[int, ...]]] = []
        for lineno, raw in enumerate(lines[2:], start=3):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ConfigurationError(
                    f"{manifest}:{lineno}: expected '<name> <role> <shape>', got '{line}'",
                    block="weights",
                )
            try:
                shape = _parse_shape(parts[2])
            except ValueError as exc:
                raise ConfigurationError(
                    f"{manifest}:{lineno}: bad shape '{parts[2]}'", block=parts[0], field=parts[1]
                ) from exc
            entries.append((parts[0], parts[1], shape))

        values = np.fromfile(blob, dtype=BLOB_DTYPE)
        expected = sum(int(np.prod(shape)) for _, _, shape in entries)
        if values.size != expected:
            raise ConfigurationError(
                f"weight blob {blob} holds {values.size} floats, manifest declares {expected}",
                block="weights",
            )

        store = cls()
        offset = 0
        for name, role, shape in entries:
            n = int(np.prod(shape))
            store.put(name, role, values[offset : offset + n].astype(np.float32).reshape(shape))
            offset += n
        logger.info(f"📦 WEIGHTS: loaded {len(store)} arrays from {manifest}")
        return store
