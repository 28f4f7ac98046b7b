"""
Dense 3D convolution and stride-2 transposed convolution.

Both loop over kernel offsets and contract channels with ``tensordot``,
accumulating in float64 in a fixed offset order.  Convolution is
cross-correlation (no kernel flip) with zero padding.
"""

from __future__ import annotations

import logging
from itertools import product
from typing import Optional, Sequence

import numpy as np

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.numerics.layers import Conv3dLayer
from vital_occ_stream.numerics.volume import VoxelVolume

logger = logging.getLogger(__name__)


def conv3d(layer: Conv3dLayer, vol: VoxelVolume) -> VoxelVolume:
    if vol.channels != layer.c_in:
        raise ContractViolation(
            f"conv3d expects {layer.c_in} input channels, got {vol.channels}"
        )
    out_dims = layer.output_dims(vol.dims)
    if min(out_dims) < 1:
        raise ContractViolation(f"conv3d output dims {out_dims} from input {vol.dims} are empty")

    p, s, k = layer.padding, layer.stride, layer.size
    x = vol.astype64()
    if p:
        x = np.pad(x, ((0, 0), (p, p), (p, p), (p, p)))
    kernel = layer.kernel.astype(np.float64)
    ox, oy, oz = out_dims

    acc = np.zeros((layer.c_out, ox, oy, oz), dtype=np.float64)
    for a, b, c in product(range(k), repeat=3):
        patch = x[
            :,
            a : a + s * (ox - 1) + 1 : s,
            b : b + s * (oy - 1) + 1 : s,
            c : c + s * (oz - 1) + 1 : s,
        ]
        acc += np.tensordot(kernel[:, :, a, b, c], patch, axes=(1, 0))
    acc += layer.bias.astype(np.float64)[:, None, None, None]
    return VoxelVolume(acc.astype(np.float32))


def deconv3d_x2(
    layer: Conv3dLayer,
    vol: VoxelVolume,
    out_dims: Optional[Sequence[int]] = None,
) -> VoxelVolume:
    """
    Transposed convolution with stride 2 doubling every spatial axis.

    The kernel is read as ``(C_out, C_in, k, k, k)``.  Each input cell stamps
    the kernel at twice its index; the stamped buffer is cropped by
    ``padding`` at the low end and truncated to exactly twice the input dims.
    """
    if layer.stride != 2:
        raise ContractViolation(f"deconv3d_x2 requires stride 2, got {layer.stride}")
    if vol.channels != layer.c_in:
        raise ContractViolation(
            f"deconv3d_x2 expects {layer.c_in} input channels, got {vol.channels}"
        )
    target = tuple(2 * d for d in vol.dims)
    if out_dims is not None and tuple(out_dims) != target:
        raise ContractViolation(
            f"deconv3d_x2 maps {vol.dims} to {target}, not the requested {tuple(out_dims)}"
        )
    k, p = layer.size, layer.padding
    full = tuple((d - 1) * 2 + k for d in vol.dims)
    if any(f - p < t for f, t in zip(full, target)):
        raise ContractViolation(
            f"kernel {k} with padding {p} cannot produce doubled dims {target}"
        )

    x = vol.astype64()
    kernel = layer.kernel.astype(np.float64)
    dx, dy, dz = vol.dims
    buf = np.zeros((layer.c_out, *full), dtype=np.float64)
    for a, b, c in product(range(k), repeat=3):
        contrib = np.tensordot(kernel[:, :, a, b, c], x, axes=(1, 0))
        buf[:, a : a + 2 * dx - 1 : 2, b : b + 2 * dy - 1 : 2, c : c + 2 * dz - 1 : 2] += contrib

    tx, ty, tz = target
    out = buf[:, p : p + tx, p : p + ty, p : p + tz]
    out = out + layer.bias.astype(np.float64)[:, None, None, None]
    return VoxelVolume(out.astype(np.float32))
