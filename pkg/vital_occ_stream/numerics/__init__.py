"""
Dense volume container and numeric primitives: trilinear sampling, 3D
convolution, pooling, activations, derivative checks and weight storage.
"""

from vital_occ_stream.numerics.conv import conv3d, deconv3d_x2
from vital_occ_stream.numerics.functional import (
    PoolKind,
    channel_pool,
    channel_standardize,
    relu,
    sigmoid,
    softmax,
    spatial_pool,
)
from vital_occ_stream.numerics.gradcheck import finite_difference_check
from vital_occ_stream.numerics.layers import (
    Activation,
    Conv3dLayer,
    LinearLayer,
    apply_mlp,
    apply_mlp_cells,
)
from vital_occ_stream.numerics.sampling import Padding, resample_volume, trilinear_sample
from vital_occ_stream.numerics.volume import (
    VoxelVolume,
    add_volumes,
    concat_channels,
    expect_channels,
    expect_dims,
)
from vital_occ_stream.numerics.weights import WeightStore, seeded_uniform

__all__ = [
    "Activation",
    "Conv3dLayer",
    "LinearLayer",
    "Padding",
    "PoolKind",
    "VoxelVolume",
    "WeightStore",
    "add_volumes",
    "apply_mlp",
    "apply_mlp_cells",
    "channel_pool",
    "channel_standardize",
    "concat_channels",
    "conv3d",
    "deconv3d_x2",
    "expect_channels",
    "expect_dims",
    "finite_difference_check",
    "relu",
    "resample_volume",
    "sigmoid",
    "softmax",
    "spatial_pool",
    "trilinear_sample",
]
