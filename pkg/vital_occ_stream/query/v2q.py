"""
Voxel-to-query deformable attention.

Each query samples the fused volume at ``H × O`` learned offsets around its
box center, weights the samples with a per-head softmax, projects them
through per-head value and output matrices and adds the result to its
feature.
"""

import logging
from typing import List, Sequence

import numpy as np
from numpy.typing import NDArray

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.geometry.grid import GridSpec
from vital_occ_stream.numerics.functional import softmax
from vital_occ_stream.numerics.sampling import Padding, trilinear_sample
from vital_occ_stream.numerics.volume import VoxelVolume
from vital_occ_stream.query.models import DeformAttnParams, InstanceQuery, stack_features

logger = logging.getLogger(__name__)


def deform_attention_weights(features: NDArray[np.float64], params: DeformAttnParams) -> NDArray[np.float64]:
    """Softmax weights α of shape ``(N, H, O)``; each ``(i, h)`` row sums to 1."""
    logits = params.weight_net.apply(features).reshape(-1, params.heads, params.points)
    return softmax(logits, axis=-1)


def sampling_points(
    queries: Sequence[InstanceQuery], features: NDArray[np.float64], params: DeformAttnParams
) -> NDArray[np.float64]:
    """Metric sampling locations ``(N, H, O, 3)``."""
    offsets = params.offset_net.apply(features).reshape(-1, params.heads, params.points, 3)
    centers = np.stack([q.box.center_array for q in queries])
    return centers[:, None, None, :] + offsets


def v2q_deform_attn(
    queries: Sequence[InstanceQuery],
    v_sa: VoxelVolume,
    params: DeformAttnParams,
    spec_half: GridSpec,
) -> List[InstanceQuery]:
    """Return q_vox: each query's feature plus its attended voxel context."""
    if not queries:
        return []
    if v_sa.channels != params.channels:
        raise ContractViolation(f"v2q expects {params.channels} channels, got {v_sa.channels}")
    features = stack_features(queries)
    if features.shape[1] != params.channels:
        raise ContractViolation(f"query features have {features.shape[1]} channels, expected {params.channels}")

    n, h, o = len(queries), params.heads, params.points
    alpha = deform_attention_weights(features, params)
    points = sampling_points(queries, features, params)
    cell_points = spec_half.to_cell_space(points.reshape(-1, 3))
    samples = trilinear_sample(v_sa, cell_points, Padding.ZEROS).astype(np.float64).reshape(n, h, o, -1)

    values = np.einsum("nhoc,hdc->nhod", samples, params.value_proj.astype(np.float64))
    pooled = np.einsum("nho,nhod->nhd", alpha, values)
    update = np.einsum("nhd,hcd->nc", pooled, params.output_proj.astype(np.float64))

    updated = [q.with_feature(features[i] + update[i]) for i, q in enumerate(queries)]
    logger.debug(f"🔎 QUERY: v2q sampled {n * h * o} points for {n} queries")
    return updated
