"""
Dynamic query aggregation and the residual feed-forward block.

For every indexed cell the fused feature (plus a positional encoding of the
cell) attends over the queries whose boxes cover it; a sigmoid gate decides
how much of the attended context enters the cell.  Cells covered by no box
are copied unchanged.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from vital_occ_stream.core.exceptions import ContractViolation
from vital_occ_stream.geometry.grid import GridSpec
from vital_occ_stream.numerics.functional import channel_standardize
from vital_occ_stream.numerics.layers import apply_mlp
from vital_occ_stream.numerics.volume import VoxelVolume
from vital_occ_stream.query.index import VoxelQueryIndex
from vital_occ_stream.query.models import DqaParams, InstanceQuery, stack_features
from vital_occ_stream.utils.parallel import map_chunks

logger = logging.getLogger(__name__)

FFN_CHUNK = 65536


@dataclass(frozen=True, eq=False)
class DqaTrace:
    """Intermediate values at the indexed cells (rows follow ``index.cells``)."""

    alpha: NDArray[np.float64]
    neighbours: NDArray[np.int64]
    valid: NDArray[np.bool_]
    context: NDArray[np.float64]
    gate: NDArray[np.float64]
    update: NDArray[np.float64]


def _padded_neighbours(index: VoxelQueryIndex):
    counts = index.counts()
    width = int(counts.max()) if counts.size else 0
    slots = np.arange(width)[None, :]
    valid = slots < counts[:, None]
    gather = np.where(valid, index.offsets[:-1, None] + slots, 0)
    neighbours = np.where(valid, index.query_ids[gather], 0)
    return neighbours, valid


def dqa_trace(
    v_sa: VoxelVolume,
    queries: Sequence[InstanceQuery],
    index: VoxelQueryIndex,
    params: DqaParams,
    spec_half: GridSpec,
) -> DqaTrace:
    c = params.channels
    cells = v_sa.cells()[index.cells].astype(np.float64)
    coords = spec_half.unflatten(index.cells).astype(np.float64)
    normalized = (coords + 0.5) / np.asarray(spec_half.dims, dtype=np.float64)
    q = params.w_q.apply(cells + params.pos_enc.apply(normalized))

    features = stack_features(queries)
    keys = params.w_k.apply(features)
    values = params.w_v.apply(features)

    neighbours, valid = _padded_neighbours(index)
    scores = np.einsum("md,mkd->mk", q, keys[neighbours]) / math.sqrt(c)
    scores = np.where(valid, scores, -np.inf)
    scores = scores - scores.max(axis=1, keepdims=True)
    weights = np.where(valid, np.exp(scores), 0.0)
    alpha = weights / weights.sum(axis=1, keepdims=True)

    context = np.einsum("mk,mkd->md", alpha, values[neighbours])
    gate = params.gate.apply(np.concatenate([cells, context], axis=1))
    return DqaTrace(alpha, neighbours, valid, context, gate, gate * context)


def dqa(
    v_sa: VoxelVolume,
    queries: Sequence[InstanceQuery],
    index: VoxelQueryIndex,
    params: DqaParams,
    spec_half: GridSpec,
) -> VoxelVolume:
    """V_DQA: gated query context added at indexed cells, every other cell copied."""
    if v_sa.channels != params.channels:
        raise ContractViolation(f"dqa expects {params.channels} channels, got {v_sa.channels}")
    if v_sa.dims != spec_half.dims:
        raise ContractViolation(f"dqa volume dims {v_sa.dims} != lattice dims {spec_half.dims}")
    if index.num_cells == 0:
        return v_sa
    if index.num_queries != len(queries):
        raise ContractViolation(f"index built for {index.num_queries} queries, got {len(queries)}")

    trace = dqa_trace(v_sa, queries, index, params, spec_half)
    out = v_sa.cells()
    out[index.cells] = (out[index.cells].astype(np.float64) + trace.update).astype(np.float32)
    logger.debug(f"💉 QUERY: dqa updated {index.num_cells} of {v_sa.num_cells} cells")
    return VoxelVolume.from_cells(out, v_sa.dims)


def ffn_residual(v_dqa: VoxelVolume, params: DqaParams) -> VoxelVolume:
    """Per cell: ``norm_post(x + ffn(norm_pre(x)))``."""
    if v_dqa.channels != params.channels:
        raise ContractViolation(f"ffn expects {params.channels} channels, got {v_dqa.channels}")
    cells = v_dqa.cells()

    def _run(start: int, stop: int) -> NDArray[np.float32]:
        x = cells[start:stop].astype(np.float64)
        inner = channel_standardize(x, *params.norm_pre, eps=params.eps)
        out = channel_standardize(x + apply_mlp(params.ffn, inner), *params.norm_post, eps=params.eps)
        return out.astype(np.float32)

    result = np.concatenate(map_chunks(_run, cells.shape[0], FFN_CHUNK), axis=0)
    return VoxelVolume.from_cells(result, v_dqa.dims)
