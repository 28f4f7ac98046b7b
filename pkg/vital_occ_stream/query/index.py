"""
Sparse cell → query index over the half-resolution lattice.

Cell ``i`` lists query ``j`` when the cell center lies inside query ``j``'s
oriented box (faces inclusive).  Stored in compressed-row form: sorted cell
ids, row offsets and the concatenated query ids, ascending within a row.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np
from numpy.typing import NDArray

from vital_occ_stream.geometry.boxes import box_cells
from vital_occ_stream.geometry.grid import GridSpec
from vital_occ_stream.query.models import InstanceQuery

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class VoxelQueryIndex:
    cells: NDArray[np.int64]
    offsets: NDArray[np.int64]
    query_ids: NDArray[np.int64]
    num_queries: int

    @classmethod
    def empty(cls, num_queries: int = 0) -> "VoxelQueryIndex":
        return cls(
            np.zeros(0, dtype=np.int64), np.zeros(1, dtype=np.int64), np.zeros(0, dtype=np.int64), num_queries
        )

    @property
    def num_cells(self) -> int:
        return int(self.cells.size)

    def counts(self) -> NDArray[np.int64]:
        return np.diff(self.offsets)

    def queries_for(self, cell: int) -> NDArray[np.int64]:
        pos = int(np.searchsorted(self.cells, cell))
        if pos >= self.cells.size or self.cells[pos] != cell:
            return np.zeros(0, dtype=np.int64)
        return self.query_ids[self.offsets[pos] : self.offsets[pos + 1]]

    def as_dict(self) -> Dict[int, List[int]]:
        return {
            int(c): self.query_ids[self.offsets[k] : self.offsets[k + 1]].tolist()
            for k, c in enumerate(self.cells)
        }


def build_voxel_query_index(queries: Sequence[InstanceQuery], spec_half: GridSpec) -> VoxelQueryIndex:
    cell_parts, query_parts = [], []
    for j, q in enumerate(queries):
        cells = box_cells(q.box, spec_half)
        cell_parts.append(cells)
        query_parts.append(np.full(cells.size, j, dtype=np.int64))
    if not cell_parts or sum(c.size for c in cell_parts) == 0:
        return VoxelQueryIndex.empty(len(queries))

    all_cells = np.concatenate(cell_parts)
    all_queries = np.concatenate(query_parts)
    order = np.lexsort((all_queries, all_cells))
    all_cells, all_queries = all_cells[order], all_queries[order]
    cells, starts = np.unique(all_cells, return_index=True)
    offsets = np.append(starts, all_cells.size).astype(np.int64)
    index = VoxelQueryIndex(cells.astype(np.int64), offsets, all_queries, len(queries))
    logger.debug(f"🗂️  QUERY: indexed {index.num_cells} cells for {len(queries)} queries")
    return index
