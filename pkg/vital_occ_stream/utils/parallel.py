"""
Chunked thread pool for the data-parallel stages.

A per-cell or per-ray workload is split into fixed chunks that are mapped
over a thread pool.  Chunk boundaries depend only on the item count and
chunk size, never on the worker count, and results are merged in chunk
order.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")

_num_threads = 1


def configure_threads(num_threads: int) -> None:
    """Set the process-wide worker count used by :func:`map_chunks`."""
    global _num_threads
    if num_threads < 1:
        raise ValueError(f"num_threads must be >= 1, got {num_threads}")
    _num_threads = num_threads
    logger.debug(f"⚙️  PARALLEL: worker count set to {num_threads}")


def get_num_threads() -> int:
    return _num_threads


def chunk_bounds(n_items: int, chunk_size: int) -> List[tuple]:
    """Return ``[(start, stop), ...]`` covering ``range(n_items)``."""
    if chunk_size < 1:
        raise ValueError(f"chunk_size must be >= 1, got {chunk_size}")
    return [(start, min(start + chunk_size, n_items)) for start in range(0, n_items, chunk_size)]


def map_chunks(fn: Callable[[int, int], T], n_items: int, chunk_size: int) -> List[T]:
    """Apply ``fn(start, stop)`` to every chunk; results are in chunk order."""
    bounds = chunk_bounds(n_items, chunk_size)
    if _num_threads == 1 or len(bounds) <= 1:
        return [fn(start, stop) for start, stop in bounds]
    with ThreadPoolExecutor(max_workers=_num_threads) as pool:
        futures = [pool.submit(fn, start, stop) for start, stop in bounds]
        return [f.result() for f in futures]
