"""
Worker pool manager for the lab
Splits ensemble work into contiguous point chunks and runs them in worker processes
"""

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional, Sequence
import logging
import time

from config import settings

logger = logging.getLogger(__name__)


def chunk_bounds(n_items: int, n_chunks: int) -> List[tuple]:
    """
    Contiguous (start, stop) ranges covering range(n_items).

    Args:
        n_items: Number of items to split
        n_chunks: Requested number of chunks (capped by n_items)

    Returns:
        List of (start, stop) pairs in order
    """
    n_chunks = max(1, min(n_chunks, n_items))
    base, extra = divmod(n_items, n_chunks)
    bounds = []
    start = 0
    for i in range(n_chunks):
        stop = start + base + (1 if i < extra else 0)
        bounds.append((start, stop))
        start = stop
    return bounds


class WorkerPool:
    """
    Process pool for embarrassingly parallel ensemble work.

    Results are gathered in submission order, so the output never depends on
    which worker finished first.
    """

    def __init__(self, workers: int = settings.worker_count):
        """
        Initialize worker pool.

        Args:
            workers: Number of worker processes (1 runs everything inline)
        """
        self.workers = max(1, int(workers))
        self._executor: Optional[ProcessPoolExecutor] = None

    def _ensure_executor(self) -> ProcessPoolExecutor:
        if self._executor is None:
            logger.info(f"🚀 Starting worker pool with {self.workers} processes")
            self._executor = ProcessPoolExecutor(max_workers=self.workers)
        return self._executor

    def map_chunks(
        self,
        fn: Callable,
        n_items: int,
        *args,
        sliced: Sequence = (),
        min_chunk: int = settings.MIN_POINTS_PER_CHUNK,
    ) -> list:
        """
        Run fn(start, stop, *parts, *args) over contiguous chunks of range(n_items).

        Args:
            fn: Picklable top-level callable
            n_items: Number of items to split
            sliced: Per-item sequences; each chunk receives only its rows [start, stop)
            min_chunk: Chunks are never smaller than this (except the whole range)

        Returns:
            List of per-chunk results in chunk order
        """
        n_chunks = min(self.workers, max(1, n_items // max(1, min_chunk)))
        bounds = chunk_bounds(n_items, n_chunks)

        def parts(start, stop):
            return [seq[start:stop] for seq in sliced]

        if self.workers == 1 or len(bounds) == 1:
            return [fn(start, stop, *parts(start, stop), *args) for start, stop in bounds]

        executor = self._ensure_executor()
        started = time.time()
        futures = [executor.submit(fn, start, stop, *parts(start, stop), *args) for start, stop in bounds]
        results = [future.result() for future in futures]
        logger.debug(
            f"⏱️  {len(bounds)} chunks of {n_items} items finished in "
            f"{time.time() - started:.2f}s"
        )
        return results

    def close(self):
        """Shut the executor down"""
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
            logger.info("🛑 Worker pool closed")


# Global worker pool instance
worker_pool: Optional[WorkerPool] = None


def get_worker_pool(workers: Optional[int] = None) -> WorkerPool:
    """
    Get or create the global worker pool.

    Args:
        workers: Requested size; a pool of a different size is replaced

    Returns:
        WorkerPool instance
    """
    global worker_pool

    size = workers if workers is not None else settings.worker_count
    if worker_pool is not None and worker_pool.workers != max(1, size):
        worker_pool.close()
        worker_pool = None
    if worker_pool is None:
        worker_pool = WorkerPool(size)
    return worker_pool


def close_worker_pool():
    """Close the global worker pool"""
    global worker_pool

    if worker_pool is not None:
        worker_pool.close()
        worker_pool = None


def concat_results(parts: Sequence) -> list:
    """Flatten per-chunk lists."""
    return [item for part in parts for item in part]
