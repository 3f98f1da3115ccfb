"""Edge partitioning and in-process parallel pricing."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from dwmap.decomposition import Column, Duals, Pricer, Subprogram, price_all_serial


@dataclass(frozen=True)
class WorkPartition:
    blocks: tuple[tuple[int, ...], ...]  # edge ids per worker, contiguous and ascending

    @property
    def num_workers(self) -> int:
        return len(self.blocks)

    def owner(self) -> dict[int, int]:
        return {e: w for w, block in enumerate(self.blocks) for e in block}


def partition_edges(sizes: Sequence[int], workers: int) -> WorkPartition:
    """Contiguous edge-id blocks with roughly equal total subprogram size."""
    n = len(sizes)
    workers = max(1, min(workers, n)) if n else 1
    if n == 0:
        return WorkPartition(((),))
    cum = np.cumsum(np.asarray(sizes, dtype=float))
    total = cum[-1]
    cuts = [0]
    for w in range(1, workers):
        target = total * w / workers
        cut = int(np.searchsorted(cum, target, side="left")) + 1
        # every block keeps at least one edge
        cut = min(max(cut, cuts[-1] + 1), n - (workers - w))
        cuts.append(cut)
    cuts.append(n)
    return WorkPartition(tuple(tuple(range(cuts[i], cuts[i + 1])) for i in range(workers)))


def default_workers() -> int:
    return os.cpu_count() or 1


class ThreadPricer(Pricer):
    """Prices each partition block on its own thread; results merged by edge id."""

    def __init__(self, subprograms: Sequence[Subprogram], workers: int | None = None):
        super().__init__(subprograms)
        workers = workers or default_workers()
        self.partition = partition_edges([sp.cost.size for sp in self.subprograms], workers)
        self._pool = ThreadPoolExecutor(max_workers=self.partition.num_workers, thread_name_prefix="dwmap-price")

    def price_all(self, duals: Duals, tie_rule: str, iteration: int) -> list[tuple[Column, float]]:
        parts = [[self.subprograms[e] for e in block] for block in self.partition.blocks]
        results = self._pool.map(lambda subs: price_all_serial(subs, duals, tie_rule, iteration), parts)
        merged = [item for chunk in results for item in chunk]
        merged.sort(key=lambda item: item[0].edge)
        return merged

    def close(self) -> None:
        self._pool.shutdown(wait=True)
