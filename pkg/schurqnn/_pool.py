from __future__ import annotations

import concurrent.futures
import os
import typing

__all__ = ['Pool', 'default_workers']

def default_workers() -> int:
    return os.cpu_count() or 1

class Pool:
    """Map a picklable function over work items, yielding in item order.

    With one worker everything runs inline in this process.
    """

    #: Number of worker processes.
    workers: int

    def __init__(self, workers: int | None = None):
        if workers is not None and workers < 1:
            raise ValueError(f'need at least one worker, got {workers}')
        self.workers = workers if workers is not None else default_workers()

    def map[T, R](self, fn: typing.Callable[[T], R], items: typing.Iterable[T]) -> typing.Iterator[R]:
        items = list(items)
        workers = min(self.workers, len(items))
        if workers <= 1:
            yield from map(fn, items)
            return

        chunksize = max(1, len(items) // (4 * workers))
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
            yield from executor.map(fn, items, chunksize=chunksize)
