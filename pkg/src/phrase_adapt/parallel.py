"""Order-preserving chunked map over a thread pool."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")

THREADS_ENV = "PHRASE_ADAPT_THREADS"


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def chunked_map(fn: Callable[[T], R], items: Sequence[T], threads: int = 1) -> list[R]:
    """``[fn(x) for x in items]``, split into contiguous shards.

    Shards are concatenated in shard order, so the result never depends on
    ``threads``.
    """
    if threads <= 1 or len(items) < 2 * threads:
        return [fn(x) for x in items]
    size = -(-len(items) // threads)
    shards = [items[i:i + size] for i in range(0, len(items), size)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda shard: [fn(x) for x in shard], shards)
        out: list[R] = []
        for part in parts:
            out.extend(part)
    return out
