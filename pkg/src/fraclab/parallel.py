"""Order-preserving parallel map over immutable inputs."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(threads: int) -> int:
    """0 means auto (cpu count); negative values are rejected."""
    if threads < 0:
        raise ValueError(f"threads must be >= 0, got {threads}")
    if threads == 0:
        return os.cpu_count() or 1
    return threads


def parallel_map(fn, items, threads: int = 1) -> list:
    """Map fn over items, results in input order (deterministic reduction)."""
    items = list(items)
    n = resolve_threads(threads)
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(fn, items))
