import os
from concurrent.futures import ThreadPoolExecutor


def default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


def pmap(fn, items, threads: int | None = None) -> list:
    """Ordered map; results come back in input order whatever the thread count."""
    items = list(items)
    threads = default_threads() if threads is None else max(1, threads)
    if threads == 1 or len(items) < 2:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
