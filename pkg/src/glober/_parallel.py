"""Ordered thread-pool map with a process-wide default size."""

import os
from concurrent.futures import ThreadPoolExecutor

from .exceptions import ValidationError

THREADS_ENV = "GLOBER_THREADS"


def thread_count(threads=None):
    """Resolve a worker count: explicit value, else ``$GLOBER_THREADS``, else 1."""
    if threads is None:
        raw = os.environ.get(THREADS_ENV, "").strip()
        if not raw:
            return 1
        try:
            threads = int(raw)
        except ValueError as exc:
            raise ValidationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if threads < 1:
        raise ValidationError(f"thread count must be >= 1, got {threads}")
    return int(threads)


def ordered_map(func, items, threads=None):
    """``[func(x) for x in items]``, optionally on a thread pool; order is preserved."""
    items = list(items)
    n = thread_count(threads)
    if n == 1 or len(items) < 2:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(n, len(items))) as pool:
        return list(pool.map(func, items))
