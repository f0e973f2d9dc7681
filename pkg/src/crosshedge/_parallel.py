"""Deterministic block-parallel map over path indices."""

import os
from concurrent.futures import ThreadPoolExecutor

BLOCK = 8192


def n_workers() -> int:
    cap = os.environ.get("CROSSHEDGE_THREADS", "").strip()
    avail = os.cpu_count() or 1
    if cap:
        return max(1, min(int(cap), avail))
    return avail


def path_blocks(n_paths, block=BLOCK):
    return [(s, min(s + block, n_paths)) for s in range(0, n_paths, block)]


def map_blocks(fn, n_paths, block=BLOCK):
    """Apply fn(start, stop) to each block; results come back in block order.

    Every path's values depend only on its own index, so the output does not
    depend on the worker count or the block size.
    """
    blocks = path_blocks(n_paths, block)
    workers = min(n_workers(), len(blocks))
    if workers <= 1:
        return [fn(a, b) for a, b in blocks]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda ab: fn(*ab), blocks))
