"""Per-path random substreams.

Path ``i`` of a run seeded with ``seed`` draws from a Philox generator keyed by
``SeedSequence(seed, spawn_key=(i,))``.  A path's increments therefore do not
depend on how paths are grouped into chunks or threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

DEFAULT_SEED = 20240607


def path_generator(seed: int, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def path_normals(seed: int, path_ids, n_steps: int, n_dims: int = 2, antithetic: bool = False) -> np.ndarray:
    """Standard normals of shape (n_steps, len(path_ids), n_dims).

    Within a step the coordinates are drawn in a fixed interleaved order.
    With ``antithetic`` paths 2k and 2k+1 share stream k with opposite signs.
    """
    path_ids = np.asarray(path_ids, dtype=np.int64)
    out = np.empty((n_steps, len(path_ids), n_dims))
    for col, i in enumerate(path_ids):
        stream = i // 2 if antithetic else i
        z = path_generator(seed, stream).standard_normal((n_steps, n_dims))
        if antithetic and i % 2 == 1:
            z = -z
        out[:, col, :] = z
    return out


def chunk_ranges(n_paths: int, n_steps: int, n_dims: int = 2, budget: float = 2.0e7):
    """Split path indices into chunks whose normals fit ~``budget`` doubles."""
    size = int(max(64, min(8192, budget // max(1, n_steps * n_dims))))
    return [(lo, min(lo + size, n_paths)) for lo in range(0, n_paths, size)]


def map_chunks(fn, chunks, threads: int = 1):
    """Apply ``fn(lo, hi)`` to every chunk, preserving chunk order in the result."""
    if threads <= 1 or len(chunks) <= 1:
        return [fn(lo, hi) for lo, hi in chunks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda c: fn(*c), chunks))
