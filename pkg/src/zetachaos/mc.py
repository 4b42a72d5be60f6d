"""Deterministic chunked Monte Carlo.

Samples are split into fixed-size chunks by sample index, each chunk is a
pure function of its index range, and results are reassembled in chunk
order.  The worker count therefore changes wall time only, never output.
"""

from concurrent.futures import ThreadPoolExecutor

import numpy as np

CHUNK = 128


def chunk_bounds(n_samples, chunk=CHUNK):
    return [(s, min(s + chunk, n_samples)) for s in range(0, n_samples, chunk)]


def map_chunks(fn, n_samples, chunk=CHUNK, workers=1):
    """``[fn(start, stop) for each chunk]`` in chunk order."""
    bounds = chunk_bounds(n_samples, chunk)
    if workers <= 1 or len(bounds) == 1:
        return [fn(a, b) for a, b in bounds]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(lambda ab: fn(*ab), bounds))


def jackknife_se(x, n_groups=20, stat=np.mean):
    """Delete-one-group jackknife standard error of ``stat`` along axis 0."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    g = min(n_groups, n)
    if g < 2:
        return np.full(x.shape[1:], np.nan) if x.ndim > 1 else float("nan")
    groups = np.array_split(np.arange(n), g)
    reps = np.array([stat(np.delete(x, idx, axis=0), axis=0) for idx in groups])
    se = np.sqrt((g - 1) / g * np.sum((reps - reps.mean(axis=0)) ** 2, axis=0))
    return float(se) if np.ndim(se) == 0 else se
