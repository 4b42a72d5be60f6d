"""Keyed counter-based random streams.

Every draw in the package comes from a Philox generator keyed by
``(seed, stream_id)``.  The fourth counter word carries a *domain* tag so
that phases, Gaussian weights and auxiliary coupling randomness drawn for
the same stream never overlap.  Draw ``j`` of a stream is therefore fixed
by ``(seed, stream_id, domain, j)`` alone, independent of evaluation order
or worker count.
"""

import numpy as np

# domain tags (fourth Philox counter word)
PHASES = 0
GAUSS_W1 = 1
GAUSS_W2 = 2
FILL = 3
COUPLING = 4
REFERENCE = 5
AUX = 6

_MASK64 = (1 << 64) - 1


def generator(seed, stream_id, domain=PHASES):
    """Return a ``numpy.random.Generator`` for one keyed stream."""
    key = np.array([int(seed) & _MASK64, int(stream_id) & _MASK64], dtype=np.uint64)
    counter = np.array([0, 0, 0, int(domain) & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def uniforms(seed, stream_id, n, domain=PHASES):
    return generator(seed, stream_id, domain).random(n)


def normals(seed, stream_id, n, domain=GAUSS_W1):
    return generator(seed, stream_id, domain).standard_normal(n)


def uniform_rows(seed, streams, n, domain=PHASES):
    """Stack ``n`` uniforms from each stream in ``streams`` (one row each)."""
    out = np.empty((len(streams), n))
    for i, s in enumerate(streams):
        out[i] = generator(seed, s, domain).random(n)
    return out


def normal_rows(seed, streams, n, domain=GAUSS_W1):
    out = np.empty((len(streams), n))
    for i, s in enumerate(streams):
        out[i] = generator(seed, s, domain).standard_normal(n)
    return out
