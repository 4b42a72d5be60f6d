"""Prime tables and the offset logarithmic integral.

``Li`` is the offset integral ``Li(x) = int_2^x dt / log t`` so that
``Li(2) = 0`` and ``Li`` is a bijection from ``[2, inf)`` onto ``[0, inf)``.
"""

import math
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expi

__all__ = [
    "PrimeTable",
    "ResourceLimitError",
    "build_prime_table",
    "sieve_primes",
    "prime_upper_bound",
    "li",
    "li_inverse",
    "pnt_error_profile",
    "save_table",
    "load_table",
]

DEFAULT_MEMORY_CAP = 2 * 2**30
CACHE_ENV = "ZETA_CHAOS_CACHE"
CACHE_MAGIC = b"ZCPRIMES"

_EI_LOG2 = float(expi(math.log(2.0)))


class ResourceLimitError(MemoryError):
    """The requested table would exceed the configured memory cap."""


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PrimeTable:
    """The first ``count`` primes with derived per-prime arrays.

    ``inv_p_prefix`` has length ``count + 1`` with ``inv_p_prefix[n]`` the
    sum of ``1/p_j`` over ``j <= n`` (1-based), so ``inv_p_prefix[0] == 0``.
    """

    primes: np.ndarray
    log_p: np.ndarray
    inv_sqrt_p: np.ndarray
    inv_p_prefix: np.ndarray

    @property
    def count(self):
        return int(self.primes.size)

    def __len__(self):
        return self.count

    def prime(self, n):
        """The ``n``-th prime, 1-based."""
        if not 1 <= n <= self.count:
            raise IndexError(f"prime index {n} outside 1..{self.count}")
        return int(self.primes[n - 1])

    def inv_p_sum(self, lo, hi):
        """Sum of ``1/p_j`` for 1-based ``lo <= j <= hi``."""
        return float(self.inv_p_prefix[hi] - self.inv_p_prefix[lo - 1])

    def head(self, n):
        """Table restricted to the first ``n`` primes (views, no copy)."""
        if n > self.count:
            raise IndexError(f"table holds {self.count} primes, asked for {n}")
        return PrimeTable(self.primes[:n], self.log_p[:n], self.inv_sqrt_p[:n],
                          self.inv_p_prefix[: n + 1])


def prime_upper_bound(n):
    """Upper bound for the ``n``-th prime (Rosser's bound for n >= 6)."""
    if n < 6:
        return 15
    ln = math.log(n)
    return int(n * (ln + math.log(ln))) + 3


def _small_sieve(limit):
    if limit < 2:
        return np.empty(0, dtype=np.int64)
    mark = np.ones(limit + 1, dtype=bool)
    mark[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if mark[p]:
            mark[p * p :: p] = False
    return np.flatnonzero(mark).astype(np.int64)


def sieve_primes(limit, max_count=None, segment=1 << 22):
    """All primes ``<= limit`` (at most ``max_count`` of them).

    Segmented odd-only sieve of Eratosthenes; memory per segment is
    ``segment`` bytes plus the output.
    """
    if limit < 2:
        return np.empty(0, dtype=np.int64)
    base = _small_sieve(math.isqrt(limit) + 1)
    odd_base = base[1:]
    chunks = [np.array([2], dtype=np.int64)]
    found = 1
    low = 3
    while low <= limit and (max_count is None or found < max_count):
        high = min(low + 2 * segment, limit + 1)  # exclusive, low odd
        n_odd = (high - low + 1) // 2
        mask = np.ones(n_odd, dtype=bool)
        for p in odd_base:
            p = int(p)
            p2 = p * p
            if p2 >= high:
                break
            start = max(p2, ((low + p - 1) // p) * p)
            if start % 2 == 0:
                start += p
            if start < high:
                mask[(start - low) // 2 :: p] = False
        seg = low + 2 * np.flatnonzero(mask).astype(np.int64)
        chunks.append(seg)
        found += seg.size
        low = high if high % 2 == 1 else high + 1
    out = np.concatenate(chunks)
    if max_count is not None:
        out = out[:max_count]
    return out


def _table_from_primes(primes):
    primes = np.ascontiguousarray(primes, dtype=np.int64)
    pf = primes.astype(np.float64)
    log_p = np.log(pf)
    inv_sqrt_p = 1.0 / np.sqrt(pf)
    # extended precision running sum keeps the prefix accurate to ~1e-15
    prefix = np.zeros(primes.size + 1)
    prefix[1:] = np.cumsum(1.0 / pf.astype(np.longdouble)).astype(np.float64)
    for a in (primes, log_p, inv_sqrt_p, prefix):
        a.setflags(write=False)
    return PrimeTable(primes, log_p, inv_sqrt_p, prefix)


def _cache_path(cache_dir, n_primes):
    return Path(cache_dir) / f"primes_{n_primes}.bin"


def save_table(table, path):
    """Write primes as magic + little-endian u64 count + u64 array."""
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<Q", table.count))
        fh.write(table.primes.astype("<u8").tobytes())


def load_table(path):
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != CACHE_MAGIC:
            raise ValueError(f"{path}: not a prime cache file")
        (count,) = struct.unpack("<Q", fh.read(8))
        data = np.frombuffer(fh.read(8 * count), dtype="<u8")
    if data.size != count:
        raise ValueError(f"{path}: truncated cache ({data.size} of {count})")
    return _table_from_primes(data.astype(np.int64))


def build_prime_table(n_primes, memory_cap=DEFAULT_MEMORY_CAP, cache_dir=None):
    """Sieve the first ``n_primes`` primes.

    If ``cache_dir`` (or the ``ZETA_CHAOS_CACHE`` environment variable) names
    a directory, tables are read from / written to it keyed by ``n_primes``.
    """
    n_primes = int(n_primes)
    if n_primes < 1:
        raise ValueError("n_primes must be >= 1")
    bound = prime_upper_bound(n_primes)
    # output arrays (4 x 8 bytes per prime) plus a default sieve segment
    need = 32 * n_primes + (1 << 22) + 8 * math.isqrt(bound)
    if need > memory_cap:
        raise ResourceLimitError(
            f"{n_primes} primes need ~{need / 2**20:.0f} MiB, cap is {memory_cap / 2**20:.0f} MiB")
    cache_dir = cache_dir if cache_dir is not None else os.environ.get(CACHE_ENV)
    if cache_dir:
        path = _cache_path(cache_dir, n_primes)
        if path.exists():
            return load_table(path)
    table = _table_from_primes(sieve_primes(bound, max_count=n_primes))
    if table.count != n_primes:  # pragma: no cover - the bound is proven
        raise RuntimeError("prime bound too small")
    if cache_dir:
        Path(cache_dir).mkdir(parents=True, exist_ok=True)
        save_table(table, _cache_path(cache_dir, n_primes))
    return table


def li(x):
    """Offset logarithmic integral ``int_2^x dt/log t`` (scalar or array)."""
    xa = np.asarray(x, dtype=np.float64)
    if np.any(xa < 2.0):
        raise ValueError("li is defined for x >= 2")
    out = expi(np.log(xa)) - _EI_LOG2
    out = np.where(xa == 2.0, 0.0, out)
    return float(out) if out.ndim == 0 else out


def li_inverse(y, rtol=1e-9, max_iter=200):
    """Inverse of :func:`li` by Newton iteration (vectorised).

    Converges to ``|li(x) - y| <= rtol * max(1, y)``; points that fail to
    settle within ``max_iter`` Newton steps are finished by bisection.
    """
    ya = np.asarray(y, dtype=np.float64)
    if np.any(ya < 0):
        raise ValueError("li_inverse needs y >= 0")
    yf = np.atleast_1d(ya).ravel()
    x = np.maximum(2.5, yf * np.log(np.maximum(yf, 3.0)))
    tol = rtol * np.maximum(1.0, yf)
    done = np.zeros(yf.size, dtype=bool)
    for _ in range(max_iter):
        f = li(x) - yf
        done = np.abs(f) <= tol
        if done.all():
            break
        step = f * np.log(x)
        x = np.where(done, x, np.maximum(2.0, x - step))
    if not done.all():
        for i in np.flatnonzero(~done):
            x[i] = _bisect_li(yf[i], tol[i])
    out = x.reshape(ya.shape)
    return float(out) if out.ndim == 0 else out


def _bisect_li(y, tol):
    lo, hi = 2.0, max(3.0, 3.0 * y * math.log(y + 3.0))
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        f = li(mid) - y
        if abs(f) <= tol or hi - lo <= 4e-16 * hi:
            return mid
        if f < 0:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError(f"li_inverse did not converge for y={y}")


def pnt_error_profile(table, sample_indices):
    """Scaled prime-number-theorem error at the given 1-based indices.

    Returns ``(n, |p_n - Li^{-1}(n)| / (n exp(-sqrt(log n))))`` pairs in the
    order given.
    """
    idx = np.asarray(sample_indices, dtype=np.int64)
    if idx.size and (idx.min() < 1 or idx.max() > table.count):
        raise IndexError("sample index outside the prime table")
    p = table.primes[idx - 1].astype(np.float64)
    n = idx.astype(np.float64)
    scale = n * np.exp(-np.sqrt(np.log(n)))
    err = np.abs(p - li_inverse(n)) / scale
    return [(int(a), float(b)) for a, b in zip(idx, err)]
