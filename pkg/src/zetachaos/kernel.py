"""Covariance kernels of the prime field and their limits.

The finite-N kernel shared by ``X_N`` and ``G_N`` is

    psi_N(u) = 1/2 * sum_{j<=N} cos(u log p_j) / p_j .

Its N -> infinity limit is computed two independent ways: the prime sum
with an integral tail correction, and ``1/2 Re(log zeta(1+iu) - A(u))``
where ``A`` collects the prime-power terms of the Euler product.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import bernoulli, expi, i0e, sici

__all__ = [
    "KernelEval",
    "KernelBound",
    "NormalizationConstants",
    "psi_n",
    "kernel_bound_check",
    "zeta",
    "zeta_1_plus_iu",
    "log_zeta_1_plus_iu",
    "a_double_sum",
    "psi_limit",
    "g_limit",
    "normalization",
    "log_i0",
    "si",
    "c_hat",
    "kernel_table",
]

_CHUNK = 1 << 22  # elements per temporary block


@dataclass(frozen=True)
class KernelEval:
    u: float
    n_primes: int | None  # None for the N -> infinity limit
    value: float
    route: str  # "prime_sum" | "zeta_route" | "bounded_form"


@dataclass(frozen=True)
class KernelBound:
    """Result of :func:`kernel_bound_check`.

    ``c`` uses ``log p_N`` as the saturation scale; ``c_literal`` uses the
    literal ``log N``.
    """

    n_primes: int
    c: float
    c_literal: float
    u_at_max: float


@dataclass(frozen=True)
class NormalizationConstants:
    n_primes: int
    beta: float
    log_norm_exact: float
    log_norm_gaussian: float

    @property
    def gap(self):
        return self.log_norm_exact - self.log_norm_gaussian


def psi_n(u, table, n_use=None):
    """Exact kernel ``psi_N(u)`` for scalar or array ``u``."""
    n_use = table.count if n_use is None else int(n_use)
    ua = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if n_use == 0:
        out = np.zeros(ua.shape)
        return float(out[0]) if np.ndim(u) == 0 else out.reshape(np.shape(u))
    log_p = table.log_p[:n_use]
    inv_p = 1.0 / table.primes[:n_use].astype(np.float64)
    flat = ua.ravel()
    out = np.empty(flat.size)
    pchunk = min(n_use, _CHUNK)
    uchunk = max(1, _CHUNK // pchunk)
    for i in range(0, flat.size, uchunk):
        us = flat[i : i + uchunk]
        partial = []
        for j in range(0, n_use, pchunk):
            c = np.cos(np.outer(us, log_p[j : j + pchunk]))
            c *= inv_p[j : j + pchunk]
            partial.append(c.sum(axis=1))
        out[i : i + uchunk] = np.sum(np.vstack(partial), axis=0)
    out *= 0.5
    if np.ndim(u) == 0:
        return float(out[0])
    return out.reshape(np.shape(u))


def kernel_bound_check(table, n_use, u_grid):
    """Largest deviation of ``psi_N`` from ``1/2 log min(1/|u|, log N)``.

    The saturation level is taken as ``log p_N``; the variant with the
    literal ``log N`` is reported alongside.
    """
    u = np.abs(np.asarray(u_grid, dtype=np.float64))
    if np.any(u <= 0) or np.any(u > 1):
        raise ValueError("u_grid must lie in (0, 1]")
    psi = psi_n(u, table, n_use)
    log_pn = math.log(table.primes[n_use - 1])
    dev = np.abs(psi - 0.5 * np.log(np.minimum(1.0 / u, log_pn)))
    dev_lit = np.abs(psi - 0.5 * np.log(np.minimum(1.0 / u, max(math.log(n_use), 1.0))))
    k = int(np.argmax(dev))
    return KernelBound(int(n_use), float(dev[k]), float(dev_lit.max()), float(u[k]))


# ---------------------------------------------------------------------------
# zeta on the line Re s = 1 and the prime-power series A(u)

def _borwein_d(n):
    # d_k = n * sum_{i<=k} (n+i-1)! 4^i / ((n-i)! (2i)!), exact integers
    d, acc = [], 0
    for i in range(n + 1):
        acc += math.factorial(n + i - 1) * 4**i * n // (math.factorial(n - i) * math.factorial(2 * i))
        d.append(acc)
    return d


_BORWEIN_N = 48
_BORWEIN_D = _borwein_d(_BORWEIN_N)
_BORWEIN_COEF = np.array(
    [(-1) ** k * float(_BORWEIN_D[k] - _BORWEIN_D[-1]) / float(_BORWEIN_D[-1]) for k in range(_BORWEIN_N)]
)
_BORWEIN_LOGK = np.log(np.arange(1, _BORWEIN_N + 1, dtype=np.float64))


def zeta_1_plus_iu(u):
    """``zeta(1 + iu)`` via the alternating eta series with Borwein weights.

    ``zeta(s) = eta(s) / (1 - 2^{1-s})``; on ``Re s = 1`` the denominator is
    ``1 - 2^{-iu}``, evaluated without cancellation.  Valid for
    ``0 < |u| <= 4``.
    """
    ua = np.asarray(u, dtype=np.float64)
    if np.any(ua == 0):
        raise ValueError("zeta has a pole at s = 1 (u = 0)")
    if np.any(np.abs(ua) > 4):
        raise ValueError("zeta_1_plus_iu supports 0 < |u| <= 4")
    flat = ua.ravel()
    s = 1.0 + 1j * flat
    terms = np.exp(-np.outer(s, _BORWEIN_LOGK))  # (k+1)^{-s}
    eta = -(terms @ _BORWEIN_COEF)
    a = flat * math.log(2.0)
    denom = 2.0 * np.sin(0.5 * a) ** 2 + 1j * np.sin(a)  # 1 - exp(-i a)
    out = eta / denom
    return complex(out[0]) if ua.ndim == 0 else out.reshape(ua.shape)


def log_zeta_1_plus_iu(u):
    """Logarithm of ``zeta(1+iu)`` on the branch continuous from the pole.

    The argument is tracked along ``(0, u]`` starting from ``-pi/2`` (the
    phase of ``1/(iu)`` near the pole) and unwrapped.
    """
    ua = np.asarray(u, dtype=np.float64)
    out = np.empty(ua.size, dtype=complex)
    for i, x in enumerate(ua.ravel()):
        path = np.sign(x) * np.geomspace(1e-6, abs(x), 256)
        z = zeta_1_plus_iu(path)
        # near the pole zeta ~ 1/(iu): the principal angle there is the branch
        ang = np.unwrap(np.angle(z))
        out[i] = math.log(abs(z[-1])) + 1j * ang[-1]
    return complex(out[0]) if ua.ndim == 0 else out.reshape(ua.shape)


_EM_TERMS = 16
_B2J = bernoulli(2 * _EM_TERMS)[2::2]  # B_2, B_4, ..., B_{2m}
_FACT2J = np.array([math.factorial(2 * j) for j in range(1, _EM_TERMS + 1)], dtype=np.float64)


def zeta(s):
    """Riemann zeta for complex ``s`` with ``Re s > 0``, ``s != 1``.

    Euler-Maclaurin summation with the cutoff scaled to ``|Im s|``; used
    for the large-argument values needed by :func:`a_double_sum`.
    """
    s = complex(s)
    if s == 1:
        raise ValueError("zeta has a pole at s = 1")
    n_cut = int(20 + abs(s) / math.pi)
    n = np.arange(1, n_cut, dtype=np.float64)
    head = np.sum(np.exp(-s * np.log(n)))
    big_n = float(n_cut)
    tail = big_n ** (1 - s) / (s - 1) + 0.5 * big_n ** (-s)
    rising = s
    power = big_n ** (-s - 1)
    for j in range(_EM_TERMS):
        tail += _B2J[j] / _FACT2J[j] * rising * power
        rising *= (s + 2 * j + 1) * (s + 2 * j + 2)
        power /= big_n * big_n
    return complex(head + tail)


_MOBIUS = [0, 1, -1, -1, 0, -1, 1, -1, 0, 0, 1, -1, 0, -1, 1, 1, 0, -1, 0, -1, 0, 1, 1, -1, 0, 0, 1, 0, 0, -1, -1]
_SMALL_PRIMES = np.array([p for p in range(2, 1000) if all(p % q for q in range(2, int(p**0.5) + 1))], dtype=np.float64)
_Q = 1000.0  # primes below Q are summed explicitly


def _log_zeta_rough(w):
    """``log zeta(w) + sum_{p<Q} log(1 - p^{-w})`` for ``Re w >= 2``."""
    val = np.log(zeta(w))
    val += np.sum(np.log1p(-np.exp(-w * np.log(_SMALL_PRIMES))))
    return complex(val)


def _prime_zeta_rough(z, tol):
    """``sum_{p > Q} p^{-z}`` by Moebius inversion of ``log zeta``."""
    total = 0j
    sigma = z.real
    for n in range(1, len(_MOBIUS)):
        # |log zeta_Q(n z)| <= Q^{1 - n sigma} / (n sigma - 1)
        if _Q ** (1 - n * sigma) / (n * sigma - 1) / n < tol:
            break
        if _MOBIUS[n]:
            total += _MOBIUS[n] / n * _log_zeta_rough(n * z)
    return total


def a_double_sum(u, tol=1e-16):
    """``A(u) = sum_p sum_{k>=2} p^{-k(1+iu)} / k``.

    Primes below 1000 are summed directly; the remaining primes enter
    through the prime zeta function ``P(ks)`` obtained by Moebius
    inversion.  Returns ``(value, tail_bound)`` where ``tail_bound``
    majorises the discarded ``k`` terms.
    """
    s = 1.0 + 1j * float(u)
    z = np.exp(-s * np.log(_SMALL_PRIMES))
    # sum_{k>=2} z^k / k = -log(1 - z) - z, summed as a series (|z| <= 1/2)
    head = 0j
    zk = z * z
    for k in range(2, 80):
        head += np.sum(zk) / k
        zk = zk * z
    tail = 0j
    k = 2
    while True:
        bound = _Q ** (1 - k) / ((k - 1) * k)
        if bound < tol:
            break
        tail += _prime_zeta_rough(k * s, tol) / k
        k += 1
    tail_bound = sum(_Q ** (1 - j) / ((j - 1) * j) for j in range(k, k + 200))
    return complex(head + tail), float(tail_bound)


def _prime_route(u, table):
    """``psi_N(u)`` plus the tail ``sum_{p > p_N} cos(u log p)/(2p)``.

    The tail is ``int_{p_N}^inf cos(u log t) / (t log t) dt = -Ci(|u| log p_N)``
    corrected by the boundary term from ``pi(p_N) = N``.
    """
    n = table.count
    big_p = float(table.primes[-1])
    head = psi_n(u, table, n)
    x = abs(u) * math.log(big_p)
    integral = -sici(x)[1]
    li_true = float(expi(math.log(big_p)))
    boundary = -math.cos(u * math.log(big_p)) / big_p * (n - li_true)
    return head + 0.5 * (integral + boundary)


def psi_limit(u, route="zeta", table=None):
    """Limit kernel ``psi(u) = lim_N psi_N(u)`` for ``0 < |u| <= 2``.

    ``route="zeta"`` evaluates ``1/2 (log|zeta(1+iu)| - Re A(u))``;
    ``route="prime_sum"`` needs a (large) ``table`` and adds an integral
    tail to the finite prime sum.
    """
    ua = np.asarray(u, dtype=np.float64)
    if np.any(ua == 0):
        raise ValueError("the limit kernel is singular at u = 0")
    if np.any(np.abs(ua) > 2):
        raise ValueError("psi_limit supports 0 < |u| <= 2")
    flat = ua.ravel()
    if route == "zeta":
        vals = [0.5 * (math.log(abs(zeta_1_plus_iu(x))) - a_double_sum(x)[0].real) for x in flat]
    elif route == "prime_sum":
        if table is None:
            raise ValueError("the prime_sum route needs a prime table")
        vals = [_prime_route(x, table) for x in flat]
    else:
        raise ValueError(f"unknown route {route!r}")
    out = np.array(vals)
    return float(out[0]) if ua.ndim == 0 else out.reshape(ua.shape)


def g_limit(u, route="zeta", table=None):
    """Smooth remainder ``g(u) = psi(u) - 1/2 log(1/|u|)``."""
    return psi_limit(u, route, table) - 0.5 * np.log(1.0 / np.abs(np.asarray(u, dtype=np.float64)))


def log_i0(x):
    """``log I_0(x)`` without overflow."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    return np.log(i0e(x)) + x


def normalization(table, n_use, beta):
    """Exact and Gaussian log-normalisations of ``exp(beta X_N)``.

    ``E exp(beta X_N(x)) = prod_j I_0(beta / sqrt(p_j))`` exactly; the
    Gaussian field gives ``exp(beta^2/4 sum 1/p_j)``.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    n_use = int(n_use)
    if n_use == 0 or beta == 0:
        return NormalizationConstants(n_use, float(beta), 0.0, 0.0)
    exact = float(np.sum(log_i0(beta * table.inv_sqrt_p[:n_use])))
    gauss = 0.25 * beta * beta * float(table.inv_p_prefix[n_use])
    return NormalizationConstants(n_use, float(beta), exact, gauss)


def si(k):
    """Sine integral ``int_0^k sin(y)/y dy``."""
    out = sici(np.asarray(k, dtype=np.float64))[0]
    return float(out) if np.ndim(out) == 0 else out


def c_hat(k):
    """Fourier transform of ``max(-log|x|, 0)``: ``2 Si(k) / k`` (2 at 0)."""
    ka = np.abs(np.asarray(k, dtype=np.float64))
    out = np.full(ka.shape, 2.0)
    nz = ka > 1e-8
    out[nz] = 2.0 * sici(ka[nz])[0] / ka[nz]
    small = ~nz
    # 2 Si(k)/k = 2 (1 - k^2/18 + ...) near 0
    out[small] = 2.0 - ka[small] ** 2 / 9.0
    return float(out) if out.ndim == 0 else out


def kernel_table(u_grid, table, n_use, limit_table=None):
    """Rows ``(u, psi_N, psi_limit_zeta, psi_limit_prime, g)`` for export.

    ``u = 0`` is skipped (the limit kernel has a pole there); skipped lags
    are returned as the second element.
    """
    rows, skipped = [], []
    limit_table = table if limit_table is None else limit_table
    for u in np.asarray(u_grid, dtype=np.float64):
        if u == 0:
            skipped.append(0.0)
            continue
        pn = psi_n(u, table, n_use)
        if abs(u) <= 2:
            z = psi_limit(u, "zeta")
            pr = psi_limit(u, "prime_sum", limit_table)
            g = z - 0.5 * math.log(1.0 / abs(u))
        else:
            z = pr = g = float("nan")
        rows.append((float(u), pn, z, pr, g))
    return rows, skipped
