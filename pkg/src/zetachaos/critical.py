"""Smoothed Gaussian chain and the white-noise reference field.

With ``L_j = Li^{-1}(j)`` the four approximating fields have stationary
covariances (Ito isometry for the Wiener-integral stages):

    GN1(u) = 1/2 sum_{j<=N} cos(u log L_j) / L_j
    GN2(u) = sum_{j<=N} (sin(u log L_{j+1}) - sin(u log L_j)) / (2 u (L_{j+1} - L_j))
    GN3(u) = 1/2 int_a^b cos(u s) / s ds = 1/2 (Ci(u b) - Ci(u a))
    GN4(u) = 1/(2 pi) int_a^b Chat(s) cos(u s) ds

with ``a = log L_1``, ``b = log L_{N+1}`` and ``Chat(s) = 2 Si(s) / s``.
The reference field ``Gtilde_t`` has the exact covariance

    1/2 (1 + t - e^t |x - y|)   for |x - y| <= e^{-t}
    -1/2 log |x - y|            for e^{-t} <= |x - y| <= 1
"""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import sici

from . import rng
from .field import FieldGrid, uniform_grid
from .kernel import c_hat
from .primes import li_inverse

__all__ = [
    "STAGES",
    "ComparisonReport",
    "FactorizationError",
    "chain_covariance",
    "reference_covariance",
    "reference_factor",
    "sample_reference_field",
    "sample_reference_fields",
    "comparison_conditions",
    "stage_gaps",
    "write_comparison_csv",
]

STAGES = ("GN1", "GN2", "GN3", "GN4")
DELTAS = (0.05, 0.1, 0.2)
CLIP = -1e-10
MAX_CLIPPED = 1e-6


class FactorizationError(np.linalg.LinAlgError):
    pass


@dataclass
class ComparisonReport:
    n_primes: int
    t: float
    sup_diff: float
    offdiag: dict
    diag_gap: float  # GN4(0) - t / 2

    def row(self):
        return [self.n_primes, self.t, self.sup_diff] + [self.offdiag[d] for d in DELTAS]


_li_cache = {}


def _li_nodes(n):
    """``Li^{-1}(j)`` for ``j = 1 .. n + 1``."""
    if n not in _li_cache:
        _li_cache.clear()
        _li_cache[n] = li_inverse(np.arange(1, n + 2, dtype=np.float64), rtol=1e-13)
    return _li_cache[n]


_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)


def _gn4(u, n):
    nodes = _li_nodes(n)
    a, b = math.log(nodes[0]), math.log(nodes[-1])
    edges = np.linspace(a, b, max(2, int(math.ceil(b - a)) + 1))
    lo, hi = edges[:-1, None], edges[1:, None]
    s = (0.5 * (hi - lo) * _GL_X + 0.5 * (hi + lo)).ravel()
    w = (0.5 * (hi - lo) * _GL_W).ravel()
    ch = c_hat(s) * w
    out = np.empty(u.size)
    for i in range(0, u.size, 512):
        out[i : i + 512] = np.cos(np.outer(u[i : i + 512], s)) @ ch
    return out / (2.0 * np.pi)


def chain_covariance(stage, n, x, y=0.0):
    """``E G_{N,k}(x) G_{N,k}(y)`` for ``stage`` in ``GN1 .. GN4``.

    All stages are stationary, so only ``|x - y|`` matters; array inputs
    broadcast.
    """
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}")
    n = int(n)
    if n < 1:
        raise ValueError("N must be >= 1")
    u = np.abs(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64))
    shape = u.shape
    u = u.ravel()
    nodes = _li_nodes(n)
    logs = np.log(nodes)
    if stage == "GN1":
        L, lg = nodes[:-1], logs[:-1]
        out = np.array([0.5 * np.sum(np.cos(v * lg) / L) for v in u])
    elif stage == "GN2":
        width = np.diff(nodes)
        out = np.empty(u.size)
        for i, v in enumerate(u):
            if v == 0.0:
                out[i] = 0.5 * np.sum(np.diff(logs) / width)
            else:
                out[i] = np.sum(np.diff(np.sin(v * logs)) / width) / (2.0 * v)
    elif stage == "GN3":
        a, b = logs[0], logs[-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            ci = 0.5 * (sici(u * b)[1] - sici(u * a)[1])
        out = np.where(u == 0.0, 0.5 * math.log(b / a), ci)
    else:
        out = _gn4(u, n)
    out = out.reshape(shape)
    return float(out) if out.ndim == 0 else out


def reference_covariance(t, x, y=0.0):
    """Exact covariance of ``Gtilde_t`` at ``(x, y)`` (array inputs broadcast)."""
    if t < 0:
        raise ValueError("t must be >= 0")
    d = np.abs(np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64))
    if np.any(d > 1.0 + 1e-12):
        raise ValueError("reference covariance is defined for |x - y| <= 1")
    near = d <= math.exp(-t)
    with np.errstate(divide="ignore"):
        far = -0.5 * np.log(np.where(near, 1.0, d))
    out = np.where(near, 0.5 * (1.0 + t - math.exp(t) * d), far)
    return float(out) if out.ndim == 0 else out


def reference_factor(t, grid_size):
    """Symmetric factor ``F`` with ``F F^T`` the clipped covariance matrix.

    Returns ``(F, clipped_mass)``; negative eigenvalues below ``CLIP`` count
    towards the clipped mass.
    """
    if grid_size > 4096:
        raise ValueError("grid_size must be <= 4096 for dense factorisation")
    x = uniform_grid(grid_size)
    cov = reference_covariance(t, x[:, None], x[None, :])
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    clipped = float(-vals[vals < CLIP].sum()) + 0.0  # no -0.0 when nothing is clipped
    trace = float(np.trace(cov))
    if clipped > MAX_CLIPPED * trace:
        raise FactorizationError(f"clipped eigenvalue mass {clipped:.3e} exceeds {MAX_CLIPPED} of trace")
    return vecs * np.sqrt(np.clip(vals, 0.0, None)), clipped


def sample_reference_fields(t, grid_size, n_samples, seed, stream_id=0, factor=None):
    """``(n_samples, grid_size)`` draws of ``Gtilde_t`` on ``[0, 1]``."""
    F = reference_factor(t, grid_size)[0] if factor is None else factor
    z = rng.generator(seed, stream_id, rng.REFERENCE).standard_normal((n_samples, grid_size))
    return z @ F.T


def sample_reference_field(t, grid_size, seed, stream_id=0):
    vals = sample_reference_fields(t, grid_size, 1, seed, stream_id)[0]
    return FieldGrid(vals, "Gtilde_t")


def comparison_conditions(n_list, grid_size=201, deltas=DELTAS):
    """Covariance gaps between ``G_{N,4}`` and ``Gtilde_t``, ``t = log log L_{N+1}``."""
    if grid_size < 201:
        raise ValueError("grid resolution must be >= 200 intervals")
    lags = uniform_grid(grid_size)
    out = []
    for n in n_list:
        t = math.log(math.log(_li_nodes(int(n))[-1]))
        diff = np.abs(chain_covariance("GN4", n, lags) - reference_covariance(t, lags))
        off = {}
        for d in deltas:
            sel = lags > d + 1e-12
            off[d] = float(diff[sel].max()) if sel.any() else 0.0
        gap = float(chain_covariance("GN4", n, 0.0) - 0.5 * t)
        out.append(ComparisonReport(int(n), t, float(diff.max()), off, gap))
    return out


def stage_gaps(n, lags):
    """Sup over ``lags`` of consecutive-stage covariance differences."""
    covs = {s: chain_covariance(s, n, lags) for s in STAGES}
    return {f"{a}-{b}": float(np.max(np.abs(covs[a] - covs[b]))) for a, b in zip(STAGES, STAGES[1:])}


def write_comparison_csv(reports, path, header_comment=None):
    with open(path, "w") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        fh.write("N,t,sup_diff,offdiag_005,offdiag_01,offdiag_02\n")
        for r in reports:
            fh.write(",".join(repr(float(v)) if i else str(v) for i, v in enumerate(r.row())) + "\n")
