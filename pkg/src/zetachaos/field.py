"""Sampling and grid evaluation of the prime field and its Gaussian twin.

    X_N(x) = sum_{j<=N} p_j^{-1/2} cos(x log p_j - theta_j)
    G_N(x) = sum_{j<=N} (2 p_j)^{-1/2} (W1_j cos(x log p_j) + W2_j sin(x log p_j))

Grids are uniform.  The trigonometric basis ``exp(i x_k log p_j)`` is built
with a rotation recurrence that is re-synchronised against direct
evaluation every ``RESYNC`` grid steps, so a basis row costs one complex
multiply per point instead of a sine and a cosine.
"""

from dataclasses import dataclass, field

import numpy as np

from . import rng

__all__ = [
    "RESYNC",
    "PhaseVector",
    "GaussianDraws",
    "FieldGrid",
    "BlockSchedule",
    "BlockSample",
    "ErrorFields",
    "uniform_grid",
    "trig_basis",
    "FieldEvaluator",
    "sample_phases",
    "sample_gaussians",
    "eval_field",
    "eval_gaussian_field",
    "build_block_schedule",
    "eval_block",
    "gaussian_conditional_fill",
    "error_fields",
]

RESYNC = 1024
LABELS = ("X", "G", "Y_m", "Z_m", "Ytilde_m", "Ztilde_m", "E1", "E2", "E_total", "Gtilde_t")
_PRIME_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class PhaseVector:
    """One draw of the i.i.d. uniform phases ``theta_j`` in ``[0, 2 pi)``."""

    table: object = field(repr=False)
    theta: np.ndarray
    seed: int
    stream_id: int

    @property
    def n_primes(self):
        return int(self.theta.size)


@dataclass(frozen=True, eq=False)
class GaussianDraws:
    table: object = field(repr=False)
    w1: np.ndarray
    w2: np.ndarray
    seed: int
    stream_id: int

    @property
    def n_primes(self):
        return int(self.w1.size)


@dataclass(eq=False)
class FieldGrid:
    """Field values on ``x_k = x0 + k (x1 - x0) / (M - 1)``, ``k < M``."""

    values: np.ndarray
    label: str
    n_primes: int | None = None
    block: int | None = None
    x0: float = 0.0
    x1: float = 1.0

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"unknown field label {self.label!r}")

    @property
    def grid_size(self):
        return int(self.values.size)

    @property
    def x(self):
        return uniform_grid(self.grid_size, self.x0, self.x1)

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def to_csv(self, path):
        data = np.column_stack([self.x, self.values])
        np.savetxt(path, data, delimiter=",", header="x,value", comments="", fmt="%.17g")


@dataclass(frozen=True)
class BlockSchedule:
    """Cut points ``r_1 = 1 < r_2 < ...`` (1-based prime indices).

    Block ``m`` (1-based) holds primes ``r_m .. r_{m+1} - 1``.  Only full
    blocks inside the prime table are kept.
    """

    alpha: float
    cuts: np.ndarray
    gap_ok: np.ndarray
    ratio_ok: np.ndarray

    @property
    def n_blocks(self):
        return int(self.cuts.size - 1)

    def block_range(self, m):
        """1-based inclusive prime index range ``(lo, hi)`` of block ``m``."""
        if not 1 <= m <= self.n_blocks:
            raise IndexError(f"block {m} outside 1..{self.n_blocks}")
        return int(self.cuts[m - 1]), int(self.cuts[m] - 1)

    def covered(self, n):
        """Number of primes in blocks ``1..n``."""
        return int(self.cuts[n] - 1)


@dataclass
class BlockSample:
    m: int
    C: float
    S: float
    b: float
    v1: float = float("nan")
    v2: float = float("nan")
    coupled: bool = False

    def mismatch(self):
        """``|(C, S) - b (v1, v2)|``."""
        return float(np.hypot(self.C - self.b * self.v1, self.S - self.b * self.v2))


@dataclass
class ErrorFields:
    e1: FieldGrid
    e2: FieldGrid
    total: FieldGrid
    sup_e1: float
    sup_e2: float
    sup_total: float


def uniform_grid(grid_size, x0=0.0, x1=1.0):
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    return x0 + (x1 - x0) * np.arange(grid_size) / (grid_size - 1)


def trig_basis(log_p, grid_size, x0=0.0, x1=1.0):
    """``exp(i x_k log p_j)`` as a complex ``(grid_size, len(log_p))`` array.

    Within each run of ``RESYNC`` points the row is advanced by the
    rotation ``exp(i h log p)``; each run starts from a direct evaluation.
    """
    log_p = np.asarray(log_p, dtype=np.float64)
    h = (x1 - x0) / (grid_size - 1)
    steps = min(RESYNC, grid_size)
    rot = np.exp(1j * h * log_p)
    powers = np.empty((steps, log_p.size), dtype=np.complex128)
    powers[0] = 1.0
    for k in range(1, steps):
        np.multiply(powers[k - 1], rot, out=powers[k])
    out = np.empty((grid_size, log_p.size), dtype=np.complex128)
    for start in range(0, grid_size, RESYNC):
        stop = min(start + RESYNC, grid_size)
        anchor = np.exp(1j * (x0 + start * h) * log_p)
        np.multiply(powers[: stop - start], anchor, out=out[start:stop])
    return out


class FieldEvaluator:
    """Batched evaluation of ``sum_j (A_rj cos(x log p_j) + B_rj sin(x log p_j))``.

    Holds the real cosine/sine basis for the first ``n_primes`` primes on a
    fixed uniform grid; each batch is two matrix products.
    """

    def __init__(self, table, n_primes, grid_size, x0=0.0, x1=1.0):
        self.table = table
        self.n_primes = int(n_primes)
        self.grid_size = int(grid_size)
        self.x0, self.x1 = float(x0), float(x1)
        cos_b = np.empty((self.n_primes, self.grid_size))
        sin_b = np.empty((self.n_primes, self.grid_size))
        for j in range(0, self.n_primes, _PRIME_CHUNK):
            k = min(j + _PRIME_CHUNK, self.n_primes)
            e = trig_basis(table.log_p[j:k], self.grid_size, x0, x1)
            cos_b[j:k] = e.real.T
            sin_b[j:k] = e.imag.T
        self.cos_b, self.sin_b = cos_b, sin_b

    @property
    def x(self):
        return uniform_grid(self.grid_size, self.x0, self.x1)

    def combine(self, a, b, lo=0, hi=None):
        """Rows of ``a @ cos_basis + b @ sin_basis`` over primes ``lo:hi``."""
        hi = self.n_primes if hi is None else hi
        return a @ self.cos_b[lo:hi] + b @ self.sin_b[lo:hi]

    def phase_fields(self, theta, cuts):
        """``X_N`` rows for every ``N`` in ``cuts`` (increasing), sharing phases.

        ``theta`` has shape ``(R, n_primes)``; returns ``{N: (R, M) array}``.
        Partial sums are accumulated cut to cut, so nested ``N`` come free.
        """
        amp = self.table.inv_sqrt_p[: self.n_primes]
        out, acc, lo = {}, None, 0
        for n in cuts:
            if n > self.n_primes:
                raise ValueError(f"N={n} exceeds evaluator primes {self.n_primes}")
            if n > lo:
                th = theta[:, lo:n]
                part = self.combine(np.cos(th) * amp[lo:n], np.sin(th) * amp[lo:n], lo, n)
                acc = part if acc is None else acc + part
            elif acc is None:
                acc = np.zeros((theta.shape[0], self.grid_size))
            out[n] = acc.copy()
            lo = n
        return out


def sample_phases(table, seed, stream_id=0):
    theta = 2.0 * np.pi * rng.uniforms(seed, stream_id, table.count, rng.PHASES)
    theta.setflags(write=False)
    return PhaseVector(table, theta, int(seed), int(stream_id))


def sample_gaussians(table, seed, stream_id=0):
    w1 = rng.normals(seed, stream_id, table.count, rng.GAUSS_W1)
    w2 = rng.normals(seed, stream_id, table.count, rng.GAUSS_W2)
    return GaussianDraws(table, w1, w2, int(seed), int(stream_id))


def _eval_sum(table, n_use, grid_size, ca, sa, x0, x1):
    """``sum_j ca_j cos(x log p_j) + sa_j sin(x log p_j)`` on the grid."""
    out = np.zeros(grid_size)
    for j in range(0, n_use, _PRIME_CHUNK):
        k = min(j + _PRIME_CHUNK, n_use)
        e = trig_basis(table.log_p[j:k], grid_size, x0, x1)
        out += e.real @ ca[j:k] + e.imag @ sa[j:k]
    return out


def eval_field(phases, n_use=None, grid_size=1025, x0=0.0, x1=1.0):
    """``X_{n_use}`` on a uniform grid of ``grid_size`` points."""
    n_use = phases.n_primes if n_use is None else int(n_use)
    if n_use > phases.n_primes:
        raise ValueError("n_use exceeds the number of sampled phases")
    table = phases.table
    amp = table.inv_sqrt_p[:n_use]
    th = phases.theta[:n_use]
    vals = _eval_sum(table, n_use, grid_size, amp * np.cos(th), amp * np.sin(th), x0, x1)
    return FieldGrid(vals, "X", n_primes=n_use, x0=x0, x1=x1)


def eval_gaussian_field(draws, n_use=None, grid_size=1025, x0=0.0, x1=1.0):
    """``G_{n_use}`` on a uniform grid."""
    n_use = draws.n_primes if n_use is None else int(n_use)
    if n_use > draws.n_primes:
        raise ValueError("n_use exceeds the number of Gaussian draws")
    table = draws.table
    amp = table.inv_sqrt_p[:n_use] / np.sqrt(2.0)
    vals = _eval_sum(table, n_use, grid_size, amp * draws.w1[:n_use], amp * draws.w2[:n_use], x0, x1)
    return FieldGrid(vals, "G", n_primes=n_use, x0=x0, x1=x1)


# ---------------------------------------------------------------------------
# blocks

def _raw_cuts(alpha, limit):
    """Distinct values of ``floor(exp(m^alpha))``, ``m >= 1``, up to ``limit``.

    ``r`` is attained iff some integer ``m`` lies in
    ``[log(r)^{1/alpha}, log(r+1)^{1/alpha})``; enumerating ``r`` instead of
    ``m`` keeps small ``alpha`` (astronomically many ``m``) cheap.
    """
    r = np.arange(2, int(limit) + 1, dtype=np.float64)
    with np.errstate(over="ignore"):
        lo = np.log(r) ** (1.0 / alpha)
        hi = np.log(r + 1.0) ** (1.0 / alpha)
    hit = (np.ceil(lo) < hi) | (hi - lo >= 1.0)
    return r[hit].astype(np.int64).tolist()


def build_block_schedule(alpha, table):
    """Cut points from ``r_m = floor(exp(m^alpha))``, made admissible.

    Raw cuts are deduplicated and consecutive blocks merged until every
    block has at least two primes and ``p_{r_{m+1}-1} / p_{r_m} <= 2``;
    ``r_1`` is forced to 1.  Should a minimal merge overshoot the ratio
    (it cannot for ``alpha < 2/5`` in practice) the block is cut two
    primes after its start, which Bertrand's postulate keeps admissible.
    """
    alpha = float(alpha)
    if not 0.0 < alpha < 0.4:
        raise ValueError("alpha must lie in (0, 2/5)")
    n = table.count
    raw = _raw_cuts(alpha, n + 1)
    primes = table.primes
    cuts = [1]
    i = 0
    while True:
        r = cuts[-1]
        while i < len(raw) and raw[i] < r + 2:
            i += 1
        if i == len(raw) or raw[i] - 1 > n:
            break
        c = raw[i]
        if primes[c - 2] > 2 * primes[r - 1]:
            c = r + 2
        else:
            i += 1
        cuts.append(c)
    cuts = np.asarray(cuts, dtype=np.int64)
    lo, hi = cuts[:-1], cuts[1:] - 1
    gap_ok = (cuts[1:] - cuts[:-1]) >= 2
    ratio_ok = primes[hi - 1] <= 2 * primes[lo - 1]
    return BlockSchedule(alpha, cuts, gap_ok, ratio_ok)


def _block_b(table, lo, hi):
    return float(np.sqrt(0.5 * table.inv_p_sum(lo, hi)))


def eval_block(source, schedule, m, grid_size=1025, frozen=False, x0=0.0, x1=1.0):
    """Block field of ``X`` (``Y_m``) or of ``G`` (``Z_m``) on a grid.

    ``source`` is a :class:`PhaseVector` or :class:`GaussianDraws`.  With
    ``frozen=True`` the block's x-dependence is frozen at its first prime,
    giving ``Ytilde_m`` / ``Ztilde_m``.  Returns ``(FieldGrid, BlockSample)``.
    """
    lo, hi = schedule.block_range(m)
    table = source.table
    if hi > source.n_primes:
        raise IndexError(f"block {m} needs {hi} primes, source has {source.n_primes}")
    amp = table.inv_sqrt_p[lo - 1 : hi]
    b = _block_b(table, lo, hi)
    if isinstance(source, PhaseVector):
        th = source.theta[lo - 1 : hi]
        ca, sa = amp * np.cos(th), amp * np.sin(th)
        sample = BlockSample(m, float(np.sum(ca)), float(np.sum(sa)), b)
        label = "Ytilde_m" if frozen else "Y_m"
    else:
        a = amp / np.sqrt(2.0)
        ca, sa = a * source.w1[lo - 1 : hi], a * source.w2[lo - 1 : hi]
        s1, s2 = float(np.sum(ca)), float(np.sum(sa))
        sample = BlockSample(m, float("nan"), float("nan"), b, s1 / b, s2 / b)
        label = "Ztilde_m" if frozen else "Z_m"
    x = uniform_grid(grid_size, x0, x1)
    if frozen:
        lp = table.log_p[lo - 1]
        vals = np.cos(x * lp) * np.sum(ca) + np.sin(x * lp) * np.sum(sa)
    else:
        e = trig_basis(table.log_p[lo - 1 : hi], grid_size, x0, x1)
        vals = e.real @ ca + e.imag @ sa
    return FieldGrid(vals, label, n_primes=hi, block=m, x0=x0, x1=x1), sample


def gaussian_conditional_fill(table, block_range, target_sums, seed, stream_id=0):
    """Per-prime Gaussians of a block with prescribed weighted sums.

    Draws ``Z ~ N(0, I)`` and returns ``W = Z + a (s - a.Z) / |a|^2`` for each
    coordinate, with ``a_j = (2 p_j)^{-1/2}``, so that ``sum_j a_j W_j = s``
    exactly.  If ``s ~ N(0, |a|^2)`` independently, ``W`` is standard normal.
    ``block_range`` is the 1-based inclusive ``(lo, hi)`` prime range.
    """
    lo, hi = block_range
    a = table.inv_sqrt_p[lo - 1 : hi] / np.sqrt(2.0)
    a2 = float(np.dot(a, a))
    g = rng.generator(seed, stream_id, rng.FILL)
    out = []
    for s in target_sums:
        z = g.standard_normal(a.size)
        if a.size == 1:  # the constraint pins the single coordinate
            out.append(np.array([s / a[0]]))
        else:
            out.append(z + a * ((s - float(np.dot(a, z))) / a2))
    return out[0], out[1]


def error_fields(phases, draws, samples, schedule, n, grid_size=1025, x0=0.0, x1=1.0):
    """Coupling and freezing errors over blocks ``1..n``.

    ``samples[m-1]`` must carry the coupled ``(v1, v2)`` of block ``m``;
    ``draws`` must hold the per-prime Gaussians filled consistently with
    them.  Returns the fields ``E1 = sum (Ytilde_m - Ztilde_m)``,
    ``E2 = sum (Y_m - Ytilde_m + Ztilde_m - Z_m)`` and their sum.
    """
    if len(samples) < n:
        raise ValueError(f"need couplings for {n} blocks, got {len(samples)}")
    e1 = np.zeros(grid_size)
    e2 = np.zeros(grid_size)
    x = uniform_grid(grid_size, x0, x1)
    table = phases.table
    for m in range(1, n + 1):
        smp = samples[m - 1]
        if smp is None or not np.isfinite(smp.v1) or not np.isfinite(smp.v2):
            raise ValueError(f"block {m} has no coupling")
        y, ys = eval_block(phases, schedule, m, grid_size, False, x0, x1)
        z, _ = eval_block(draws, schedule, m, grid_size, False, x0, x1)
        lp = table.log_p[schedule.block_range(m)[0] - 1]
        c, s = np.cos(x * lp), np.sin(x * lp)
        y_frozen = c * ys.C + s * ys.S
        z_frozen = smp.b * (c * smp.v1 + s * smp.v2)
        e1 += y_frozen - z_frozen
        e2 += y.values - y_frozen + z_frozen - z.values
    tot = e1 + e2
    g = lambda v, lab: FieldGrid(v, lab, n_primes=schedule.covered(n), x0=x0, x1=x1)
    return ErrorFields(g(e1, "E1"), g(e2, "E2"), g(tot, "E_total"),
                       float(np.abs(e1).max()), float(np.abs(e2).max()), float(np.abs(tot).max()))
