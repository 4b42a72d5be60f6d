"""Planar couplings between normalised prime-block sums and Gaussians.

A block of primes ``p_lo .. p_hi`` gives the planar variable

    W = l^{-1} sum_j sqrt(p_hi / p_j) (cos theta_j, sin theta_j),
    l^2 = 1/2 sum_j p_hi / p_j,

which has identity covariance and equals ``(C_m, S_m) / b_m``.  Its law is
rotation invariant with radial characteristic function
``phi(rho) = prod_j J0(a_j rho)``, ``a_j = sqrt(p_hi / p_j) / l``.

Everything planar lives on one regular grid (default 256 x 256 cells on
``[-5, 5]^2``).  The block density comes from a Hankel inversion of
``phi``; the Gaussian gets exact cell masses.  The explicit coupling keeps
the common part ``min(mu, nu)`` on the diagonal and transports the excess
of ``mu`` to the excess of ``nu`` by the normalised product coupling.
"""

from dataclasses import asdict, dataclass, field
import json

import numpy as np
from scipy import stats
from scipy.optimize import linear_sum_assignment
from scipy.signal import fftconvolve
from scipy.special import j0, j1, ndtr, ndtri

from . import rng
from .field import BlockSample

__all__ = [
    "TailNotDecayedError",
    "RadialLaw",
    "RadialDensity",
    "PlanarGrid",
    "DiscreteCoupling",
    "CouplingAudit",
    "block_amplitudes",
    "block_char_profile",
    "gaussian_profile",
    "density_from_radial",
    "gridded_gaussian",
    "gridded_block",
    "excess_coupling",
    "w1_upper_bound",
    "fourier_l1_diag",
    "fourier_bound_shape",
    "empirical_w1",
    "BlockCoupler",
    "couple_block",
    "audit_block",
    "audit_blocks",
    "write_audit_json",
]

RHO_STEP = 0.005
RHO_CAP = 200.0
TAIL_TOL = 1e-8
DEGENERATE_TV = 1e-12


class TailNotDecayedError(ValueError):
    """The characteristic function is not small at the end of the rho grid."""


@dataclass(eq=False)
class RadialLaw:
    rho: np.ndarray
    phi: np.ndarray
    tag: str  # "block" or "gaussian"
    n: int | None = None

    def tail(self):
        k = max(1, self.rho.size // 50)
        return float(np.max(np.abs(self.phi[-k:])))


@dataclass(eq=False)
class RadialDensity:
    r: np.ndarray
    f: np.ndarray
    mass_defect: float


@dataclass(frozen=True)
class PlanarGrid:
    """Regular ``nx x ny`` cells on ``[x_lo, x_hi] x [y_lo, y_hi]``."""

    nx: int = 256
    ny: int = 256
    x_lo: float = -5.0
    x_hi: float = 5.0
    y_lo: float = -5.0
    y_hi: float = 5.0

    @property
    def hx(self):
        return (self.x_hi - self.x_lo) / self.nx

    @property
    def hy(self):
        return (self.y_hi - self.y_lo) / self.ny

    @property
    def x_edges(self):
        return self.x_lo + self.hx * np.arange(self.nx + 1)

    @property
    def y_edges(self):
        return self.y_lo + self.hy * np.arange(self.ny + 1)

    def centres(self):
        cx = self.x_lo + self.hx * (np.arange(self.nx) + 0.5)
        cy = self.y_lo + self.hy * (np.arange(self.ny) + 0.5)
        return np.meshgrid(cx, cy, indexing="ij")

    @property
    def diameter(self):
        return float(np.hypot(self.hx, self.hy))

    def locate(self, pts):
        """Flat cell index of each point, ``-1`` outside the grid."""
        pts = np.atleast_2d(pts)
        ix = np.floor((pts[:, 0] - self.x_lo) / self.hx).astype(np.int64)
        iy = np.floor((pts[:, 1] - self.y_lo) / self.hy).astype(np.int64)
        ok = (ix >= 0) & (ix < self.nx) & (iy >= 0) & (iy < self.ny)
        return np.where(ok, ix * self.ny + iy, -1)

    def distance_kernel(self):
        lx = self.hx * np.arange(-self.nx + 1, self.nx)
        ly = self.hy * np.arange(-self.ny + 1, self.ny)
        return np.hypot(*np.meshgrid(lx, ly, indexing="ij"))


@dataclass(eq=False)
class DiscreteCoupling:
    """Diagonal common part plus normalised product of the signed parts."""

    grid: PlanarGrid
    diag: np.ndarray
    excess_mu: np.ndarray  # (mu - nu)_+
    excess_nu: np.ndarray  # (nu - mu)_+
    tv: float
    mu: np.ndarray = field(repr=False)

    @property
    def degenerate(self):
        return self.tv < DEGENERATE_TV

    def marginals(self):
        """Row and column sums of the coupling (flattened)."""
        if self.degenerate:
            return self.diag.copy(), self.diag.copy()
        k = 2.0 / self.tv
        return (self.diag + k * self.excess_mu * self.excess_nu.sum(),
                self.diag + k * self.excess_nu * self.excess_mu.sum())

    def cost(self):
        """Exact transport cost ``E |X - Y|`` of the coupling."""
        if self.degenerate:
            return 0.0
        shape = (self.grid.nx, self.grid.ny)
        a = self.excess_mu.reshape(shape)
        b = self.excess_nu.reshape(shape)
        kb = fftconvolve(b, self.grid.distance_kernel(), mode="same")
        return float(2.0 / self.tv * np.sum(a * kb))

    @property
    def moved_mass(self):
        return 0.5 * self.tv

    def sample(self, w, g):
        """Partner ``U`` for each point of ``w`` (shape ``(R, 2)``).

        A point in cell ``i`` stays put with probability
        ``min(mu_i, nu_i) / mu_i``; otherwise it moves to a cell drawn from
        ``(nu - mu)_+`` and lands at a Gaussian point truncated to that cell.
        """
        w = np.atleast_2d(np.asarray(w, dtype=np.float64))
        u = w.copy()
        if self.degenerate:
            return u
        cell = self.grid.locate(w)
        inside = cell >= 0
        p_move = np.zeros(w.shape[0])
        mu_c = self.mu[cell[inside]]
        with np.errstate(divide="ignore", invalid="ignore"):
            p_move[inside] = np.where(mu_c > 0, self.excess_mu[cell[inside]] / mu_c, 0.0)
        move = g.random(w.shape[0]) < p_move
        k = int(move.sum())
        if k:
            cdf = np.cumsum(self.excess_nu)
            dest = np.searchsorted(cdf, g.random(k) * cdf[-1], side="right")
            dest = np.minimum(dest, cdf.size - 1)
            ix, iy = np.divmod(dest, self.grid.ny)
            u[move, 0] = _truncated_normal(self.grid.x_edges, ix, g.random(k))
            u[move, 1] = _truncated_normal(self.grid.y_edges, iy, g.random(k))
        return u


def _truncated_normal(edges, idx, v):
    lo, hi = ndtr(edges[idx]), ndtr(edges[idx + 1])
    return np.clip(ndtri(lo + v * (hi - lo)), edges[idx], edges[idx + 1])


@dataclass
class CouplingAudit:
    n: int
    mean_abs_V: float
    se: float
    excess_cost: float
    w1_bound: float
    w1_bound_R: float
    fourier_l1: float
    empirical_w1: float
    empirical_mean_abs_V: float
    empirical_se: float
    grid_allowance: float
    tv: float
    ks_stat_v1: float
    ks_pvalue_v1: float
    ks_stat_v2: float
    ks_pvalue_v2: float
    mass_defect: float
    n_samples: int
    grid_resolution: int

    def chain_ok(self):
        """``empirical W1 <= cost + 3 SE <= bound + allowance``.

        The empirical W1 comes from the matched subsample, so the slack uses
        the standard error of that subsample.
        """
        upper = self.excess_cost + 3.0 * self.empirical_se
        return self.empirical_w1 <= upper <= self.w1_bound + self.grid_allowance


# ---------------------------------------------------------------------------
# characteristic functions and densities

def block_amplitudes(table, block):
    lo, hi = block
    p = table.primes[lo - 1 : hi].astype(np.float64)
    w = p[-1] / p
    return np.sqrt(w / (0.5 * w.sum()))


def block_char_profile(table, block, rho_grid=None):
    """Radial characteristic function ``prod_j J0(a_j rho)`` of a block.

    Without an explicit ``rho_grid`` the grid has step ``RHO_STEP`` and is
    extended until ``|phi| < TAIL_TOL`` over its last stretch (or
    ``RHO_CAP`` is reached).
    """
    a = block_amplitudes(table, block)
    if rho_grid is not None:
        rho = np.asarray(rho_grid, dtype=np.float64)
        return RadialLaw(rho, _j0_product(rho, a), "block", a.size)
    pieces, start, width = [], 0.0, 5.0
    while start < RHO_CAP:
        rho = start + RHO_STEP * np.arange(int(round(width / RHO_STEP)))
        phi = _j0_product(rho, a)
        pieces.append((rho, phi))
        start += width
        if np.max(np.abs(phi)) < TAIL_TOL:
            break
    end = np.array([start])
    pieces.append((end, _j0_product(end, a)))
    rho = np.concatenate([p[0] for p in pieces])
    phi = np.concatenate([p[1] for p in pieces])
    return RadialLaw(rho, phi, "block", a.size)


def _j0_product(rho, a, chunk=2048):
    out = np.empty(rho.size)
    for i in range(0, rho.size, chunk):
        out[i : i + chunk] = np.prod(j0(np.outer(rho[i : i + chunk], a)), axis=1)
    return out


def gaussian_profile(rho_grid):
    rho = np.asarray(rho_grid, dtype=np.float64)
    return RadialLaw(rho, np.exp(-0.5 * rho**2), "gaussian")


def _hankel(law, kernel, x):
    """``int_0^inf phi(rho) kernel(x rho) w(rho) drho`` by corrected trapezoid.

    The grid must be uniform and start at 0.  The endpoint Euler-Maclaurin
    terms at ``rho = 0`` are added analytically; the far end is negligible
    once ``phi`` has decayed.
    """
    rho, phi = law.rho, law.phi
    h = rho[1] - rho[0]
    wts = np.full(rho.size, h)
    wts[0] = wts[-1] = 0.5 * h
    out = np.empty(x.size)
    for i in range(0, x.size, 256):
        xs = x[i : i + 256]
        out[i : i + 256] = kernel(np.outer(xs, rho)) @ (phi * wts * (rho if kernel is j0 else 1.0))
    return out


def density_from_radial(law, radius_grid=None):
    """Radial density ``f(r) = (2 pi)^{-1} int phi(rho) J0(r rho) rho drho``.

    Also reports the mass defect ``|1 - int_{|x|<R} f|`` at the largest
    radius ``R``, computed as ``R int phi(rho) J1(R rho) drho``.
    """
    if law.tail() >= TAIL_TOL:
        raise TailNotDecayedError(
            f"|phi| = {law.tail():.2e} at rho = {law.rho[-1]:.0f}; the law has no usable density")
    r = np.linspace(0.0, 7.5, 1537) if radius_grid is None else np.asarray(radius_grid, float)
    h = law.rho[1] - law.rho[0]
    # g(rho) = rho phi J0(r rho): g'(0) = 1, g'''(0) = -6 (c2 + r^2 / 4), phi ~ 1 - c2 rho^2
    c2 = (1.0 - law.phi[1]) / h**2
    f = _hankel(law, j0, r) + h**2 / 12.0 + h**4 / 120.0 * (c2 + 0.25 * r**2)
    f /= 2.0 * np.pi
    big_r = float(r[-1])
    mass = big_r * _hankel(law, j1, np.array([big_r]))[0] + h**2 / 12.0 * 0.5 * big_r**2
    return RadialDensity(r, f, abs(1.0 - mass))


def gridded_gaussian(grid):
    """Exact standard Gaussian cell masses, renormalised to the grid."""
    px = np.diff(ndtr(grid.x_edges))
    py = np.diff(ndtr(grid.y_edges))
    nu = np.outer(px, py).ravel()
    return nu / nu.sum()


def gridded_block(density, grid, nu=None):
    """Cell masses of a radial density, as a correction of the Gaussian masses.

    ``mu_i = nu_i f(c_i) / g(c_i)`` with ``g`` the Gaussian density and the
    ratio interpolated radially; the midpoint-rule error of the two laws
    then cancels to leading order.
    """
    nu = gridded_gaussian(grid) if nu is None else nu
    cx, cy = grid.centres()
    rr = np.hypot(cx, cy).ravel()
    g = np.exp(-0.5 * density.r**2) / (2.0 * np.pi)
    ratio = np.interp(rr, density.r, density.f / g)
    mu = np.clip(nu * ratio, 0.0, None)
    return mu / mu.sum()


# ---------------------------------------------------------------------------
# couplings and bounds

def excess_coupling(mu, nu, grid):
    mu = np.asarray(mu, dtype=np.float64).ravel()
    nu = np.asarray(nu, dtype=np.float64).ravel()
    if mu.size != grid.nx * grid.ny or nu.size != mu.size:
        raise ValueError("measures do not match the grid")
    if mu.min() < 0 or nu.min() < 0:
        raise ValueError("measures must be nonnegative")
    if abs(mu.sum() - 1.0) > 1e-9 or abs(nu.sum() - 1.0) > 1e-9:
        raise ValueError("measures must have unit mass")
    d = mu - nu
    tv = float(np.abs(d).sum())
    return DiscreteCoupling(grid, np.minimum(mu, nu), np.clip(d, 0, None),
                            np.clip(-d, 0, None), tv, mu)


def w1_upper_bound(mu, nu, grid, R=None, x0=(0.0, 0.0), n_sweep=60):
    """``4 R |mu-nu|(B(x0,R)) + 32 int_{R/2}^inf |mu-nu|(B(x0,r)^c) dr``.

    The tail integral of a gridded measure is exactly
    ``sum_i |d_i| max(r_i - R/2, 0)``.  With ``R=None`` the bound is
    minimised over a log-spaced sweep; returns ``(bound, R)``.
    """
    d = np.abs(np.asarray(mu, float).ravel() - np.asarray(nu, float).ravel())
    cx, cy = grid.centres()
    r = np.hypot(cx.ravel() - x0[0], cy.ravel() - x0[1])

    def bound(radius):
        inner = d[r <= radius].sum()
        return 4.0 * radius * inner + 32.0 * np.sum(d * np.clip(r - 0.5 * radius, 0.0, None))

    if R is not None:
        return float(bound(R)), float(R)
    sweep = np.geomspace(1e-3, 4.0 * max(r.max(), 1.0), n_sweep)
    vals = np.array([bound(s) for s in sweep])
    k = int(np.argmin(vals))
    return float(vals[k]), float(sweep[k])


def fourier_l1_diag(law_a, law_b):
    """Planar ``L1`` distance ``2 pi int |phi_a - phi_b| rho drho``."""
    if law_a.rho.size != law_b.rho.size or not np.array_equal(law_a.rho, law_b.rho):
        raise ValueError("laws must share the rho grid")
    return float(2.0 * np.pi * np.trapezoid(np.abs(law_a.phi - law_b.phi) * law_a.rho, law_a.rho))


def fourier_bound_shape(l1, R, tail_mass):
    """Smoothing-bound shape ``R^3 L1 + tail`` in dimension two."""
    return R**3 * l1 + tail_mass


def empirical_w1(a, b):
    """Exact ``W1`` between two equal-size planar samples (optimal matching)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.shape != b.shape:
        raise ValueError("samples must have equal size")
    cost = np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].mean())


# ---------------------------------------------------------------------------
# block couplers

class BlockCoupler:
    """Precomputed law, density and coupling for one block."""

    def __init__(self, table, block, grid=None):
        self.table = table
        self.block = (int(block[0]), int(block[1]))
        self.grid = grid or PlanarGrid()
        lo, hi = self.block
        self.n = hi - lo + 1
        self.b = float(np.sqrt(0.5 * table.inv_p_sum(lo, hi)))
        self.law = block_char_profile(table, self.block)
        self.density = density_from_radial(self.law)
        self.nu = gridded_gaussian(self.grid)
        self.mu = gridded_block(self.density, self.grid, self.nu)
        self.coupling = excess_coupling(self.mu, self.nu, self.grid)

    def block_sums(self, theta):
        """``(C, S)`` rows for phase rows ``theta`` of shape ``(R, n)``."""
        lo, hi = self.block
        amp = self.table.inv_sqrt_p[lo - 1 : hi]
        return np.column_stack([np.cos(theta) @ amp, np.sin(theta) @ amp])

    def couple(self, cs, g):
        """Coupled standard Gaussian pairs for block sums ``cs``."""
        return self.coupling.sample(np.asarray(cs) / self.b, g)

    def simulate(self, n_samples, seed, stream_id=0):
        """Fresh block sums and their coupled Gaussians: ``(W, U)``."""
        g = rng.generator(seed, stream_id, rng.COUPLING)
        theta = 2.0 * np.pi * g.random((n_samples, self.n))
        w = self.block_sums(theta) / self.b
        return w, self.coupling.sample(w, g)


def couple_block(table, block, grid_resolution=256, seed=0, stream_id=0, coupler=None):
    """One :class:`BlockSample` with ``(C, S)`` and a coupled ``(v1, v2)``.

    Blocks whose law has no usable density fall back to an independent
    Gaussian pair with ``coupled=False``.
    """
    lo, hi = block
    b = float(np.sqrt(0.5 * table.inv_p_sum(lo, hi)))
    g = rng.generator(seed, stream_id, rng.COUPLING)
    theta = 2.0 * np.pi * g.random(hi - lo + 1)
    amp = table.inv_sqrt_p[lo - 1 : hi]
    c, s = float(np.cos(theta) @ amp), float(np.sin(theta) @ amp)
    if coupler is None:
        try:
            coupler = BlockCoupler(table, block, PlanarGrid(grid_resolution, grid_resolution))
        except TailNotDecayedError:
            v = g.standard_normal(2)
            return BlockSample(0, c, s, b, float(v[0]), float(v[1]), coupled=False)
    u = coupler.coupling.sample(np.array([[c / b, s / b]]), g)[0]
    return BlockSample(0, c, s, b, float(u[0]), float(u[1]), coupled=True)


def audit_block(table, block, n_samples=10_000, seed=0, grid_resolution=256, n_match=512):
    coupler = BlockCoupler(table, block, PlanarGrid(grid_resolution, grid_resolution))
    w, u = coupler.simulate(n_samples, seed, stream_id=int(block[0]) * 7919 + coupler.n)
    v = np.hypot(*(u - w).T)
    m = min(n_match, n_samples)
    ks1 = stats.kstest(u[:, 0], "norm")
    ks2 = stats.kstest(u[:, 1], "norm")
    bound, r_best = w1_upper_bound(coupler.mu, coupler.nu, coupler.grid)
    gauss = gaussian_profile(coupler.law.rho)
    cpl = coupler.coupling
    return CouplingAudit(
        n=coupler.n,
        mean_abs_V=float(v.mean()),
        se=float(v.std(ddof=1) / np.sqrt(n_samples)),
        excess_cost=cpl.cost(),
        w1_bound=bound,
        w1_bound_R=r_best,
        fourier_l1=fourier_l1_diag(coupler.law, gauss),
        empirical_w1=empirical_w1(w[:m], u[:m]),
        empirical_mean_abs_V=float(v[:m].mean()),
        empirical_se=float(v[:m].std(ddof=1) / np.sqrt(m)) if m > 1 else float("nan"),
        grid_allowance=coupler.grid.diameter * cpl.moved_mass,
        tv=cpl.tv,
        ks_stat_v1=float(ks1.statistic),
        ks_pvalue_v1=float(ks1.pvalue),
        ks_stat_v2=float(ks2.statistic),
        ks_pvalue_v2=float(ks2.pvalue),
        mass_defect=coupler.density.mass_defect,
        n_samples=int(n_samples),
        grid_resolution=int(grid_resolution),
    )


def audit_blocks(table, sizes=(16, 64, 256, 1024), start=1000, n_samples=10_000, seed=0,
                 grid_resolution=256, workers=1):
    """Audit blocks of the given sizes, each starting at prime index ``start``."""
    blocks = [(start, start + n - 1) for n in sizes]
    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(workers) as ex:
            futs = [ex.submit(audit_block, table, blk, n_samples, seed, grid_resolution) for blk in blocks]
            return [f.result() for f in futs]
    return [audit_block(table, blk, n_samples, seed, grid_resolution) for blk in blocks]


def write_audit_json(audits, path, manifest=None):
    doc = {"records": [asdict(a) for a in audits]}
    if manifest is not None:
        doc["manifest"] = manifest
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
