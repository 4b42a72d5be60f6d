"""Multiplicative chaos measures built from the prime field.

    mu_{beta,N}(dx) = exp(beta X_N(x)) / E exp(beta X_N(x)) dx

The normaliser is the exact Bessel product ``prod_j I0(beta / sqrt(p_j))``
by default, which makes ``E mu(A) = |A|`` exact at every ``N``.  Box masses
are composite-trapezoid integrals over dyadic boxes of ``[0, 1]``.

Exact oracles: the two-point density

    rho2(u) = prod_j I0(2 beta |cos(u log p_j / 2)| / sqrt(p_j)) / prod_j I0(beta / sqrt(p_j))^2

gives ``E mu(B)^2`` by a one-dimensional integral.
"""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from . import rng
from .field import FieldEvaluator, uniform_grid
from .kernel import log_i0, normalization
from .mc import jackknife_se, map_chunks

__all__ = [
    "BETA_C",
    "ChaosParams",
    "BoxMeasure",
    "MomentEstimate",
    "ScalingFit",
    "MartingaleReport",
    "CriticalSummary",
    "MomentBarrierError",
    "ResolutionError",
    "log_normalization",
    "box_masses",
    "chaos_boxes",
    "two_point_density",
    "second_moment_box_exact",
    "second_moment_boxes_exact",
    "sample_box_masses",
    "moments_from_masses",
    "mc_moment",
    "scaling_exponent_fit",
    "log_kernel_exponent",
    "half_kernel_exponent",
    "martingale_check",
    "critical_mass_study",
    "critical_factor",
]

BETA_C = 2.0
MIN_OVERSAMPLING = 16


class MomentBarrierError(ValueError):
    """Requested moment is infinite in the limit."""


class ResolutionError(ValueError):
    pass


@dataclass(frozen=True)
class ChaosParams:
    beta: float
    n_primes: int
    normalization: str = "exact_bessel"  # or "gaussian_form"
    critical_factor: bool = False
    critical_form: str = "n_primes"  # or "log_p": sqrt(1/2 log log p_N)
    beta_critical: float = field(default=BETA_C, init=False)

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError("beta must be > 0")
        if self.normalization not in ("exact_bessel", "gaussian_form"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if self.critical_form not in ("n_primes", "log_p"):
            raise ValueError(f"unknown critical_form {self.critical_form!r}")


@dataclass(eq=False)
class BoxMeasure:
    level: int
    masses: np.ndarray
    params: ChaosParams
    oversampling: int
    x0: float = 0.0
    x1: float = 1.0

    @property
    def total(self):
        return float(self.masses.sum())

    def coarsen(self):
        """Masses at ``level - 1`` (pairs of boxes merged)."""
        return BoxMeasure(self.level - 1, self.masses.reshape(-1, 2).sum(axis=1), self.params,
                          2 * self.oversampling, self.x0, self.x1)


@dataclass
class MomentEstimate:
    q: float
    r: float
    moment: float
    se: float
    n_samples: int


@dataclass
class ScalingFit:
    q: float
    beta: float | None
    r: np.ndarray
    moments: np.ndarray
    se: np.ndarray
    slope: float
    slope_se: float
    intercept: float
    residuals: np.ndarray
    log_kernel_formula: float | None
    half_kernel_formula: float | None

    def to_dict(self):
        return {
            "q": self.q, "beta": self.beta, "r": self.r.tolist(), "moments": self.moments.tolist(),
            "se": self.se.tolist(), "slope": self.slope, "slope_se": self.slope_se,
            "intercept": self.intercept, "residuals": self.residuals.tolist(),
            "log_kernel_formula": self.log_kernel_formula, "half_kernel_formula": self.half_kernel_formula,
        }


@dataclass
class MartingaleReport:
    n_base: int
    n_extended: int
    box: tuple
    ratios: np.ndarray
    ratio_se: np.ndarray
    z_scores: np.ndarray
    aggregate_z: float
    skipped: int

    @property
    def max_abs_z(self):
        return float(np.max(np.abs(self.z_scores))) if self.z_scores.size else 0.0


@dataclass
class CriticalSummary:
    n_primes: int
    factor: float
    median: float
    q1: float
    q3: float
    mean: float
    half_moment: float
    half_moment_se: float
    minimum: float
    n_samples: int


def log_kernel_exponent(q, beta):
    return (1 + beta**2 / 2) * q - beta**2 / 2 * q**2


def half_kernel_exponent(q, beta):
    return (1 + beta**2 / 4) * q - beta**2 / 4 * q**2


def critical_factor(table, n_primes, form="n_primes"):
    if form == "n_primes":
        return math.sqrt(math.log(math.log(n_primes)))
    return math.sqrt(0.5 * math.log(float(table.log_p[n_primes - 1])))


def log_normalization(params, table):
    c = normalization(table, params.n_primes, params.beta)
    return c.log_norm_exact if params.normalization == "exact_bessel" else c.log_norm_gaussian


def _oversampling(grid_size, level, x0, x1):
    span = (x1 - x0) * 2**level
    n_boxes = int(round(span))
    start = x0 * 2**level
    if n_boxes < 1 or abs(span - n_boxes) > 1e-9 or abs(start - round(start)) > 1e-9:
        raise ResolutionError(f"[{x0}, {x1}] is not a union of level-{level} dyadic boxes")
    if (grid_size - 1) % n_boxes:
        raise ResolutionError(f"grid_size - 1 = {grid_size - 1} is not a multiple of {n_boxes} boxes")
    s = (grid_size - 1) // n_boxes
    if s < MIN_OVERSAMPLING:
        raise ResolutionError(f"oversampling {s} below {MIN_OVERSAMPLING} points per box")
    return n_boxes, s


def box_masses(values, beta, log_norm, level, x0=0.0, x1=1.0):
    """Trapezoid box masses of ``exp(beta X - log_norm)`` for rows of ``values``.

    ``values`` has shape ``(..., M)`` on the uniform grid over ``[x0, x1]``;
    returns shape ``(..., n_boxes)``.
    """
    values = np.asarray(values, dtype=np.float64)
    n_boxes, s = _oversampling(values.shape[-1], level, x0, x1)
    h = (x1 - x0) / (values.shape[-1] - 1)
    d = np.exp(beta * values - log_norm)
    inner = d[..., :-1].reshape(d.shape[:-1] + (n_boxes, s))
    right = d[..., s::s]
    return h * (inner.sum(axis=-1) - 0.5 * inner[..., 0] + 0.5 * right)


def chaos_boxes(field, params, level, table):
    """:class:`BoxMeasure` of one field realisation."""
    if field.label != "X":
        raise ValueError("chaos_boxes needs an X-label field")
    if field.n_primes is not None and field.n_primes != params.n_primes:
        raise ValueError(f"field has {field.n_primes} primes, params say {params.n_primes}")
    _, s = _oversampling(field.grid_size, level, field.x0, field.x1)
    m = box_masses(field.values, params.beta, log_normalization(params, table), level, field.x0, field.x1)
    if params.critical_factor:
        m = m * critical_factor(table, params.n_primes, params.critical_form)
    return BoxMeasure(level, m, params, s, field.x0, field.x1)


# ---------------------------------------------------------------------------
# exact oracles

_LOG_I0_SERIES = (0.25, -1.0 / 64, 1.0 / 576, -11.0 / 49152, 19.0 / 614400)
_SERIES_MAX = 0.1


def _log_i0_fast(x):
    """``log I0(x)``; Taylor series below 0.1 (error < 1e-20 there)."""
    out = np.empty_like(x)
    small = x < _SERIES_MAX
    x2 = x[small] ** 2
    acc = np.zeros_like(x2)
    for c in reversed(_LOG_I0_SERIES):
        acc = (acc + c) * x2
    out[small] = acc
    out[~small] = log_i0(x[~small])
    return out


def two_point_density(u, params, table, chunk=1 << 21):
    """Exact ``E[e^{beta X(x)} e^{beta X(x+u)}] / (E e^{beta X})^2``."""
    u = np.atleast_1d(np.abs(np.asarray(u, dtype=np.float64)))
    n = params.n_primes
    beta = params.beta
    amp = 2.0 * beta * table.inv_sqrt_p[:n]
    log_p = table.log_p[:n]
    per_row = max(1, chunk // max(n, 1))
    out = np.empty(u.size)
    for i in range(0, u.size, per_row):
        uu = u[i : i + per_row]
        c = np.abs(np.cos(0.5 * np.outer(uu, log_p)))
        out[i : i + per_row] = _log_i0_fast(c * amp).sum(axis=1)
    log_norm = normalization(table, n, beta).log_norm_exact
    res = np.exp(out - 2.0 * log_norm)
    return res if res.size > 1 else float(res[0])


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _integration_nodes(edges):
    """Gauss-Legendre nodes/weights on each panel ``[edges[k], edges[k+1]]``."""
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * _GL_X[None, :] + 0.5 * (a + b)
    wts = 0.5 * (b - a) * _GL_W[None, :]
    return nodes, wts


def _panels(upper, scale):
    """Geometric panel edges on ``[0, upper]`` refined towards 0 down to ``scale``."""
    edges = [upper]
    while edges[-1] > scale:
        edges.append(edges[-1] / 2)
    edges.append(0.0)
    edges = np.array(edges[::-1])
    # split wide panels so no panel exceeds 4 * scale in width
    out = [edges[0]]
    for a, b in zip(edges[:-1], edges[1:]):
        k = max(1, int(np.ceil((b - a) / (4.0 * scale))))
        out.extend(a + (b - a) * np.arange(1, k + 1) / k)
    return np.array(out)


def second_moment_boxes_exact(r_list, params, table):
    """``E mu([x, x + 2r])^2`` for each ``r`` by composite Gauss-Legendre.

    ``E mu(B)^2 = 2 int_0^{2r} (2r - t) rho2(t) dt``.  Panels halve towards
    ``t = 0`` down to the field's correlation scale ``1 / log p_N`` and are
    never wider than four times it; every ``2r`` is a panel edge.
    """
    r_arr = np.asarray(r_list, dtype=np.float64)
    if np.any(r_arr <= 0) or np.any(r_arr > 0.25):
        raise ValueError("r must lie in (0, 1/4]")
    if params.beta >= math.sqrt(2.0):
        raise MomentBarrierError(
            f"beta={params.beta} >= sqrt(2): the second moment diverges as N grows "
            f"(moments of order p exist only for p < 4/beta^2 = {4 / params.beta**2:.3g})")
    n = params.n_primes
    scale = 1.0 / (4.0 * max(float(table.log_p[n - 1]), 1.0))
    upper = 2.0 * float(r_arr.max())
    edges = _panels(upper, scale)
    edges = np.union1d(edges, 2.0 * r_arr)
    nodes, wts = _integration_nodes(edges)
    dens = two_point_density(nodes.ravel(), params, table).reshape(nodes.shape)
    out = []
    for r in r_arr:
        keep = edges[1:] <= 2.0 * r + 1e-15
        integrand = (2.0 * r - nodes[keep]) * dens[keep]
        out.append(2.0 * float(np.sum(integrand * wts[keep])))
    return np.array(out)


def second_moment_box_exact(r, params, table):
    return float(second_moment_boxes_exact([r], params, table)[0])


# ---------------------------------------------------------------------------
# Monte Carlo

def sample_box_masses(table, n_list, betas, n_samples, level, x0=0.0, x1=1.0,
                      oversampling=MIN_OVERSAMPLING, seed=0, workers=1,
                      normalization_form="exact_bessel", evaluator=None):
    """Box masses of ``mu_{beta,N}`` for nested ``N`` sharing phases.

    Realisation ``i`` uses phase stream ``i``; ``X_N`` for smaller ``N`` is a
    prefix of the same sum.  Returns ``{(beta, N): (n_samples, n_boxes)}``.
    """
    n_list = sorted(int(n) for n in n_list)
    n_boxes = int(round((x1 - x0) * 2**level))
    grid_size = n_boxes * oversampling + 1
    ev = evaluator or FieldEvaluator(table, n_list[-1], grid_size, x0, x1)
    if ev.grid_size != grid_size or ev.n_primes < n_list[-1]:
        raise ValueError("evaluator does not match the requested grid")
    norms = {}
    for beta in betas:
        for n in n_list:
            p = ChaosParams(beta, n, normalization_form)
            norms[beta, n] = log_normalization(p, table)

    def work(a, b):
        u = rng.uniform_rows(seed, range(a, b), n_list[-1], rng.PHASES)
        fields = ev.phase_fields(2.0 * np.pi * u, n_list)
        return {key: box_masses(fields[key[1]], key[0], ln, level, x0, x1)
                for key, ln in norms.items()}

    parts = map_chunks(work, n_samples, workers=workers)
    return {key: np.concatenate([p[key] for p in parts]) for key in norms}


def _ball_mass(masses, r, level, x0):
    """Mass of ``[1/2 - r, 1/2 + r]`` from level-``level`` boxes starting at ``x0``."""
    w = 2.0**-level
    lo = (0.5 - r - x0) / w
    hi = (0.5 + r - x0) / w
    if abs(lo - round(lo)) > 1e-9 or abs(hi - round(hi)) > 1e-9:
        raise ResolutionError(f"B(1/2, {r}) is not a union of level-{level} boxes")
    lo, hi = int(round(lo)), int(round(hi))
    if lo < 0 or hi > masses.shape[-1]:
        raise ResolutionError(f"B(1/2, {r}) leaves the sampled window")
    return masses[..., lo:hi].sum(axis=-1)


def moments_from_masses(masses, q, r_list, level, x0=0.0, beta=None, n_groups=20):
    """``E mu(B(1/2, r))^q`` estimates with jackknife standard errors."""
    if beta is not None and q * beta**2 / 4 >= 1:
        warnings.warn(f"q*beta^2/4 = {q * beta**2 / 4:.3g} >= 1: heavy tails, SE unreliable",
                      RuntimeWarning, stacklevel=2)
    out = []
    for r in r_list:
        m = _ball_mass(masses, r, level, x0) ** q
        out.append(MomentEstimate(float(q), float(r), float(m.mean()), jackknife_se(m, n_groups),
                                  int(m.size)))
    return out


def mc_moment(params, q, r_list, n_samples, level, seed, table, workers=1, x0=None, x1=None):
    """Monte Carlo ``E mu(B(1/2, r))^q`` for each ``r``."""
    r_max = max(r_list)
    x0 = 0.5 - r_max if x0 is None else x0
    x1 = 0.5 + r_max if x1 is None else x1
    masses = sample_box_masses(table, [params.n_primes], [params.beta], n_samples, level, x0, x1,
                               seed=seed, workers=workers, normalization_form=params.normalization)
    return moments_from_masses(masses[params.beta, params.n_primes], q, r_list, level, x0,
                               beta=params.beta)


def scaling_exponent_fit(moments, q, beta=None):
    """Weighted least-squares slope of ``log E mu(B_r)^q`` against ``log r``."""
    if len(moments) < 4:
        raise ValueError("need at least 4 r values")
    r = np.array([m.r for m in moments])
    mom = np.array([m.moment for m in moments])
    se = np.array([m.se for m in moments])
    x, y = np.log(r), np.log(mom)
    rel = np.where(se > 0, se / mom, np.nan)
    if np.all(np.isfinite(rel)) and np.all(rel > 0):
        w = 1.0 / rel**2
    else:
        w = np.ones_like(x)
    A = np.column_stack([x, np.ones_like(x)])
    AtW = A.T * w
    cov = np.linalg.inv(AtW @ A)
    slope, icpt = cov @ (AtW @ y)
    resid = y - (slope * x + icpt)
    if np.all(np.isfinite(rel)) and np.all(rel > 0):
        slope_se = math.sqrt(cov[0, 0])
    else:
        dof = max(1, x.size - 2)
        slope_se = math.sqrt(cov[0, 0] * float(resid @ resid) / dof)
    return ScalingFit(
        float(q), beta, r, mom, se, float(slope), float(slope_se), float(icpt), resid,
        None if beta is None else log_kernel_exponent(q, beta),
        None if beta is None else half_kernel_exponent(q, beta),
    )


def martingale_check(params, n_base, n_extended, box, n_outer, n_inner, seed, table,
                     grid_size=257):
    """Conditional-mean test of the mass martingale.

    For each outer draw the first ``n_base`` phases are fixed and the box
    mass at ``n_extended`` is averaged over ``n_inner`` fresh draws of the
    remaining phases.  The exact normaliser makes the conditional mean equal
    to the base mass, quadrature included.
    """
    if n_extended < n_base:
        raise ValueError("n_extended must be >= n_base")
    a, b = box
    if b <= a:
        z = np.zeros(0)
        return MartingaleReport(n_base, n_extended, box, z, z, z, 0.0, n_outer)
    beta = params.beta
    ev = FieldEvaluator(table, n_extended, grid_size, a, b)
    h = (b - a) / (grid_size - 1)
    tw = np.full(grid_size, h)
    tw[0] = tw[-1] = 0.5 * h
    ln_base = normalization(table, n_base, beta).log_norm_exact
    ln_ext = normalization(table, n_extended, beta).log_norm_exact
    ratios, ses = [], []
    for o in range(n_outer):
        theta = 2.0 * np.pi * rng.uniforms(seed, o, n_base, rng.PHASES)[None, :]
        base = ev.phase_fields(theta, [n_base])[n_base][0]
        base_mass = float(np.exp(beta * base - ln_base) @ tw)
        if n_extended == n_base:
            ratios.append(1.0)
            ses.append(0.0)
            continue
        extra = 2.0 * np.pi * rng.generator(seed, o, rng.AUX).random((n_inner, n_extended - n_base))
        amp = table.inv_sqrt_p[n_base:n_extended]
        add = ev.combine(np.cos(extra) * amp, np.sin(extra) * amp, n_base, n_extended)
        masses = np.exp(beta * (base + add) - ln_ext) @ tw
        ratios.append(masses.mean() / base_mass)
        ses.append(masses.std(ddof=1) / math.sqrt(n_inner) / base_mass)
    ratios, ses = np.array(ratios), np.array(ses)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(ses > 0, (ratios - 1.0) / ses, 0.0)
    agg = float(z.sum() / math.sqrt(z.size)) if z.size else 0.0
    return MartingaleReport(n_base, n_extended, (a, b), ratios, ses, z, agg, 0)


def critical_mass_study(n_list, n_samples, seed, table, grid_size=257, workers=1,
                        form="n_primes"):
    """Summaries of the critically normalised total mass on ``[0, 1]``."""
    n_list = sorted(int(n) for n in n_list)
    level = int(round(math.log2((grid_size - 1) / MIN_OVERSAMPLING)))
    masses = sample_box_masses(table, n_list, [BETA_C], n_samples, level, 0.0, 1.0,
                               oversampling=(grid_size - 1) // 2**level, seed=seed, workers=workers)
    out = []
    for n in n_list:
        fac = critical_factor(table, n, form)
        tot = masses[BETA_C, n].sum(axis=1) * fac
        half = np.sqrt(tot)
        q1, med, q3 = np.quantile(tot, [0.25, 0.5, 0.75])
        out.append(CriticalSummary(n, fac, float(med), float(q1), float(q3), float(tot.mean()),
                                   float(half.mean()), jackknife_se(half), float(tot.min()),
                                   int(n_samples)))
    return out
