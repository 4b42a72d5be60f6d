import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad
from scipy.special import i0

from zetachaos import chaos as Ch
from zetachaos.field import eval_field, sample_phases


def test_exponent_formulas():
    assert Ch.log_kernel_exponent(2, 1.0) == pytest.approx(1.0)
    assert Ch.half_kernel_exponent(2, 1.0) == pytest.approx(1.5)
    assert Ch.log_kernel_exponent(1, 0.7) == pytest.approx(1.0)
    assert Ch.half_kernel_exponent(1, 1.9) == pytest.approx(1.0)


def test_params_validation():
    with pytest.raises(ValueError):
        Ch.ChaosParams(0.0, 10)
    with pytest.raises(ValueError):
        Ch.ChaosParams(1.0, 10, normalization="bogus")
    with pytest.raises(ValueError):
        Ch.ChaosParams(1.0, 10, critical_form="bogus")
    assert Ch.ChaosParams(1.0, 10).beta_critical == 2.0


def test_critical_factor(table_small):
    assert Ch.critical_factor(table_small, 10**5) == pytest.approx(math.sqrt(math.log(math.log(1e5))))
    p = 1299709  # the 100000th prime
    assert Ch.critical_factor(table_small, 10**5, "log_p") == pytest.approx(math.sqrt(0.5 * math.log(math.log(p))))


def test_box_masses_constant_field():
    vals = np.full((3, 65), 0.3)
    m = Ch.box_masses(vals, 2.0, 0.1, level=2)
    assert m.shape == (3, 4)
    assert np.allclose(m, 0.25 * math.exp(0.6 - 0.1), rtol=1e-14)


def test_box_masses_trapezoid_accuracy():
    x = np.linspace(0.25, 0.75, 257)
    m = Ch.box_masses(np.sin(7 * x), 1.3, 0.0, level=4, x0=0.25, x1=0.75)
    edges = np.linspace(0.25, 0.75, 9)
    want = [quad(lambda t: math.exp(1.3 * math.sin(7 * t)), a, b)[0] for a, b in zip(edges, edges[1:])]
    assert np.allclose(m, want, rtol=2e-4)


def test_resolution_errors():
    with pytest.raises(Ch.ResolutionError):
        Ch.box_masses(np.zeros(64), 1.0, 0.0, level=2)  # 63 not a multiple of 4
    with pytest.raises(Ch.ResolutionError):
        Ch.box_masses(np.zeros(33), 1.0, 0.0, level=2)  # oversampling 8
    with pytest.raises(Ch.ResolutionError):
        Ch.box_masses(np.zeros(65), 1.0, 0.0, level=2, x0=0.1, x1=0.6)
    with pytest.raises(Ch.ResolutionError):
        Ch.moments_from_masses(np.ones((4, 16)), 1, [0.1], level=5, x0=0.25)


def test_chaos_boxes_and_coarsen(table_small):
    f = eval_field(sample_phases(table_small, 3), 1000, 257)
    p = Ch.ChaosParams(1.0, 1000)
    b = Ch.chaos_boxes(f, p, level=4, table=table_small)
    assert b.masses.shape == (16,) and b.oversampling == 16
    c = b.coarsen()
    assert c.level == 3 and c.total == pytest.approx(b.total, rel=1e-14)
    with pytest.raises(ValueError):
        Ch.chaos_boxes(f, Ch.ChaosParams(1.0, 999), 4, table_small)
    crit = Ch.chaos_boxes(f, Ch.ChaosParams(1.0, 1000, critical_factor=True), 4, table_small)
    assert crit.total == pytest.approx(b.total * Ch.critical_factor(table_small, 1000))


def _two_point_quad(u, beta, primes):
    # independent oracle: integrate each prime's phase out numerically
    out = 1.0
    for p in primes:
        a = beta / math.sqrt(p)
        num = quad(lambda t: math.exp(a * (math.cos(t) + math.cos(t - u * math.log(p)))), 0, 2 * math.pi)[0]
        den = quad(lambda t: math.exp(a * math.cos(t)), 0, 2 * math.pi)[0]
        out *= 2 * math.pi * num / den**2
    return out


def test_two_point_density_oracles(table_small):
    p1 = Ch.ChaosParams(1.0, 1)
    assert Ch.two_point_density(0.0, p1, table_small) == pytest.approx(1.2287313, abs=1e-7)
    assert Ch.two_point_density(0.0, p1, table_small) == pytest.approx(
        i0(math.sqrt(2)) / i0(1 / math.sqrt(2)) ** 2, rel=1e-13)
    p3 = Ch.ChaosParams(1.2, 3)
    for u in (0.0, 0.37, 2.1):
        assert Ch.two_point_density(u, p3, table_small) == pytest.approx(
            _two_point_quad(u, 1.2, [2, 3, 5]), rel=1e-10)


def test_two_point_density_vectorised(table_small):
    p = Ch.ChaosParams(0.8, 2000)
    u = np.array([0.0, 0.01, 0.3])
    vec = Ch.two_point_density(u, p, table_small, chunk=2000)
    assert np.allclose(vec, [Ch.two_point_density(v, p, table_small) for v in u], rtol=1e-13)


def test_second_moment_exact_against_quad(table_small):
    p = Ch.ChaosParams(1.0, 20)
    r = 0.125
    got = Ch.second_moment_box_exact(r, p, table_small)
    f = lambda t: (2 * r - t) * Ch.two_point_density(t, p, table_small)
    want = 2 * quad(f, 0, 2 * r, limit=200, epsabs=1e-13)[0]
    assert got == pytest.approx(want, rel=1e-10)
    assert got > (2 * r) ** 2  # positively correlated density


def test_second_moment_barrier(table_small):
    with pytest.raises(Ch.MomentBarrierError, match="4/beta"):
        Ch.second_moment_box_exact(0.1, Ch.ChaosParams(1.5, 100), table_small)
    with pytest.raises(ValueError):
        Ch.second_moment_box_exact(0.3, Ch.ChaosParams(1.0, 100), table_small)


def test_first_moment_unbiased(table_small):
    masses = Ch.sample_box_masses(table_small, [5000], [1.0], 512, level=2, seed=4)[1.0, 5000]
    mean, se = masses.mean(axis=0), masses.std(axis=0, ddof=1) / math.sqrt(512)
    assert np.all(np.abs(mean - 0.25) < 4 * se)


def test_sample_masses_match_direct_field(table_small):
    out = Ch.sample_box_masses(table_small, [300, 1200], [0.9], 3, level=3, x0=0.25, x1=0.75, seed=8)
    for n in (300, 1200):
        ln = Ch.log_normalization(Ch.ChaosParams(0.9, n), table_small)
        for i in range(3):
            f = eval_field(sample_phases(table_small, 8, i), n, 65, 0.25, 0.75)
            want = Ch.box_masses(f.values, 0.9, ln, 3, 0.25, 0.75)
            assert np.allclose(out[0.9, n][i], want, rtol=1e-10)


def test_sample_masses_worker_invariant(table_small):
    a = Ch.sample_box_masses(table_small, [1000], [1.0], 300, level=2, seed=1, workers=1)
    b = Ch.sample_box_masses(table_small, [1000], [1.0], 300, level=2, seed=1, workers=3)
    assert np.array_equal(a[1.0, 1000], b[1.0, 1000])


def test_moments_and_warning():
    masses = np.ones((40, 32))
    est = Ch.moments_from_masses(masses, 2, [2**-3, 2**-4], level=5, x0=0.0)
    assert est[0].moment == pytest.approx(64.0) and est[0].se == 0
    assert est[1].moment == pytest.approx(16.0)
    with pytest.warns(RuntimeWarning, match="heavy tails"):
        Ch.moments_from_masses(masses, 2, [2**-3], 5, beta=1.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.5, 3.0), st.floats(-2.0, 2.0))
def test_scaling_fit_recovers_power_law(slope, icpt):
    r = 2.0 ** -np.arange(2, 7)
    ests = [Ch.MomentEstimate(2, x, math.exp(icpt) * x**slope, 0.01 * x**slope, 100) for x in r]
    fit = Ch.scaling_exponent_fit(ests, 2, beta=1.0)
    assert fit.slope == pytest.approx(slope, abs=1e-10)
    assert fit.intercept == pytest.approx(icpt, abs=1e-9)
    assert fit.log_kernel_formula == 1.0 and fit.half_kernel_formula == 1.5
    assert set(fit.to_dict()) >= {"slope", "slope_se", "residuals"}


def test_scaling_fit_needs_four_points():
    with pytest.raises(ValueError):
        Ch.scaling_exponent_fit([Ch.MomentEstimate(1, 0.1, 1.0, 0.1, 1)] * 3, 1)


def test_martingale(table_small):
    rep = Ch.martingale_check(Ch.ChaosParams(1.0, 2000), 200, 2000, (0.25, 0.5), n_outer=6,
                              n_inner=200, seed=2, table=table_small, grid_size=129)
    assert rep.ratios.shape == (6,)
    assert rep.max_abs_z < 4.5 and abs(rep.aggregate_z) < 4
    same = Ch.martingale_check(Ch.ChaosParams(1.0, 200), 200, 200, (0.25, 0.5), 2, 10, 2, table_small)
    assert np.all(same.ratios == 1.0)
    empty = Ch.martingale_check(Ch.ChaosParams(1.0, 200), 100, 200, (0.5, 0.5), 3, 10, 2, table_small)
    assert empty.skipped == 3 and empty.max_abs_z == 0.0
    with pytest.raises(ValueError):
        Ch.martingale_check(Ch.ChaosParams(1.0, 200), 300, 200, (0.0, 1.0), 1, 1, 0, table_small)


def test_critical_mass_study(table_small):
    out = Ch.critical_mass_study([100, 1000], 64, seed=0, table=table_small, grid_size=257)
    assert [s.n_primes for s in out] == [100, 1000]
    for s in out:
        assert s.q1 <= s.median <= s.q3 and s.minimum > 0
        assert s.n_samples == 64
