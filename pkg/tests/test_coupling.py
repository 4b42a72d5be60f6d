import math

import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad
from scipy.special import j0

from zetachaos import coupling as C, rng

BLOCK64 = (1000, 1063)


@pytest.fixture(scope="module")
def coupler64(table_small):
    return C.BlockCoupler(table_small, BLOCK64)


def test_amplitudes_normalised(table_small):
    a = C.block_amplitudes(table_small, BLOCK64)
    assert np.sum(a**2) == pytest.approx(2.0, rel=1e-14)
    assert a[-1] == pytest.approx(a.min())


def test_char_profile_basics(table_small):
    law = C.block_char_profile(table_small, BLOCK64, np.array([0.0, 0.5]))
    assert law.phi[0] == 1.0
    assert np.all(np.abs(law.phi) <= 1.0)
    # a single prime carries amplitude sqrt(2), so phi(rho) = J0(sqrt(2) rho)
    single = C.block_char_profile(table_small, (7, 7), np.array([1.0, 1 / math.sqrt(2)]))
    want = quad(lambda t: math.cos(math.sqrt(2) * math.cos(t)), 0, 2 * math.pi)[0] / (2 * math.pi)
    assert single.phi[0] == pytest.approx(want, abs=1e-12)
    assert single.phi[1] == pytest.approx(0.7651977, abs=1e-7)
    assert j0(1.0) == pytest.approx(0.7651977, abs=1e-7)


def test_char_profile_monte_carlo(table_small, coupler64):
    n = 100_000
    g = rng.generator(21, 0, rng.AUX)
    theta = 2 * np.pi * g.random((n, 64))
    w = coupler64.block_sums(theta) / coupler64.b
    law = C.block_char_profile(table_small, BLOCK64, np.array([0.5, 1.0, 2.0]))
    for rho, phi in zip(law.rho, law.phi):
        c = np.cos(rho * w[:, 0])
        assert abs(c.mean() - phi) < 3 * c.std() / math.sqrt(n)


def test_block_sum_is_normalised_cs(table_small, coupler64):
    # W = (C, S) / b has identity covariance
    theta = 2 * np.pi * rng.generator(2, 0, rng.AUX).random((50_000, 64))
    w = coupler64.block_sums(theta) / coupler64.b
    cov = np.cov(w.T)
    assert np.allclose(cov, np.eye(2), atol=5 * math.sqrt(2 / 50_000))


def test_gaussian_self_transform():
    law = C.gaussian_profile(np.arange(0, 12, C.RHO_STEP))
    d = C.density_from_radial(law)
    assert np.max(np.abs(d.f - np.exp(-d.r**2 / 2) / (2 * np.pi))) < 1e-8
    assert d.mass_defect < 1e-8


def test_block_density_mass(coupler64):
    assert coupler64.density.mass_defect < 1e-6


def test_tiny_block_has_no_density(table_small):
    with pytest.raises(C.TailNotDecayedError):
        C.density_from_radial(C.block_char_profile(table_small, (50, 50)))
    s = C.couple_block(table_small, (50, 52), seed=1)
    assert s.coupled is False and np.isfinite(s.v1)


def test_gridded_laws_unit_mass(coupler64):
    assert coupler64.nu.sum() == pytest.approx(1.0, abs=1e-12)
    assert coupler64.mu.sum() == pytest.approx(1.0, abs=1e-12)
    assert coupler64.mu.min() >= 0


def test_coupling_marginals_exact(coupler64):
    rows, cols = coupler64.coupling.marginals()
    assert np.max(np.abs(rows - coupler64.mu)) < 1e-12
    assert np.max(np.abs(cols - coupler64.nu)) < 1e-12
    assert coupler64.coupling.diag.min() >= 0


def test_identity_coupling_costs_nothing(coupler64):
    cpl = C.excess_coupling(coupler64.nu, coupler64.nu, coupler64.grid)
    assert cpl.degenerate and cpl.cost() == 0.0
    w = np.array([[0.1, 0.2], [3.0, -1.0]])
    assert np.array_equal(cpl.sample(w, np.random.default_rng(0)), w)


def test_point_masses_cost_one():
    grid = C.PlanarGrid(2, 1, -0.5, 1.5, -0.5, 0.5)
    mu, nu = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    cpl = C.excess_coupling(mu, nu, grid)
    assert cpl.cost() == pytest.approx(1.0, abs=1e-12)
    bound, _ = C.w1_upper_bound(mu, nu, grid, R=50.0)
    assert bound >= 1.0
    assert C.w1_upper_bound(mu, mu, grid, R=3.0)[0] == 0.0


def test_cost_against_direct_sum():
    grid = C.PlanarGrid(6, 5, 0.0, 3.0, -1.0, 1.5)
    g = np.random.default_rng(4)
    mu, nu = g.random(30), g.random(30)
    mu, nu = mu / mu.sum(), nu / nu.sum()
    cpl = C.excess_coupling(mu, nu, grid)
    cx, cy = grid.centres()
    pts = np.column_stack([cx.ravel(), cy.ravel()])
    d = np.hypot(*(pts[:, None, :] - pts[None, :, :]).transpose(2, 0, 1))
    want = 2 / cpl.tv * cpl.excess_mu @ d @ cpl.excess_nu
    assert cpl.cost() == pytest.approx(want, rel=1e-12)


def test_input_validation():
    grid = C.PlanarGrid(2, 1, -0.5, 1.5, -0.5, 0.5)
    with pytest.raises(ValueError):
        C.excess_coupling([0.5, 0.6], [0.5, 0.5], grid)
    with pytest.raises(ValueError):
        C.excess_coupling([1.5, -0.5], [0.5, 0.5], grid)
    with pytest.raises(ValueError):
        C.excess_coupling([1.0], [1.0], grid)


def test_ordering_chain_n64(coupler64):
    w, u = coupler64.simulate(512, seed=3)
    emp = C.empirical_w1(w, u)
    v = np.hypot(*(u - w).T)
    cost = coupler64.coupling.cost()
    bound, _ = C.w1_upper_bound(coupler64.mu, coupler64.nu, coupler64.grid)
    assert emp <= v.mean() + 1e-12  # matching never beats the realised pairing
    assert emp <= cost + 3 * v.std(ddof=1) / math.sqrt(v.size)
    assert cost <= bound


def test_empirical_w1_exact_small():
    a = np.array([[0.0, 0.0], [1.0, 0.0]])
    b = np.array([[1.0, 0.0], [0.0, 0.0]])
    assert C.empirical_w1(a, b) == 0.0
    with pytest.raises(ValueError):
        C.empirical_w1(a, b[:1])


def test_fourier_l1(table_small):
    rho = np.arange(0, 40, C.RHO_STEP)
    gauss = C.gaussian_profile(rho)
    assert C.fourier_l1_diag(gauss, gauss) == 0.0
    vals = []
    for n in (16, 64, 256):
        law = C.block_char_profile(table_small, (1000, 1000 + n - 1), rho)
        vals.append(C.fourier_l1_diag(law, gauss))
    assert vals[0] > vals[1] > vals[2]
    slope = np.polyfit(np.log([16, 64, 256]), np.log(vals), 1)[0]
    assert -1.5 <= slope <= -0.7
    assert C.fourier_bound_shape(0.1, 2.0, 0.01) == pytest.approx(0.81)
    with pytest.raises(ValueError):
        C.fourier_l1_diag(gauss, C.gaussian_profile(rho[:10]))


def test_coupled_marginal_ks(coupler64):
    _, u = coupler64.simulate(10_000, seed=9)
    crit = 1.63 / math.sqrt(10_000)
    assert stats.kstest(u[:, 0], "norm").statistic < crit
    assert stats.kstest(u[:, 1], "norm").statistic < crit


def test_self_coupling_stays_in_cell(coupler64):
    cpl = C.excess_coupling(coupler64.mu, coupler64.mu, coupler64.grid)
    w, _ = coupler64.simulate(200, seed=1)
    u = cpl.sample(w, np.random.default_rng(0))
    assert np.max(np.hypot(*(u - w).T)) <= coupler64.grid.diameter


def test_couple_block_sample(table_small, coupler64):
    s = C.couple_block(table_small, BLOCK64, seed=5, coupler=coupler64)
    assert s.coupled
    assert s.b == pytest.approx(coupler64.b)
    assert s.mismatch() >= 0
    again = C.couple_block(table_small, BLOCK64, seed=5, coupler=coupler64)
    assert (again.v1, again.v2) == (s.v1, s.v2)


def test_mean_abs_v_decreases(table_small):
    audits = C.audit_blocks(table_small, sizes=(16, 64, 256), n_samples=20_000, seed=2)
    v = [a.mean_abs_V for a in audits]
    assert v[0] > v[1] > v[2]
    assert all(a.chain_ok() for a in audits)


def test_audit_json(tmp_path, table_small):
    a = C.audit_block(table_small, (1000, 1015), n_samples=500, seed=0, grid_resolution=64)
    C.write_audit_json([a], tmp_path / "a.json", manifest={"seed": 0})
    import json

    doc = json.loads((tmp_path / "a.json").read_text())
    rec = doc["records"][0]
    for key in ("n", "mean_abs_V", "se", "excess_cost", "w1_bound", "fourier_l1", "grid_resolution"):
        assert key in rec
    assert rec["grid_resolution"] == 64
