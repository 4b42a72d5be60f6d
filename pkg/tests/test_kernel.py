import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zetachaos import kernel as K

MERTENS = 0.2614972128476428


def _psi_direct(u, primes):
    return 0.5 * math.fsum(math.cos(u * math.log(p)) / p for p in primes)


def test_psi_n_small_sums(table_small):
    assert K.psi_n(0.0, table_small, 3) == pytest.approx(31 / 60, rel=1e-15)
    assert K.psi_n(0.0, table_small, 1) == 0.25
    assert K.psi_n(0.7, table_small, 0) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=-50, max_value=50, allow_nan=False))
def test_psi_n_even_and_bounded(u):
    from zetachaos.primes import build_prime_table

    t = build_prime_table(2000)
    a, b = K.psi_n(u, t), K.psi_n(-u, t)
    assert a == b
    assert abs(a) <= K.psi_n(0.0, t) + 1e-15


def test_psi_n_against_fsum(table_small):
    primes = table_small.primes[:50_000].tolist()
    for u in (0.013, 0.4, 3.1):
        assert K.psi_n(u, table_small, 50_000) == pytest.approx(_psi_direct(u, primes), abs=1e-13)


def test_psi_n_array_shape(table_small):
    u = np.linspace(0, 1, 12).reshape(3, 4)
    out = K.psi_n(u, table_small, 1000)
    assert out.shape == (3, 4)
    assert out[0, 0] == pytest.approx(K.psi_n(0.0, table_small, 1000))


def test_psi_n_at_zero_follows_mertens(table_1e6):
    # sum_{p<=x} 1/p = log log x + M + O(1/log^2 x)
    lp = math.log(table_1e6.prime(1_000_000))
    assert K.psi_n(0.0, table_1e6) == pytest.approx(0.5 * (math.log(lp) + MERTENS), abs=2e-3)


def test_kernel_bound_check_uniform(table_1e6):
    lags = np.geomspace(1e-4, 1.0, 1000)
    c4 = K.kernel_bound_check(table_1e6, 10_000, lags)
    c6 = K.kernel_bound_check(table_1e6, 1_000_000, lags)
    assert max(c4.c, c6.c) / min(c4.c, c6.c) < 2
    at_one = K.kernel_bound_check(table_1e6, 10_000, [1.0])
    assert at_one.c == pytest.approx(abs(K.psi_n(1.0, table_1e6, 10_000)), abs=1e-15)
    with pytest.raises(ValueError):
        K.kernel_bound_check(table_1e6, 100, [0.0, 0.5])


@pytest.mark.parametrize("u", [1e-3, 0.1, 0.5, 1.0, 2.0, 3.9, -0.7])
def test_zeta_line_against_mpmath(u):
    want = complex(mpmath.zeta(mpmath.mpc(1, u)))
    got = K.zeta_1_plus_iu(u)
    assert abs(got - want) <= 1e-10 * abs(want)


def test_zeta_line_properties():
    u = np.array([0.3, 1.7])
    assert np.allclose(K.zeta_1_plus_iu(-u), np.conj(K.zeta_1_plus_iu(u)), rtol=1e-12, atol=0)
    assert abs(K.zeta_1_plus_iu(1e-3)) * 1e-3 == pytest.approx(1.0, rel=0.01)
    with pytest.raises(ValueError):
        K.zeta_1_plus_iu(0.0)
    with pytest.raises(ValueError):
        K.zeta_1_plus_iu(5.0)


def test_log_zeta_branch():
    # continuous from the pole where zeta ~ 1/(iu) has phase -pi/2
    near = K.log_zeta_1_plus_iu(1e-4)
    assert near.imag == pytest.approx(-math.pi / 2, abs=1e-3)
    for u in (0.5, 2.0):
        lz = K.log_zeta_1_plus_iu(u)
        assert lz.real == pytest.approx(float(mpmath.log(abs(mpmath.zeta(mpmath.mpc(1, u))))), abs=1e-12)
        assert complex(mpmath.exp(lz)) == pytest.approx(K.zeta_1_plus_iu(u), rel=1e-12)


@pytest.mark.parametrize("s", [2.0, 3.5 + 1j, 1.0 + 10j, 0.5 + 14j])
def test_zeta_general_against_mpmath(s):
    want = complex(mpmath.zeta(s))
    assert abs(K.zeta(s) - want) <= 1e-12 * max(1.0, abs(want))


def _a_oracle(u):
    s = mpmath.mpc(1, u)
    return complex(mpmath.nsum(lambda k: mpmath.primezeta(k * s) / k, [2, mpmath.inf]))


@pytest.mark.parametrize("u", [0.0, 0.5, 2.0])
def test_a_double_sum_against_mpmath(u):
    val, bound = K.a_double_sum(u)
    assert bound < 1e-12
    assert abs(val - _a_oracle(u)) < 1e-12


def test_a_double_sum_properties():
    a0, _ = K.a_double_sum(0.0)
    assert a0.imag == 0.0
    assert a0.real == pytest.approx(0.3157184520538, abs=1e-12)
    majorant = float(mpmath.nsum(lambda k: mpmath.primezeta(k), [2, mpmath.inf]))
    assert majorant == pytest.approx(0.7731566690497, abs=1e-12)
    for u in (0.1, 1.3, 3.0):
        assert abs(K.a_double_sum(u)[0]) <= majorant


@pytest.mark.parametrize("u", [0.1, 0.5, 1.0, 2.0])
def test_psi_limit_zeta_route_against_mpmath(u):
    s = mpmath.mpc(1, u)
    want = 0.5 * float(mpmath.log(abs(mpmath.zeta(s)))) - 0.5 * _a_oracle(u).real
    assert K.psi_limit(u) == pytest.approx(want, abs=1e-12)


def test_psi_limit_even_and_domain():
    assert K.psi_limit(-0.3) == K.psi_limit(0.3)
    with pytest.raises(ValueError):
        K.psi_limit(0.0)
    with pytest.raises(ValueError):
        K.psi_limit(2.5)
    with pytest.raises(ValueError):
        K.psi_limit(0.5, route="prime_sum")


def test_psi_limit_prime_route_small_table(table_1e6):
    # the tail-corrected prime route already agrees to ~1e-4 with 10^6 primes
    for u in (0.5, 1.0):
        assert K.psi_limit(u, "prime_sum", table_1e6) == pytest.approx(K.psi_limit(u), abs=1e-4)


def test_g_is_continuous():
    fine = np.linspace(0.01, 2.0, 10_000)
    g = K.g_limit(fine)
    coarse = np.linspace(0.01, 2.0, 200)
    gc = K.g_limit(coarse)
    slope = np.max(np.abs(np.diff(gc) / np.diff(coarse)))
    h = fine[1] - fine[0]
    assert np.max(np.abs(np.diff(g))) < 10 * h * slope


def test_log_i0_against_mpmath():
    for x in (1e-6, 0.1, 1 / math.sqrt(2), 5.0, 50.0, 800.0):
        assert K.log_i0(x) == pytest.approx(float(mpmath.log(mpmath.besseli(0, x))), rel=1e-14)


def test_normalization_values(table_1e6):
    nc = K.normalization(table_1e6, 1, 1.0)
    quad = float(mpmath.quad(lambda t: mpmath.exp(mpmath.cos(t) / mpmath.sqrt(2)), [0, 2 * mpmath.pi]))
    assert nc.log_norm_exact == pytest.approx(math.log(quad / (2 * math.pi)), abs=1e-14)
    assert nc.log_norm_exact == pytest.approx(0.1212976782, abs=1e-10)
    zero = K.normalization(table_1e6, 100, 0.0)
    assert zero.log_norm_exact == 0.0 and zero.log_norm_gaussian == 0.0
    g3 = K.normalization(table_1e6, 1000, 2.0).gap
    g6 = K.normalization(table_1e6, 1_000_000, 2.0).gap
    assert abs(g3 - g6) < 0.05


def test_si_and_c_hat():
    assert K.c_hat(0.0) == 2.0
    assert K.si(math.pi) == pytest.approx(float(mpmath.si(mpmath.pi)), abs=1e-14)
    assert K.si(math.pi) == pytest.approx(1.8519370, abs=1e-7)
    for k in (0.5, 7.9, 8.1, 30.0):
        assert K.si(k) == pytest.approx(float(mpmath.si(k)), abs=1e-13)
    assert abs(K.c_hat(100.0) - math.pi / 100) < 2 / 100**2
    ks = np.geomspace(1e-6, 1e4, 2000)
    assert np.all(K.c_hat(ks) >= 0)
    assert K.c_hat(1e-9) == pytest.approx(2.0, abs=1e-15)


def test_kernel_table_skips_pole(table_small):
    rows, skipped = K.kernel_table([0.0, 0.5, 3.0], table_small, 1000)
    assert skipped == [0.0]
    assert len(rows) == 2
    u, pn, z, pr, g = rows[0]
    assert g == pytest.approx(z - 0.5 * math.log(2.0))
    assert math.isnan(rows[1][2])
