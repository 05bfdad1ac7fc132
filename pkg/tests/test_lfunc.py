from __future__ import annotations
import math

import mpmath
import pytest
from hypothesis import assume, given, settings, strategies as st
from mpmath import mp

from heegner_point.cache import ApCache
from heegner_point.ec_curve import curve_from_coeffs, quadratic_twist, torsion_structure
from heegner_point.errors import DomainError, EvenSignError, NoDiscriminantError
from heegner_point.lfunc import (
    GZ_TOLERANCE,
    an_expand,
    analytic_sign,
    bsd_height,
    discriminant_predicates,
    gross_zagier_height,
    heegner_index,
    l_derivative,
    l_value,
    prime_table,
    select_discriminant,
    terms_needed,
    twisted_l_value,
    zero_tolerance,
)
from heegner_point.modparam import period_lattice
from heegner_point.numerics import digits_to_bits
from heegner_point.quadforms import sqrts_mod_4N

L_DERIV_37A = mpmath.mpf("0.305999773834052")
L_VALUE_11A = mpmath.mpf("0.253841860855911")
H_GEN_37A = mpmath.mpf("0.0511114082399688")


@pytest.fixture(scope="module")
def coeffs37(e37):
    return an_expand(e37, 400)


def test_an_37a(coeffs37):
    assert coeffs37.an[1:14] == [1, -2, -3, 2, -2, 6, -1, 0, 6, 4, -5, -6, -2]
    assert coeffs37[37] == -1


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=20), st.integers(min_value=1, max_value=20))
def test_an_multiplicative(coeffs37, m, n):
    assume(math.gcd(m, n) == 1)
    assert coeffs37[m * n] == coeffs37[m] * coeffs37[n]


def test_an_hecke_recursion(coeffs37):
    for p in (2, 3, 5):
        ap_ = coeffs37[p]
        pk = p
        while pk * p * p <= 400:
            assert coeffs37[pk * p] == ap_ * coeffs37[pk] - p * coeffs37[pk // p]
            pk *= p


def test_prime_table_uses_cache(tmp_path, e37):
    cache = ApCache(tmp_path, e37.coeffs)
    table = prime_table(e37, 50, cache=cache)
    assert table[2] == -2 and table[37] == -1
    assert ApCache(tmp_path, e37.coeffs).table == table


def test_analytic_sign(coeffs37, e11):
    assert analytic_sign(coeffs37, 37) == -1
    assert analytic_sign(an_expand(e11, 200), 11) == 1


def test_l_derivative_37a(coeffs37):
    prec = digits_to_bits(25)
    value = l_derivative(coeffs37, 37, -1, prec)
    assert abs(value - L_DERIV_37A) < 1e-14
    assert l_value(coeffs37, 37, -1, prec) == 0


def test_l_derivative_needs_odd_sign(coeffs37):
    with pytest.raises(EvenSignError):
        l_derivative(coeffs37, 37, 1, 53)


def test_l_value_11a(e11):
    coeffs = an_expand(e11, 200)
    value = l_value(coeffs, 11, 1, digits_to_bits(25))
    assert abs(value - L_VALUE_11A) < 1e-14


def test_terms_needed_grows():
    assert terms_needed(100, 37) < terms_needed(200, 37) < terms_needed(200, 370)


def test_discriminant_predicates(e37):
    ok = discriminant_predicates(e37, -7)
    assert all(ok.values())
    bad = discriminant_predicates(e37, -8)
    assert bad == {"fundamental": True, "square_mod_4N": False, "coprime": False}
    assert not discriminant_predicates(e37, -12)["fundamental"]


def test_select_discriminant_37a(e37):
    D, S = select_discriminant(e37)
    assert D == -7
    assert S == sorted(S) and len(S) == 2
    value = twisted_l_value(e37, D)
    assert abs(value) > zero_tolerance(16)


def test_select_discriminant_empty_range(e37):
    with pytest.raises(NoDiscriminantError):
        select_discriminant(e37, -8, -10)


def test_twisted_l_value_matches_direct_expansion(e37):
    # 扭曲的 L 值也可以直接对 E_D 展开计算
    twist = quadratic_twist(e37, -7)
    coeffs = an_expand(twist, 400)
    direct = l_value(coeffs, twist.conductor, 1, 40)
    assert abs(twisted_l_value(e37, -7, prec=30) - direct) < 1e-6


def test_bsd_height_37a(e37, coeffs37):
    prec = digits_to_bits(25)
    lattice = period_lattice(e37, prec)
    torsion = torsion_structure(e37)
    h = bsd_height(e37, lattice, torsion, l_derivative(coeffs37, 37, -1, prec))
    assert abs(h - H_GEN_37A) < 1e-14


def test_heegner_index_37a(e37, coeffs37):
    prec = digits_to_bits(25)
    lattice = period_lattice(e37, prec)
    torsion = torsion_structure(e37)
    l_deriv = l_derivative(coeffs37, 37, -1, prec)
    twisted = twisted_l_value(e37, -7, prec=prec)
    index = heegner_index(e37, -7, 0, lattice, torsion, l_deriv, twisted)
    assert index.l >= 1
    assert abs(index.l_raw - index.l) < 0.01
    assert index.w_D == 2 and index.omega_shared == 0
    # w = 2、ω = 0：高度为 √7/(4Ω_vol)·L'(E,1)·L(E_D,1)
    with mp.workprec(prec):
        expected = mpmath.sqrt(7) / (4 * lattice.omega_vol) * l_deriv * twisted
    assert abs(index.heegner_height - expected) < 1e-18 * expected
    assert abs(index.heegner_height / index.h_target - index.l**2) < 1e-12
    assert index.gz_residual < 1e-12


def test_gross_zagier_height_counts_shared_primes(e37):
    lattice = period_lattice(e37, 80)
    base = gross_zagier_height(lattice, mpmath.mpf(1), mpmath.mpf(1), -7, 0)
    assert abs(gross_zagier_height(lattice, mpmath.mpf(1), mpmath.mpf(1), -7, 2) - 4 * base) < 1e-20
    # D = -3 有 6 个单位
    h3 = gross_zagier_height(lattice, mpmath.mpf(1), mpmath.mpf(1), -3, 0)
    assert abs(h3 / base - 9 * mpmath.sqrt(3) / mpmath.sqrt(7)) < 1e-20


def test_heegner_index_flags_inconsistent_twist(e37, coeffs37):
    prec = digits_to_bits(25)
    lattice = period_lattice(e37, prec)
    torsion = torsion_structure(e37)
    l_deriv = l_derivative(coeffs37, 37, -1, prec)
    twisted = twisted_l_value(e37, -7, prec=prec) * mpmath.mpf("1.3")
    index = heegner_index(e37, -7, 0, lattice, torsion, l_deriv, twisted)
    assert index.gz_residual > GZ_TOLERANCE


def test_l_value_rejects_short_expansion(e11):
    with pytest.raises(DomainError):
        l_value(an_expand(e11, 5), 11, 1, 83)


def test_shared_factor_discriminant_needs_flag(e1):
    # gcd(-932, 2N) = 4，gcd(-932, N) = 2 无平方因子
    assert discriminant_predicates(e1, -932)["coprime"] is False
    assert all(discriminant_predicates(e1, -932, allow_shared_factors=True).values())


@pytest.mark.slow
def test_index_for_large_conductor():
    E = curve_from_coeffs(0, 1, 1, -4912150272, -132513750628709)
    prec = digits_to_bits(15)
    lattice = period_lattice(E, prec)
    l_deriv = l_derivative(an_expand(E, terms_needed(prec, E.N)), E.N, -1, prec)
    beta = min(sqrts_mod_4N(-795, E.N))
    index = heegner_index(E, -795, beta, lattice, torsion_structure(E), l_deriv, twisted_l_value(E, -795))
    assert index.l == 4
    assert abs(index.h_target - 3239.048) < 0.01
