from __future__ import annotations
import math

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from heegner_point.ec_curve import curve_from_coeffs, global_root_number, local_root_numbers
from heegner_point.errors import DomainError
from heegner_point.heegner_enum import (
    atkin_lehner_form,
    atkin_lehner_matrix,
    atkin_lehner_tau,
    beta_q,
    numeric_sign_check,
    pairing_class,
    plan_min_imag,
    tau_representatives,
)
from heegner_point.lfunc import an_expand
from heegner_point.models import QuadForm
from heegner_point.modparam import period_lattice, phi_terms
from heegner_point.numerics import digits_to_bits
from heegner_point.quadforms import class_group, discriminant, reduced, sqrts_mod_4N

N1 = 11682
EPS1 = {2: 1, 3: -1, 11: -1, 59: 1}
# 2·3^2·11·59 的全部 Hall 因子
HALL_N1 = [q for q in range(1, N1 + 1) if N1 % q == 0 and math.gcd(q, N1 // q) == 1]


@pytest.mark.parametrize("Q", HALL_N1)
def test_atkin_lehner_matrix_determinant(Q):
    uQ, v, n, q = atkin_lehner_matrix(Q, N1)
    assert n == N1 and q == Q
    assert uQ % Q == 0
    assert uQ * q - v * n == Q


def test_atkin_lehner_needs_exact_divisor():
    with pytest.raises(DomainError):
        atkin_lehner_matrix(3, N1)
    with pytest.raises(DomainError):
        atkin_lehner_matrix(5, N1)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(HALL_N1))
def test_atkin_lehner_form_keeps_discriminant(Q):
    f = QuadForm(N1, 214, 1)
    g = atkin_lehner_form(f, Q, N1)
    assert discriminant(g) == -932
    assert g.A % N1 == 0


def test_beta_q_flips_at_coprime_primes():
    assert beta_q(214, 1, N1, -932) == 214
    for b in sqrts_mod_4N(-7, 37):
        assert beta_q(b, 37, 37, -7) == (-b) % 74


def test_plan_for_e1_discriminant():
    plan = tau_representatives(N1, -932, 214, EPS1)
    got = [(r.form.as_tuple(), r.q_index, r.weight) for r in plan.reps]
    assert got == [
        ((11682, 214, 1), 1, 1),
        ((11682, 214, 1), 2, 1),
        ((11682, 2338, 117), 11, -2),
        ((11682, 2810, 169), 9, -2),
        ((11682, 2810, 169), 18, -2),
        ((11682, 4934, 521), 99, 2),
        ((11682, 4934, 521), 198, 2),
    ]
    assert plan.covered_classes == set(class_group(-932).reduced_forms)
    assert sum(abs(r.weight) for r in plan.reps) == 12
    assert len({r.form for r in plan.reps}) == 4
    assert plan_min_imag(plan, -932) == pytest.approx(math.sqrt(932) / (2 * N1))


def test_plan_without_atkin_lehner_uses_beta_only():
    plan = tau_representatives(N1, -932, 214, EPS1, use_atkin_lehner=False)
    assert len(plan.covered_classes) == 12
    for r in plan.reps:
        assert r.q_index == 1
        assert (r.form.B - 214) % (2 * N1) == 0
    assert plan.max_a > 1


def test_plan_class_number_one():
    beta = sorted(sqrts_mod_4N(-7, 37))[0]
    plan = tau_representatives(37, -7, beta, {37: 1})
    assert len(plan.reps) == 1
    rep = plan.reps[0]
    assert rep.weight == 1 and not rep.take_real_part
    assert reduced(rep.form) == QuadForm(1, 1, 2)
    assert plan.dump() == f"{rep.form.A} {rep.form.B} {rep.form.C} 1"


def test_plan_rejects_bad_beta():
    with pytest.raises(DomainError):
        tau_representatives(N1, -932, 215, EPS1)
    with pytest.raises(DomainError):
        tau_representatives(37, -8, 0, {37: 1})


def test_atkin_lehner_tau_squares_into_gamma0():
    # W_Q^2 / Q 属于 Γ0(N)
    a, b, c, d = atkin_lehner_matrix(37, 37)
    a2, b2, c2, d2 = ((a * a + b * c) // 37, (a * b + b * d) // 37, (c * a + d * c) // 37, (c * b + d * d) // 37)
    assert a2 * d2 - b2 * c2 == 1 and c2 % 37 == 0
    tau = mpmath.mpc("0.13", "0.4")
    once = atkin_lehner_tau(tau, 37, 37)
    assert mpmath.im(once) > 0
    assert abs(atkin_lehner_tau(once, 37, 37) - (a2 * tau + b2) / (c2 * tau + d2)) < 1e-12


def test_pairing_class():
    f = QuadForm(N1, 214, 1)
    self_paired, partner = pairing_class(f, N1)
    assert partner == reduced(QuadForm(1, -214, N1))
    assert self_paired is (reduced(f) == partner)
    # 主类的共轭仍是主类
    assert self_paired


def test_numeric_sign_check_37a(e37):
    lattice = period_lattice(e37, 60)
    coeffs = an_expand(e37, phi_terms(0.13, 60))
    assert numeric_sign_check(coeffs, lattice, 37, 37) == 1
    assert numeric_sign_check(coeffs, lattice, 1, 37) == 1


def test_plan_for_large_conductor():
    N = 421859
    E = curve_from_coeffs(0, 1, 1, -4912150272, -132513750628709)
    eps = local_root_numbers(E)
    assert global_root_number(E) == -1
    beta = min(sqrts_mod_4N(-795, N))
    plan = tau_representatives(N, -795, beta, eps)
    G = class_group(-795)
    assert G.h == 4
    assert plan.covered_classes == set(G.reduced_forms)
    assert sum(abs(r.weight) for r in plan.reps) == G.h


@pytest.mark.slow
@pytest.mark.parametrize("p", [3, 11])
def test_numeric_sign_check_e1(e1, p):
    Q = p ** (2 if p == 3 else 1)
    digits = 12
    lattice = period_lattice(e1, digits_to_bits(digits))
    t = math.sqrt(Q) / (1.25 * N1)
    coeffs = an_expand(e1, phi_terms(t, int(digits * 3.33) + 8))
    assert numeric_sign_check(coeffs, lattice, Q, N1, digits) == EPS1[p]
