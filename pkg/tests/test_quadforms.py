from __future__ import annotations
import math
from fractions import Fraction

import pytest
from hypothesis import assume, given, settings, strategies as st
from sympy import factorint

from heegner_point.errors import DomainError
from heegner_point.models import QuadForm
from heegner_point.quadforms import (
    act,
    class_group,
    compose,
    conjugate_form,
    discriminant,
    form_pow,
    inverse,
    is_fundamental,
    is_heegner,
    is_reduced,
    principal_form,
    reduce_form,
    reduced,
    reduced_forms,
    sqrts_mod_4N,
)
from heegner_point.utils import chi_at_prime

GROUP_DISCS = [-23, -47, -56, -84, -795, -932]


def kronecker(D: int, a: int) -> int:
    value = 1
    for p, k in factorint(a).items():
        value *= chi_at_prime(D, p) ** k
    return value


def dirichlet_class_number(D: int) -> int:
    """h(D) = -(1/|D|) Σ_{0<a<|D|} χ_D(a)·a，D < -4。"""
    total = sum(kronecker(D, a) * a for a in range(1, -D))
    h = Fraction(-total, -D)
    assert h.denominator == 1
    return int(h)


@pytest.mark.parametrize(
    "D,h,structure",
    [(-3, 1, ()), (-4, 1, ()), (-23, 3, (3,)), (-47, 5, (5,)), (-56, 4, (4,)), (-84, 4, (2, 2)), (-932, 12, (12,))],
)
def test_class_group(D, h, structure):
    G = class_group(D)
    assert G.h == h == len(G.reduced_forms)
    assert G.structure == structure


def test_reduced_forms_minus_23():
    assert reduced_forms(-23) == [QuadForm(1, 1, 6), QuadForm(2, -1, 3), QuadForm(2, 1, 3)]


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=5, max_value=600))
def test_class_number_matches_dirichlet(n):
    D = -n
    assume(is_fundamental(D))
    assert class_group(D).h == dirichlet_class_number(D)


@pytest.mark.parametrize("D,expected", [(-3, True), (-4, True), (-7, True), (-8, True), (-12, False), (-16, False), (-1, False), (5, True)])
def test_is_fundamental(D, expected):
    assert is_fundamental(D) is expected


def test_class_group_rejects_non_fundamental():
    with pytest.raises(DomainError):
        class_group(-12)
    with pytest.raises(DomainError):
        class_group(5)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(min_value=1, max_value=60),
    st.integers(min_value=-80, max_value=80),
    st.integers(min_value=1, max_value=200),
)
def test_reduce_form_is_equivalence(A, B, C):
    f = QuadForm(A, B, C)
    assume(discriminant(f) < 0)
    g, M = reduce_form(f)
    al, be, ga, de = M
    assert al * de - be * ga == 1
    assert act(f, M) == g
    assert is_reduced(g)
    assert discriminant(g) == discriminant(f)


def test_reduce_form_rejects_indefinite():
    with pytest.raises(DomainError):
        reduce_form(QuadForm(1, 3, 1))


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_composition_group_laws(data):
    D = data.draw(st.sampled_from(GROUP_DISCS))
    forms = reduced_forms(D)
    f, g, k = (data.draw(st.sampled_from(forms)) for _ in range(3))
    one = principal_form(D)
    assert compose(f, one) == reduced(f)
    assert compose(f, g) == compose(g, f)
    assert compose(compose(f, g), k) == compose(f, compose(g, k))
    assert compose(f, inverse(f)) == one


def test_squaring_order_three():
    f = QuadForm(2, 1, 3)
    assert compose(f, f) == QuadForm(2, -1, 3)
    assert form_pow(f, 3) == principal_form(-23)


def test_compose_rejects_mixed_discriminants():
    with pytest.raises(DomainError):
        compose(QuadForm(1, 1, 6), QuadForm(1, 1, 2))


def represents(f: QuadForm, n: int) -> bool:
    """正定形式 f 是否表示 n：4An = (2Ax+By)^2 - Dy^2。"""
    A, B = f.A, f.B
    D = discriminant(f)
    for y in range(math.isqrt(4 * A * n // -D) + 1):
        s2 = 4 * A * n + D * y * y
        s = math.isqrt(s2)
        if s * s != s2:
            continue
        if any((t - B * y) % (2 * A) == 0 for t in (s, -s)):
            return True
    return False


def _check_product_values(f: QuadForm, g: QuadForm) -> None:
    h = compose(f, g)
    assert discriminant(h) == discriminant(f)
    for m in (f.A, f.C):
        for n in (g.A, g.C):
            assert represents(h, m * n)
    assert compose(f, inverse(f)) == principal_form(discriminant(f))


@pytest.mark.parametrize("D", GROUP_DISCS)
def test_composition_represents_products(D):
    forms = reduced_forms(D)
    for f in forms:
        for g in forms:
            _check_product_values(f, g)


@settings(max_examples=80, deadline=None)
@given(st.integers(min_value=3, max_value=3000), st.data())
def test_composition_represents_products_random(n, data):
    D = -n
    assume(is_fundamental(D))
    forms = reduced_forms(D)
    f = data.draw(st.sampled_from(forms))
    g = data.draw(st.sampled_from(forms))
    _check_product_values(f, g)


def test_square_of_ambiguous_form():
    # (2,0,7) 的阶为 2
    assert compose(QuadForm(2, 0, 7), QuadForm(2, 0, 7)) == principal_form(-56)


def test_sqrts_mod_4N():
    assert sqrts_mod_4N(-932, 11682) == {214, 2338, 2810, 4934, 18430, 20554, 21026, 23150}
    assert sqrts_mod_4N(-795, 421859) == {234525, 384997, 458721, 609193}
    assert sqrts_mod_4N(-8, 37) == set()


@pytest.mark.parametrize("D,N", [(-932, 11682), (-795, 421859), (-7, 37)])
def test_sqrts_square_to_D(D, N):
    for b in sqrts_mod_4N(D, N):
        assert 0 <= b < 2 * N
        assert (b * b - D) % (4 * N) == 0


def test_heegner_forms_and_conjugates():
    N = 11682
    f = QuadForm(N, 214, 1)
    assert discriminant(f) == -932
    assert is_heegner(f, N)
    g = conjugate_form(f, N)
    assert g == QuadForm(1, -214, N)
    assert discriminant(g) == -932
    assert not is_heegner(QuadForm(2, 1, 3), 11682)
    with pytest.raises(DomainError):
        conjugate_form(QuadForm(2, 1, 3), N)


def test_heegner_forms_for_large_conductor():
    # N = 66157667、D = -1435 的两个代表形式
    N = 66157667
    roots = sqrts_mod_4N(-1435, N)
    for f in (QuadForm(N, 2599591, 25537), QuadForm(N, 37610323, 5345323)):
        assert discriminant(f) == -1435
        assert is_heegner(f, N)
        assert f.B in roots
