from __future__ import annotations
from fractions import Fraction

import mpmath
import pytest
from mpmath import mp

from heegner_point.ec_curve import point_mul
from heegner_point.errors import DomainError, ReconstructionError
from heegner_point.models import AffinePointQ
from heegner_point.modparam import elliptic_log, period_lattice
from heegner_point.numerics import digits_to_bits
from heegner_point.recover import (
    canonical_height,
    contfrac_recognize,
    height_infinity_point,
    height_menu,
    local_height_candidates,
    local_height_p,
    point_from_x,
    reconstruct_point,
    to_fraction,
)

PREC = digits_to_bits(30)
P0 = AffinePointQ(Fraction(0), Fraction(0))
H_GEN_37A = mpmath.mpf("0.0511114082399688")

E1_X = Fraction(
    5908330434812036124963415912002702659341205917464938175508715,
    12337088946900997614694947283**2,
)
E1_HEIGHT = "139.174739524758127811521877478222781093487974225206369462318"
E1_H_INF = "2.10306651755149369196435189022120441716979687181328497567075"


@pytest.fixture(autouse=True)
def _working_precision():
    with mp.workprec(PREC):
        yield


@pytest.fixture(scope="module")
def lattice37(e37):
    return period_lattice(e37, PREC)


@pytest.mark.parametrize(
    "kodaira,expected",
    [
        ("I0", [0]),
        ("I1", [0]),
        ("I5", [0, Fraction(4, 5), Fraction(6, 5)]),
        ("I0*", [0, 1]),
        ("I2*", [0, 1, Fraction(3, 2)]),
        ("I13*", [0, 1, Fraction(17, 4)]),
        ("III", [0, Fraction(1, 2)]),
        ("III*", [0, Fraction(3, 2)]),
        ("IV*", [0, Fraction(4, 3)]),
        ("II*", [0]),
    ],
)
def test_local_height_candidates(kodaira, expected):
    got = local_height_candidates(kodaira, 12, 7, PREC)
    assert [c for c, _ in got] == expected
    for corr, value in got:
        assert abs(value - (2 - mpmath.mpf(corr.numerator) / corr.denominator) * mpmath.log(7)) < 1e-25


def test_unknown_kodaira_symbol():
    with pytest.raises(DomainError):
        local_height_candidates("V", 3, 5, PREC)


def test_height_menu(e11, e1):
    assert height_menu(e11, PREC).count(11) == 3
    menu = height_menu(e1, PREC)
    # I25、I13*、I1、I3
    assert [menu.count(p) for p in (2, 3, 11, 59)] == [13, 3, 1, 2]
    assert menu.combinations() == 78


def test_canonical_height_generator_37a(e37, lattice37):
    assert abs(canonical_height(e37, P0, lattice37, PREC) - H_GEN_37A) < 1e-15


@pytest.mark.parametrize("n", [2, 3, 4, 5, 7])
def test_canonical_height_is_quadratic(e37, lattice37, n):
    P = point_mul(e37, P0, n)
    h = canonical_height(e37, P, lattice37, PREC)
    h1 = canonical_height(e37, P0, lattice37, PREC)
    assert abs(h - n * n * h1) < 1e-25 * n * n


def test_integral_point_heights_are_square_multiples(e37, lattice37, point_search):
    h1 = canonical_height(e37, P0, lattice37, PREC)
    for P in point_search(e37, 30):
        ratio = canonical_height(e37, P, lattice37, PREC) / h1
        n = int(mpmath.nint(mpmath.sqrt(ratio)))
        assert abs(ratio - n * n) < 1e-20


def test_torsion_points_have_zero_height(e11):
    lattice = period_lattice(e11, PREC)
    for xy in [(5, 5), (5, -6), (16, 60), (16, -61)]:
        P = AffinePointQ(Fraction(xy[0]), Fraction(xy[1]))
        assert abs(canonical_height(e11, P, lattice, PREC)) < 1e-25


def test_local_heights_of_large_point(e1):
    P = point_from_x(e1, E1_X, 0)
    assert P is not None and e1.is_on_curve(P)
    prec = digits_to_bits(60)
    with mp.workprec(prec):
        lattice = period_lattice(e1, prec)
        assert abs(height_infinity_point(e1, P, lattice, prec) - mpmath.mpf(E1_H_INF)) < mpmath.mpf(10) ** -50
        # p = 2, 11, 59 处非奇异约化，p = 3 处取 13/6
        assert abs(local_height_p(e1, P, 2, prec) - mpmath.mpf(25) / 6 * mpmath.log(2)) < mpmath.mpf(10) ** -50
        assert abs(local_height_p(e1, P, 3, prec) - mpmath.mpf(13) / 6 * mpmath.log(3)) < mpmath.mpf(10) ** -50
        assert abs(local_height_p(e1, P, 11, prec) - mpmath.log(11) / 6) < mpmath.mpf(10) ** -50
        assert abs(local_height_p(e1, P, 59, prec) - mpmath.log(59) / 2) < mpmath.mpf(10) ** -50
        assert abs(canonical_height(e1, P, lattice, prec) - mpmath.mpf(E1_HEIGHT)) < mpmath.mpf(10) ** -50


def test_to_fraction_is_exact():
    with mp.workprec(80):
        x = mpmath.mpf(3) / 7
    q = to_fraction(x)
    assert mpmath.mpf(q.numerator) / q.denominator == x
    assert abs(q - Fraction(3, 7)) < Fraction(1, 2**70)


def test_contfrac_recognize():
    with mp.workprec(120):
        assert contfrac_recognize(mpmath.mpf(1) / 3 + mpmath.mpf("1e-12"), 10**5) == Fraction(1, 3)
        assert contfrac_recognize(mpmath.sqrt(2) / 4, 10) is None
        assert contfrac_recognize(mpmath.mpf(355) / 113, 1000) == Fraction(355, 113)


def test_point_from_x(e37):
    assert point_from_x(e37, Fraction(1, 4), -0.6) == AffinePointQ(Fraction(1, 4), Fraction(-5, 8))
    assert point_from_x(e37, Fraction(1, 4), -0.4) == AffinePointQ(Fraction(1, 4), Fraction(-3, 8))
    assert point_from_x(e37, Fraction(1, 2), 0) is None
    assert point_from_x(e37, Fraction(3), 0) is None


def test_reconstruct_multiple_of_generator(e37, lattice37):
    P5 = point_mul(e37, P0, 5)
    z = elliptic_log(e37, mpmath.mpf(1) / 4, mpmath.mpf(-5) / 8, lattice37, PREC)
    P, k, u, budget = reconstruct_point([(1, 0, z)], e37, H_GEN_37A, 5, lattice37, PREC)
    assert P == P5
    assert (k, u) == (5, 1)
    assert abs(budget.residual()) < 1e-10
    assert abs(budget.log_denominator - 2 * mpmath.log(2)) < 1e-25


def test_reconstruct_reports_nearest_misses(e37, lattice37):
    z = elliptic_log(e37, mpmath.mpf(1) / 4, mpmath.mpf(-5) / 8, lattice37, PREC)
    with pytest.raises(ReconstructionError) as exc:
        reconstruct_point([(1, 0, z)], e37, mpmath.mpf("0.123456"), 1, lattice37, PREC)
    assert 0 < len(exc.value.nearest) <= 5
    assert exc.value.exit_code == 4


def test_reconstruct_needs_positive_target(e37, lattice37):
    with pytest.raises(DomainError):
        reconstruct_point([], e37, mpmath.mpf(0), 1, lattice37, PREC)
