from __future__ import annotations
import math
from fractions import Fraction
from pathlib import Path
from typing import List

import pytest

from heegner_point.config import load_config
from heegner_point.ec_curve import CurveQ, curve_from_coeffs
from heegner_point.models import AffinePointQ

ROOT = Path(__file__).resolve().parents[1]
CONFIG_PATH = ROOT / "data" / "config.default.json"

E1_COEFFS = (1, -1, 0, -751055859, -7922219731979)


@pytest.fixture(scope="session")
def cfg():
    return load_config(CONFIG_PATH)


@pytest.fixture(scope="session")
def e37() -> CurveQ:
    return curve_from_coeffs(0, 0, 1, -1, 0)


@pytest.fixture(scope="session")
def e11() -> CurveQ:
    return curve_from_coeffs(0, -1, 1, -10, -20)


@pytest.fixture(scope="session")
def e32() -> CurveQ:
    return curve_from_coeffs(0, 0, 0, -1, 0)


@pytest.fixture(scope="session")
def e1() -> CurveQ:
    return curve_from_coeffs(*E1_COEFFS)


def naive_point_search(E: CurveQ, bound: int) -> List[AffinePointQ]:
    """|x| <= bound 的全部整点，直接解 y 的二次方程。"""
    out: List[AffinePointQ] = []
    for x in range(-bound, bound + 1):
        lin = E.a1 * x + E.a3
        rhs = x**3 + E.a2 * x * x + E.a4 * x + E.a6
        disc = lin * lin + 4 * rhs
        if disc < 0:
            continue
        r = math.isqrt(disc)
        if r * r != disc:
            continue
        for s in {r, -r}:
            if (s - lin) % 2 == 0:
                out.append(AffinePointQ(Fraction(x), Fraction((s - lin) // 2)))
    return out


@pytest.fixture(scope="session")
def point_search():
    return naive_point_search
