from __future__ import annotations
from fractions import Fraction

import mpmath
import pytest

from heegner_point.config import RunConfig
from heegner_point.ec_curve import curve_from_coeffs
from heegner_point.modparam import candidate_points, period_lattice
from heegner_point.numerics import digits_to_bits
from heegner_point.pipeline import run_point

from conftest import E1_COEFFS

# 导子 11682 的秩 1 曲线，生成元 x 坐标有 60 位分子
E1_X = Fraction(
    5908330434812036124963415912002702659341205917464938175508715,
    12337088946900997614694947283**2,
)
E1_HEIGHT = "139.174739524758127811521877478222781093487974225206369462318"
E1_Z = "0.00680702983101357730368201485198918786991251635619740952608094"
E1_ZDOT = "0.00891152819280235244790996808333469812474933020620405901507952"


@pytest.mark.slow
def test_e1_generator(cfg, tmp_path):
    run = RunConfig.from_config(
        cfg,
        list(E1_COEFFS),
        precision_digits=70,
        discriminant=-932,
        allow_shared_factors=True,
        cache_dir=str(tmp_path),
    )
    report = run_point(cfg, run)
    assert report.l == 4
    assert report.point.x == E1_X
    assert report.extra["class_number"] == 12
    with mpmath.mp.workprec(240):
        assert abs(report.h_point - mpmath.mpf(E1_HEIGHT)) < mpmath.mpf(10) ** -50
    # Gross-Zagier 高度 = l^2·h_target，L(E_D,1) 只算到 12 位
    assert abs(report.extra["heegner_height"] / report.h_target - 16) < 1e-8

    prec = digits_to_bits(70)
    lattice = period_lattice(curve_from_coeffs(*E1_COEFFS), prec)
    with mpmath.mp.workprec(prec):
        # z 的实部模 Ω_re，取 ±z
        r = mpmath.re(report.extra["z"]) % lattice.omega_re
        Z = mpmath.mpf(E1_Z)
        assert min(abs(r - Z), abs(lattice.omega_re - r - Z)) < mpmath.mpf(10) ** -50
        zdot = [zd for u, branch, zd in candidate_points(Z, 4, 1, lattice) if u == 2 and branch == 0][0]
        assert abs(mpmath.re(zdot) - mpmath.mpf(E1_ZDOT)) < mpmath.mpf(10) ** -50


@pytest.mark.slow
def test_e1_generator_with_process_pool(cfg, tmp_path):
    run = RunConfig.from_config(
        cfg,
        list(E1_COEFFS),
        precision_digits=70,
        discriminant=-932,
        allow_shared_factors=True,
        cache_dir=str(tmp_path),
        threads=4,
        overlap=True,
    )
    assert run_point(cfg, run).point.x == E1_X
