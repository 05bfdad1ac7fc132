from __future__ import annotations
import logging
import math
from typing import Dict, List, Optional, Tuple, Union

import mpmath
import numpy as np
from mpmath import mp
from sympy import primerange

from .cache import ApCache
from .ec_curve import (
    DEFAULT_AP_THRESHOLD,
    CurveQ,
    TwistedCurve,
    ap,
    quadratic_twist,
    real_components,
)
from .errors import DomainError, EvenSignError, NoDiscriminantError, NumericalError, ZeroIndexError
from .models import IndexPrediction, LSeriesCoeffs, PeriodLattice, TorsionGroup
from .numerics import GUARD_BITS, exp_integral_e1, rounded
from .quadforms import is_fundamental, sqrts_mod_4N, unit_count
from .utils import is_squarefree

logger = logging.getLogger(__name__)

AnyCurve = Union[CurveQ, TwistedCurve]

# Gross-Zagier 高度与 l^2·h_target 的相对偏差上限
GZ_TOLERANCE = 1e-6


def terms_needed(prec: int, conductor: int, guard: int = GUARD_BITS) -> int:
    """尾项 < 2^(-prec) 所需的项数。"""
    return math.ceil((prec * math.log(2) + guard) * math.sqrt(conductor) / (2 * math.pi)) + 10


def _bad_primes(curve: AnyCurve) -> set:
    if isinstance(curve, TwistedCurve):
        return set(curve.local)
    return set(curve.local_data)


def prime_table(
    curve: AnyCurve,
    bound: int,
    threshold: int = DEFAULT_AP_THRESHOLD,
    cache: Optional[ApCache] = None,
) -> Dict[int, int]:
    if isinstance(curve, TwistedCurve):
        base = prime_table(curve.base, bound, threshold, cache)
        return {p: curve.ap(p, threshold, base_ap=base[p]) for p in primerange(2, bound + 1)}
    if cache is not None:
        return cache.extend(bound, lambda p: ap(curve, p, threshold))
    return {p: ap(curve, p, threshold) for p in primerange(2, bound + 1)}


def an_expand(
    curve: AnyCurve,
    n_max: int,
    threshold: int = DEFAULT_AP_THRESHOLD,
    cache: Optional[ApCache] = None,
) -> LSeriesCoeffs:
    """由 a_p 经 Hecke 递推与积性得到 a_1..a_{n_max}。"""
    table = prime_table(curve, n_max, threshold, cache)
    bad = _bad_primes(curve)

    spf = np.zeros(n_max + 1, dtype=np.int64)
    for p in sorted(table):
        block = spf[p::p]
        block[block == 0] = p
    an: List[int] = [0] * (n_max + 1)
    if n_max >= 1:
        an[1] = 1
    for n in range(2, n_max + 1):
        p = int(spf[n])
        m, pk = n, 1
        k = 0
        while m % p == 0:
            m //= p
            pk *= p
            k += 1
        if m > 1:
            an[n] = an[pk] * an[m]
        elif k == 1:
            an[n] = table[p]
        elif p in bad:
            an[n] = table[p] * an[n // p]
        else:
            an[n] = table[p] * an[n // p] - p * an[n // (p * p)]
    label = curve.label if isinstance(curve, CurveQ) else f"{curve.base.label}^({curve.D})"
    logger.debug("a_n expanded for %s up to %d", label, n_max)
    return LSeriesCoeffs(label, n_max, an)


def _theta(coeffs: LSeriesCoeffs, t, conductor: int, n_lim: int):
    scale = 2 * mpmath.pi * t / mpmath.sqrt(conductor)
    return mpmath.fsum(coeffs.an[n] * mpmath.exp(-scale * n) for n in range(1, n_lim + 1) if coeffs.an[n])


def analytic_sign(coeffs: LSeriesCoeffs, conductor: int, prec: int = 53) -> int:
    """函数方程符号：θ(1/t) = w t^2 θ(t)，在 t = 1.1 与 1.2 处检验。"""
    n_lim = math.ceil(1.2 * math.sqrt(conductor) * (prec * math.log(2) + 5) / (2 * math.pi))
    if n_lim > coeffs.n_max:
        raise DomainError(f"系数不足: 符号检验需要 {n_lim} 项")
    with mp.workprec(prec):
        estimates = []
        for t in (mpmath.mpf("1.1"), mpmath.mpf("1.2")):
            lhs = _theta(coeffs, 1 / t, conductor, n_lim)
            rhs = t * t * _theta(coeffs, t, conductor, n_lim)
            if abs(rhs) > mpmath.mpf(10) ** -8:
                estimates.append(lhs / rhs)
    signs = {1 if e > 0 else -1 for e in estimates}
    if len(signs) != 1 or any(abs(abs(e) - 1) > 1e-6 for e in estimates):
        raise NumericalError(f"函数方程符号无法确定: {[float(e) for e in estimates]}")
    return signs.pop()


def l_value(coeffs: LSeriesCoeffs, conductor: int, sign: int, prec: int):
    """L(E,1) = (1 + w) Σ (a_n / n) e^{-2πn/√N}，奇符号时为 0。"""
    if sign == -1:
        return mpmath.mpf(0)
    n_max = terms_needed(prec, conductor)
    if n_max > coeffs.n_max:
        raise DomainError(f"系数不足: 需要 {n_max} 项，只有 {coeffs.n_max}")
    with mp.workprec(prec + GUARD_BITS):
        scale = 2 * mpmath.pi / mpmath.sqrt(conductor)
        total = mpmath.fsum(
            mpmath.mpf(coeffs.an[n]) / n * mpmath.exp(-scale * n)
            for n in range(1, n_max + 1)
            if coeffs.an[n]
        )
        value = 2 * total
    return rounded(value, prec)


def l_derivative(coeffs: LSeriesCoeffs, conductor: int, sign: int, prec: int):
    """L'(E,1) = 2 Σ (a_n / n) E1(2πn/√N)，仅用于奇符号。"""
    if sign != -1:
        raise EvenSignError("函数方程符号为偶，L'(E,1) 不是中心值")
    n_max = terms_needed(prec, conductor)
    if n_max > coeffs.n_max:
        raise DomainError(f"系数不足: 需要 {n_max} 项，只有 {coeffs.n_max}")
    work = prec + GUARD_BITS
    with mp.workprec(work):
        scale = 2 * mpmath.pi / mpmath.sqrt(conductor)
        total = mpmath.fsum(
            mpmath.mpf(coeffs.an[n]) / n * exp_integral_e1(scale * n, work)
            for n in range(1, n_max + 1)
            if coeffs.an[n]
        )
        value = 2 * total
    logger.info("L'(E,1) computed with %d terms at %d bits", n_max, prec)
    return rounded(value, prec)


def twisted_l_value(
    E: CurveQ,
    D: int,
    prec: int = 16,
    threshold: int = DEFAULT_AP_THRESHOLD,
    cache: Optional[ApCache] = None,
):
    """L(E_D, 1)，低精度即可（只用于定出指标 l 与零值检验）。"""
    twist = quadratic_twist(E, D)
    n_max = math.ceil((prec * math.log(2) + 2) * math.sqrt(twist.conductor) / (2 * math.pi)) + 10
    coeffs = an_expand(twist, n_max, threshold, cache)
    with mp.workprec(prec + GUARD_BITS):
        scale = 2 * mpmath.pi / mpmath.sqrt(twist.conductor)
        total = mpmath.fsum(
            mpmath.mpf(coeffs.an[n]) / n * mpmath.exp(-scale * n)
            for n in range(1, n_max + 1)
            if coeffs.an[n]
        )
        value = 2 * total
    logger.info("L(E_D,1) for D=%d: N_D=%d, terms=%d, value=%s", D, twist.conductor, n_max, mpmath.nstr(value, 8))
    return value


def zero_tolerance(prec: int) -> float:
    return max(2.0 ** (-prec / 2), 1e-3)


def discriminant_predicates(E: CurveQ, D: int, allow_shared_factors: bool = False) -> Dict[str, bool]:
    """除 L(E_D,1) ≠ 0 以外的全部判别式条件。"""
    shared = math.gcd(D, E.N)
    return {
        "fundamental": D < 0 and is_fundamental(D),
        "square_mod_4N": bool(sqrts_mod_4N(D, E.N)),
        "coprime": math.gcd(D, 2 * E.N) == 1 or (allow_shared_factors and is_squarefree(shared)),
    }


def select_discriminant(
    E: CurveQ,
    d_min: int = -7,
    d_max: int = -5000,
    allow_shared_factors: bool = False,
    prec: int = 16,
    threshold: int = DEFAULT_AP_THRESHOLD,
    cache: Optional[ApCache] = None,
) -> Tuple[int, List[int]]:
    """从 |D| 最小处开始扫描，返回 (D, 排序后的 S(D,N))。"""
    if allow_shared_factors:
        logger.warning("Allowing gcd(D, 2N) > 1: the index formula is conjectural there")
    near_misses: List[Dict] = []
    for D in range(d_min, d_max - 1, -1):
        checks = discriminant_predicates(E, D, allow_shared_factors)
        if not all(checks.values()):
            continue
        value = twisted_l_value(E, D, prec, threshold, cache)
        if abs(value) > zero_tolerance(prec):
            logger.info("Discriminant selected: D=%d", D)
            return D, sorted(sqrts_mod_4N(D, E.N))
        near_misses.append({"D": D, "L(E_D,1)": float(value)})
    raise NoDiscriminantError(f"[{d_min}, {d_max}] 中没有可用的判别式", near_misses)


def bsd_height(E: CurveQ, lattice: PeriodLattice, torsion: TorsionGroup, l_deriv, assume_sha: int = 1):
    """BSD 预测的生成元典范高度 L'(E,1)·#T^2 / (Ω_re·c_∞·Π c_p·#Sha)。"""
    tamagawa = real_components(E) * math.prod(ld.c_p for ld in E.local)
    with mp.workprec(lattice.prec):
        return l_deriv * torsion.order**2 / (lattice.omega_re * tamagawa * assume_sha)


def gross_zagier_height(lattice: PeriodLattice, l_deriv, twisted_value, D: int, omega: int):
    """Gross-Zagier：Heegner 点 y_D 的典范高度 √|D|/(4Ω_vol)·L'(E,1)·L(E_D,1)·2^ω·(w/2)^2。"""
    w = unit_count(D)
    with mp.workprec(lattice.prec):
        return (
            mpmath.sqrt(-D) / (4 * lattice.omega_vol)
            * l_deriv
            * twisted_value
            * 2**omega
            * mpmath.mpf(w * w) / 4
        )


def heegner_index(
    E: CurveQ,
    D: int,
    beta: int,
    lattice: PeriodLattice,
    torsion: TorsionGroup,
    l_deriv,
    twisted_value,
    assume_sha: int = 1,
    tolerance: float = GZ_TOLERANCE,
) -> IndexPrediction:
    """由 BSD 与 Gross-Zagier 公式预测指标 l 与生成元高度。

    Heegner 点高度按 Gross-Zagier 独立计算，再与 l^2·h_target 对照。
    """
    w = unit_count(D)
    omega = len([p for p in E.bad_primes if D % p == 0])
    tamagawa = real_components(E) * math.prod(ld.c_p for ld in E.local)
    tors2 = torsion.order**2
    with mp.workprec(lattice.prec):
        l_sq = (
            lattice.omega_re / (4 * lattice.omega_vol)
            * tamagawa
            * mpmath.sqrt(-D) / tors2
            * twisted_value
            * mpmath.mpf(w * w) / 4
            * 2**omega
            * assume_sha
        )
        l_raw = mpmath.sqrt(l_sq) if l_sq > 0 else mpmath.mpf(0)
        h_target = bsd_height(E, lattice, torsion, l_deriv, assume_sha)
        l = int(mpmath.nint(l_raw))
        if l == 0:
            raise ZeroIndexError("twist has positive rank or precision insufficient")
        if abs(l_raw - l) > 0.01:
            logger.warning("Index %s is not close to an integer (Sha > 1 or precision trouble)", mpmath.nstr(l_raw, 10))
        heegner_height = gross_zagier_height(lattice, l_deriv, twisted_value, D, omega)
        residual = abs(heegner_height - l * l * h_target) / heegner_height
    if residual > tolerance:
        logger.warning(
            "Gross-Zagier height %s disagrees with l^2*h_target=%s (relative %s)",
            mpmath.nstr(heegner_height, 12),
            mpmath.nstr(l * l * h_target, 12),
            mpmath.nstr(residual, 3),
        )
    logger.info("Heegner index l=%d (raw %s), h_target=%s", l, mpmath.nstr(l_raw, 8), mpmath.nstr(h_target, 20))
    return IndexPrediction(D, beta, l_deriv, twisted_value, h_target, heegner_height, l, l_raw, w, omega, residual)
