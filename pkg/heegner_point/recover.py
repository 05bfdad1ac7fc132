from __future__ import annotations
import itertools
import logging
import math
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import mpmath
from mpmath import mp
from sympy import divisors

from .ec_curve import CurveQ
from .errors import DomainError, ReconstructionError
from .models import AffinePointQ, HeightBudget, LocalHeightMenu, PeriodLattice
from .modparam import elliptic_exp, elliptic_log, reduced_basis
from .numerics import GUARD_BITS, bits_to_digits, rounded
from .utils import isqrt_exact, valuation

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------- 局部高度


def _corrections(kodaira: str) -> List[Fraction]:
    """各 Kodaira 类型下局部高度相对 vΔ/6 的可能修正（以 log p 为单位，大规范）。"""
    if kodaira == "I0":
        return [Fraction(0)]
    if kodaira.startswith("I") and kodaira.endswith("*") and kodaira[1:-1].isdigit() and kodaira != "I0*":
        m = int(kodaira[1:-1])
        return [Fraction(0), Fraction(1), Fraction(m + 4, 4)]
    table = {
        "I0*": [Fraction(0), Fraction(1)],
        "II": [Fraction(0)],
        "II*": [Fraction(0)],
        "III": [Fraction(0), Fraction(1, 2)],
        "III*": [Fraction(0), Fraction(3, 2)],
        "IV": [Fraction(0), Fraction(2, 3)],
        "IV*": [Fraction(0), Fraction(4, 3)],
    }
    if kodaira in table:
        return table[kodaira]
    if kodaira.startswith("I") and kodaira[1:].isdigit():
        n = int(kodaira[1:])
        return [Fraction(i * (n - i), n) for i in range(n // 2 + 1)]
    raise DomainError(f"未知的 Kodaira 符号: {kodaira}")


def local_height_candidates(kodaira: str, v_delta: int, p: int, prec: int) -> List[Tuple[Fraction, mpmath.mpf]]:
    with mp.workprec(prec + GUARD_BITS):
        logp = mpmath.log(p)
        return [(corr, (Fraction(v_delta, 6) - corr) * logp) for corr in _corrections(kodaira)]


def height_menu(E: CurveQ, prec: int) -> LocalHeightMenu:
    return LocalHeightMenu(
        {ld.p: local_height_candidates(ld.kodaira, ld.v_delta, ld.p, prec) for ld in E.local}
    )


def _vq(x: Fraction, p: int) -> int:
    if x == 0:
        return 1 << 30
    return valuation(x.numerator, p) - valuation(x.denominator, p)


def local_height_p(E: CurveQ, P: AffinePointQ, p: int, prec: int):
    """p 处的局部高度（不含 log 分母部分），模型须在 p 处极小。"""
    x, y = P.x, P.y
    a1, a2, a3, a4, _ = E.coeffs
    b2, b4, b6, b8 = E.b_invariants
    N = valuation(E.discriminant, p)
    A = _vq(3 * x * x + 2 * a2 * x + a4 - a1 * y, p)
    B = _vq(2 * y + a1 * x + a3, p)
    C = _vq(3 * x**4 + b2 * x**3 + 3 * b4 * x * x + 3 * b6 * x + b8, p)
    if A <= 0 or B <= 0:
        L = Fraction(0)
    elif E.c4 % p != 0:
        n = min(Fraction(B), Fraction(N, 2))
        L = -n * (N - n) / N
    elif C >= 3 * B:
        L = Fraction(-2 * B, 3)
    else:
        L = Fraction(-C, 4)
    with mp.workprec(prec + GUARD_BITS):
        return (Fraction(N, 6) + L) * mpmath.log(p)


def height_infinity(z, lattice: PeriodLattice, prec: int):
    """阿基米德局部高度（大规范，即 Néron 函数的两倍），由 q 乘积计算。"""
    with mp.workprec(prec + GUARD_BITS):
        w1, w2 = reduced_basis(mpmath.mpc(lattice.omega_re), lattice.omega_im)
        tau = w2 / w1
        w = mpmath.mpc(z) / w1
        w -= mpmath.floor(mpmath.im(w) / mpmath.im(tau)) * tau
        t = mpmath.im(w) / mpmath.im(tau)
        two_pi_i = 2j * mpmath.pi
        q = mpmath.exp(two_pi_i * tau)
        u = mpmath.exp(two_pi_i * w)
        log_q = -2 * mpmath.pi * mpmath.im(tau)
        b2 = t * t - t + mpmath.mpf(1) / 6
        lam = -b2 * log_q / 2 - mpmath.log(abs(1 - u))
        qn = q
        eps = mpmath.mpf(2) ** (-prec - GUARD_BITS)
        while True:
            term = mpmath.log(abs((1 - qn * u) * (1 - qn / u)))
            lam -= term
            if abs(qn) < eps * abs(u):
                break
            qn *= q
        value = 2 * lam
    return rounded(value, prec)


def height_infinity_point(E: CurveQ, P: AffinePointQ, lattice: PeriodLattice, prec: int):
    with mp.workprec(prec + GUARD_BITS):
        x = mpmath.mpf(P.x.numerator) / P.x.denominator
        y = mpmath.mpf(P.y.numerator) / P.y.denominator
        z = elliptic_log(E, x, y, lattice, prec)
    return height_infinity(z, lattice, prec)


def canonical_height(E: CurveQ, P: AffinePointQ, lattice: PeriodLattice, prec: int):
    """ĥ(P) = h_∞ + Σ_{p|Δ} h_p + log(x 的分母)，大规范。"""
    if P.is_infinity:
        return mpmath.mpf(0)
    with mp.workprec(prec + GUARD_BITS):
        total = height_infinity_point(E, P, lattice, prec)
        for p in E.bad_primes:
            total += local_height_p(E, P, p, prec)
        total += mpmath.log(P.x.denominator)
    return rounded(total, prec)


# ---------------------------------------------------------------- 连分数


def to_fraction(x) -> Fraction:
    man, exp = mpmath.mpf(x).man_exp
    man = int(man)
    return Fraction(man * 2**exp) if exp >= 0 else Fraction(man, 2 ** (-exp))


def contfrac_recognize(x_real, denom_bound: int) -> Optional[Fraction]:
    """分母 <= bound 的最佳有理逼近；误差超过 bound^-2 时返回 None。"""
    x = to_fraction(x_real)
    best = x.limit_denominator(denom_bound)
    if abs(x - best) <= Fraction(1, denom_bound * denom_bound):
        return best
    return None


# ---------------------------------------------------------------- 重建


def point_from_x(E: CurveQ, x: Fraction, y_hint) -> Optional[AffinePointQ]:
    """x = n / e^2 时求出精确的 y，取与 y_hint 最接近的符号。"""
    e = isqrt_exact(x.denominator)
    if e is None:
        return None
    n = x.numerator
    b2, b4, b6, _ = E.b_invariants
    rhs = 4 * n**3 + b2 * n * n * e**2 + 2 * b4 * n * e**4 + b6 * e**6
    r = isqrt_exact(rhs)
    if r is None:
        return None
    options = []
    for s in (r, -r):
        y = (Fraction(s, e**3) - E.a1 * x - E.a3) / 2
        options.append(AffinePointQ(x, y))
    P = min(options, key=lambda Q: abs(float(Q.y) - float(y_hint)))
    return P if E.is_on_curve(P) else None


def _tuples_by_height(menu: LocalHeightMenu) -> List[Tuple[Tuple[int, ...], Dict[int, object]]]:
    primes = sorted(menu.entries)
    combos = []
    for idx in itertools.product(*(range(menu.count(p)) for p in primes)):
        chosen = {p: menu.entries[p][i][1] for p, i in zip(primes, idx)}
        combos.append((idx, chosen))
    combos.sort(key=lambda c: (-sum(c[1].values()), c[0]))
    return combos


def reconstruct_point(
    candidates: Sequence[Tuple[int, int, object]],
    E: CurveQ,
    h_target,
    l: int,
    lattice: PeriodLattice,
    prec: int,
    tolerance_floor: float = 1e-6,
) -> Tuple[AffinePointQ, int, int, HeightBudget]:
    """Cremona-Silverman 重建：返回 (点, k, u, 高度分解)，点的高度为 k^2·h_target。"""
    if h_target <= 0:
        raise DomainError("h_target 必须为正")
    menu = height_menu(E, prec)
    combos = _tuples_by_height(menu)
    digits = bits_to_digits(prec)
    tol = max(mpmath.mpf(10) ** (-digits / 4), mpmath.mpf(tolerance_floor))
    nearest: List[Dict] = []
    logger.info("Reconstruction: %d candidates x %d local-height tuples", len(candidates), len(combos))

    with mp.workprec(prec + GUARD_BITS):
        for u, branch, zdot in candidates:
            x_real, y_real = elliptic_exp(zdot, E, lattice, prec)
            h_inf = height_infinity(zdot, lattice, prec)
            for k in divisors(l):
                target = h_target * k * k
                for idx, chosen in combos:
                    log_e2 = target - h_inf - sum(chosen.values())
                    if log_e2 < -1:
                        continue
                    e = mpmath.exp(log_e2 / 2)
                    e_hat = max(1, int(mpmath.nint(e)))
                    miss = abs(e - e_hat) / e_hat
                    if miss >= tol:
                        nearest.append({"u": u, "k": k, "tuple": idx, "miss": float(miss)})
                        continue
                    num = int(mpmath.nint(x_real * e_hat * e_hat))
                    P = point_from_x(E, Fraction(num, e_hat * e_hat), y_real)
                    if P is None:
                        logger.debug("u=%d k=%d tuple=%s: e_hat=%d gives no rational point", u, k, idx, e_hat)
                        continue
                    h = canonical_height(E, P, lattice, prec)
                    if abs(h - target) > mpmath.mpf("1e-10") * max(1, target):
                        logger.debug("u=%d: height check failed (%s vs %s)", u, mpmath.nstr(h, 15), mpmath.nstr(target, 15))
                        continue
                    budget = HeightBudget(target, h_inf, chosen, 2 * mpmath.log(e_hat))
                    logger.info("Point recovered: u=%d, k=%d, tuple=%s, e=%d", u, k, idx, e_hat)
                    return P, k, u, budget

    nearest.sort(key=lambda r: r["miss"])
    raise ReconstructionError("所有候选组合都未能重建有理点，请提高精度", nearest[:5])
