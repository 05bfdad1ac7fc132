from __future__ import annotations
import logging
import math
from concurrent.futures import Executor
from typing import List, Optional, Tuple

import mpmath
from mpmath import mp

from .ec_curve import CurveQ
from .errors import DomainError, NumericalError
from .models import HeegnerPlan, LSeriesCoeffs, PeriodLattice
from .numerics import GUARD_BITS, agm, rounded

logger = logging.getLogger(__name__)


def weierstrass_invariants(E: CurveQ) -> Tuple[mpmath.mpf, mpmath.mpf]:
    """X = x + b2/12, Y = 2y + a1 x + a3 时 Y^2 = 4X^3 - g2 X - g3。"""
    return mpmath.mpf(E.c4) / 12, mpmath.mpf(E.c6) / 216


def _two_torsion_roots(E: CurveQ):
    g2, g3 = weierstrass_invariants(E)
    roots = mpmath.polyroots([4, 0, -g2, -g3], maxsteps=200, extraprec=2 * mp.prec)
    if E.discriminant > 0:
        return sorted((mpmath.re(r) for r in roots), reverse=True)
    real = min(roots, key=lambda r: abs(mpmath.im(r)))
    others = [r for r in roots if r is not real]
    return [mpmath.re(real)] + sorted(others, key=lambda r: mpmath.im(r))


def _ellipk(m, prec: int):
    return mpmath.pi / (2 * agm(1, mpmath.sqrt(1 - m), prec))


def period_lattice(E: CurveQ, prec: int) -> PeriodLattice:
    work = prec + GUARD_BITS
    with mp.workprec(work):
        roots = _two_torsion_roots(E)
        if E.discriminant > 0:
            e1, e2, e3 = roots
            omega_re = mpmath.pi / agm(mpmath.sqrt(e1 - e3), mpmath.sqrt(e1 - e2), work)
            omega_im = mpmath.mpc(0, mpmath.pi / agm(mpmath.sqrt(e1 - e3), mpmath.sqrt(e2 - e3), work))
        else:
            e1 = roots[0]
            g2, _ = weierstrass_invariants(E)
            H = mpmath.sqrt(3 * e1 * e1 - g2 / 4)
            m = mpmath.mpf(1) / 2 - 3 * e1 / (4 * H)
            omega_re = 2 * _ellipk(m, work) / mpmath.sqrt(H)
            omega_im = mpmath.mpc(omega_re / 2, _ellipk(1 - m, work) / mpmath.sqrt(H))
        omega_vol = omega_re * mpmath.im(omega_im)
        _check_invariants(E, omega_re, omega_im, work)
    lattice = PeriodLattice(
        rounded(omega_re, prec),
        rounded(omega_im, prec),
        rounded(omega_vol, prec),
        1 if E.discriminant > 0 else -1,
        prec,
    )
    logger.info("Period lattice: Omega_re=%s, Omega_im=%s", mpmath.nstr(lattice.omega_re, 15), mpmath.nstr(lattice.omega_im, 15))
    return lattice


def reduced_basis(omega1, omega2):
    """把 (ω1, ω2) 约化到 |Re τ| <= 1/2、|τ| >= 1，τ = ω2/ω1，Im τ > 0。"""
    if mpmath.im(omega2 / omega1) < 0:
        omega2 = -omega2
    while True:
        tau = omega2 / omega1
        k = mpmath.nint(mpmath.re(tau))
        omega2 -= k * omega1
        if abs(omega2) < abs(omega1) * (1 - mpmath.mpf(2) ** (-mp.prec // 2)):
            omega1, omega2 = omega2, -omega1
            continue
        return omega1, omega2


def _eisenstein(tau, k: int):
    q = mpmath.exp(2j * mpmath.pi * tau)
    coef = {4: 240, 6: -504}[k]
    total = mpmath.mpf(1)
    qn = q
    n = 1
    while True:
        term = coef * n ** (k - 1) * qn / (1 - qn)
        total += term
        if abs(term) < mpmath.mpf(2) ** (-mp.prec - 4):
            return total
        qn *= q
        n += 1


def _check_invariants(E: CurveQ, omega_re, omega_im, prec: int) -> None:
    """g2、g3 与格上 Eisenstein 级数一致，否则说明周期计算有误。"""
    w1, w2 = reduced_basis(mpmath.mpc(omega_re), omega_im)
    tau = w2 / w1
    g2, g3 = weierstrass_invariants(E)
    g2_l = (2 * mpmath.pi / w1) ** 4 * _eisenstein(tau, 4) / 12
    g3_l = (2 * mpmath.pi / w1) ** 6 * _eisenstein(tau, 6) / 216
    tol = mpmath.mpf(2) ** (-prec // 2)
    if abs(g2_l - g2) > tol * (1 + abs(g2)) or abs(g3_l - g3) > tol * (1 + abs(g3)):
        raise NumericalError("周期格与曲线不变量不一致")


def lattice_coords(z, lattice: PeriodLattice):
    """z = x Ω_re + y Ω_im 中的 (x, y)。"""
    y = mpmath.im(z) / mpmath.im(lattice.omega_im)
    x = (mpmath.re(z) - y * mpmath.re(lattice.omega_im)) / lattice.omega_re
    return x, y


def lattice_reduce(z, lattice: PeriodLattice):
    """把 z 约化到 x, y ∈ [0, 1) 的基本区域；贴近 1 的坐标归零。"""
    x, y = lattice_coords(z, lattice)
    snap = mpmath.mpf(2) ** (-lattice.prec // 2)
    fx = mpmath.floor(x + snap)
    fy = mpmath.floor(y + snap)
    return z - fx * lattice.omega_re - fy * lattice.omega_im


def distance_to_lattice(z, lattice: PeriodLattice):
    x, y = lattice_coords(z, lattice)
    return abs(z - mpmath.nint(x) * lattice.omega_re - mpmath.nint(y) * lattice.omega_im)


def phi_terms(imag_tau, prec: int) -> int:
    """最小的 n 使 2πn·Im τ > prec·ln2 + ln n + guard。"""
    target = prec * math.log(2) + GUARD_BITS
    step = 2 * math.pi * float(imag_tau)
    n = max(1, int(target / step))
    while step * n <= target + math.log(n):
        n += 1
    return n


def phi_tau(coeffs: LSeriesCoeffs, tau, prec: int):
    """φ(τ) = Σ (a_n / n) e^{2πinτ}。"""
    if mpmath.im(tau) <= 0:
        raise DomainError(f"需要 Im τ > 0: τ={tau}")
    n_max = phi_terms(mpmath.im(tau), prec)
    if n_max > coeffs.n_max:
        raise DomainError(f"系数不足: φ(τ) 需要 {n_max} 项，只有 {coeffs.n_max}")
    with mp.workprec(prec + GUARD_BITS):
        q = mpmath.exp(2j * mpmath.pi * tau)
        qn = mpmath.mpc(1)
        total = mpmath.mpc(0)
        for n in range(1, n_max + 1):
            qn *= q
            a = coeffs.an[n]
            if a:
                total += qn * a / n
    logger.debug("phi(tau) with Im=%s used %d terms", mpmath.nstr(mpmath.im(tau), 6), n_max)
    return rounded(total, prec)


def form_tau(A: int, B: int, C: int, prec: int):
    with mp.workprec(prec + GUARD_BITS):
        D = B * B - 4 * A * C
        return mpmath.mpc(-B, mpmath.sqrt(-D)) / (2 * A)


def _phi_job(coeffs: LSeriesCoeffs, A: int, B: int, C: int, prec: int):
    return phi_tau(coeffs, form_tau(A, B, C, prec), prec)


def heegner_sum(
    coeffs: LSeriesCoeffs,
    plan: HeegnerPlan,
    lattice: PeriodLattice,
    prec: int,
    manin_const: int = 1,
    executor: Optional[Executor] = None,
):
    """z = Σ weight·φ(τ_f)，|weight| = 2 的项只取实部；按方案顺序累加。

    executor 须为进程池：mpmath 的精度上下文是全局的。
    """
    jobs = [(coeffs, r.form.A, r.form.B, r.form.C, prec) for r in plan.reps]
    if executor is not None:
        values = list(executor.map(_phi_job, *zip(*jobs)))
    else:
        values = [_phi_job(*job) for job in jobs]
    with mp.workprec(prec + GUARD_BITS):
        z = mpmath.mpc(0)
        for rep, value in zip(plan.reps, values):
            if rep.take_real_part:
                z += rep.weight * mpmath.re(value)
            else:
                z += rep.weight * value
            logger.debug("phi%s weight=%d -> %s", rep.form, rep.weight, mpmath.nstr(value, 12))
        z *= manin_const
        z = lattice_reduce(z, lattice)
    logger.info("Heegner sum z=%s", mpmath.nstr(z, 20))
    return rounded(z, prec)


def candidate_points(z, l: int, torsion_exponent: int, lattice: PeriodLattice) -> List[Tuple[int, int, object]]:
    """Step 3 候选点 [(u, 分支, ż)]；分支 1 表示加了 Ω_im/2（Δ > 0）或 oΩ_re/2（Δ < 0）。"""
    if l < 1:
        raise DomainError("l 必须 >= 1")
    m = math.gcd(l, torsion_exponent)
    out: List[Tuple[int, int, object]] = []
    with mp.workprec(lattice.prec + GUARD_BITS):
        base = [(m * mpmath.re(z) + u * lattice.omega_re) / (m * l) for u in range(1, l * m + 1)]
        if lattice.disc_sign > 0:
            for u, zd in enumerate(base, start=1):
                out.append((u, 0, mpmath.mpc(zd)))
                out.append((u, 1, zd + lattice.omega_im / 2))
        else:
            ratio = mpmath.im(z) / mpmath.im(lattice.omega_im)
            o = int(mpmath.nint(ratio))
            if abs(ratio - o) > mpmath.mpf(10) ** (-(lattice.prec * 0.30103) / 4):
                logger.warning("Im(z)/Im(Omega_im)=%s is not close to an integer", mpmath.nstr(ratio, 10))
            for u, zd in enumerate(base, start=1):
                out.append((u, o, mpmath.mpc(zd + o * lattice.omega_re / 2)))
    return out


def _wp_series(w, tau, prec: int):
    """ω1 = 1 时的 (℘(w), ℘'(w))，要求 |Im w| <= Im τ / 2。"""
    two_pi_i = 2j * mpmath.pi
    q = mpmath.exp(two_pi_i * tau)
    u = mpmath.exp(two_pi_i * w)
    ui = 1 / u
    p = mpmath.mpf(1) / 12 + u / (1 - u) ** 2
    dp = u * (1 + u) / (1 - u) ** 3
    qn = q
    eps = mpmath.mpf(2) ** (-prec - GUARD_BITS)
    while True:
        a, b = qn * u, qn * ui
        tp = a / (1 - a) ** 2 + b / (1 - b) ** 2 - 2 * qn / (1 - qn) ** 2
        td = a * (1 + a) / (1 - a) ** 3 - b * (1 + b) / (1 - b) ** 3
        p += tp
        dp += td
        if abs(tp) + abs(td) < eps * (1 + abs(p)):
            break
        qn *= q
    return two_pi_i**2 * p, two_pi_i**3 * dp


def weierstrass_p(z, lattice: PeriodLattice, prec: int):
    """(℘(z), ℘'(z))，在约化基上用 q 级数计算。"""
    with mp.workprec(prec + GUARD_BITS):
        w1, w2 = reduced_basis(mpmath.mpc(lattice.omega_re), lattice.omega_im)
        tau = w2 / w1
        w = z / w1
        w -= mpmath.nint(mpmath.im(w) / mpmath.im(tau)) * tau
        w -= mpmath.nint(mpmath.re(w))
        if abs(w) < mpmath.mpf(2) ** (-prec // 2):
            raise DomainError("ż 落在格 Λ 中（无穷远点）")
        p, dp = _wp_series(w, tau, prec)
        return p / w1**2, dp / w1**3


def elliptic_exp(zdot, E: CurveQ, lattice: PeriodLattice, prec: int):
    """ż -> E 上的实点 (x, y)。"""
    with mp.workprec(prec + GUARD_BITS):
        p, dp = weierstrass_p(zdot, lattice, prec)
        x = p - mpmath.mpf(E.b2) / 12
        y = (dp - E.a1 * x - E.a3) / 2
        if abs(mpmath.im(x)) + abs(mpmath.im(y)) > mpmath.mpf(2) ** (-prec // 2) * (1 + abs(x) + abs(y)):
            logger.warning("elliptic_exp produced a non-real point for z=%s", mpmath.nstr(zdot, 12))
        return rounded(mpmath.re(x), prec), rounded(mpmath.re(y), prec)


def elliptic_log(E: CurveQ, x, y, lattice: PeriodLattice, prec: int):
    """实点 (x, y) 的椭圆对数 z，满足 elliptic_exp(z) = (x, y)。"""
    with mp.workprec(prec + GUARD_BITS):
        X = mpmath.mpf(x) + mpmath.mpf(E.b2) / 12
        Y = 2 * mpmath.mpf(y) + E.a1 * mpmath.mpf(x) + E.a3
        roots = _two_torsion_roots(E)
        shift = mpmath.mpc(0)
        if E.discriminant > 0 and X < roots[0]:
            # 蛋形分支上的点：加上 T3 = (e3, 0) 移到主分支
            e3 = roots[2]
            lam = Y / (X - e3)
            X3 = lam * lam / 4 - X - e3
            Y3 = -lam * (X3 - X) - Y
            X, Y = X3, Y3
            shift = lattice.omega_im / 2
        t = mpmath.re(mpmath.elliprf(X - roots[0], X - roots[1], X - roots[2]))
        z = (t if Y <= 0 else -t) + shift
        return lattice_reduce(z, lattice)
