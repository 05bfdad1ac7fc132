from __future__ import annotations
import logging
import math
from typing import Dict, List, Mapping, Optional, Set, Tuple

import mpmath
from mpmath import mp
from sympy import divisors, factorint
from sympy.ntheory.modular import crt

from .errors import DomainError, PlanIncompleteError, SignAmbiguityError
from .models import HeegnerPlan, LSeriesCoeffs, PeriodLattice, QuadForm, WeightedTau
from .quadforms import (
    Matrix2,
    act,
    class_group,
    conjugate_form,
    is_heegner,
    reduced,
    sqrts_mod_4N,
)
from .utils import exact_div, is_squarefree, prime_power_parts

logger = logging.getLogger(__name__)

# 子算法中 a 的上限为 PLAN_A_FACTOR * h(D)
PLAN_A_FACTOR = 64


def _check_index(Q: int, N: int) -> None:
    if Q <= 0 or N % Q or math.gcd(Q, N // Q) != 1:
        raise DomainError(f"W_Q 需要 Q || N: Q={Q}, N={N}")


def atkin_lehner_matrix(Q: int, N: int) -> Matrix2:
    """[[uQ, v], [N, Q]]，其中 uQ^2 - vN = Q。"""
    _check_index(Q, N)
    M = N // Q
    u = pow(Q, -1, M) if M > 1 else 1
    v = exact_div(u * Q - 1, M)
    return (u * Q, v, N, Q)


def atkin_lehner_form(f: QuadForm, Q: int, N: int) -> QuadForm:
    """g = W_Q(f) / Q。"""
    g = act(f, atkin_lehner_matrix(Q, N))
    return QuadForm(exact_div(g.A, Q), exact_div(g.B, Q), exact_div(g.C, Q))


def atkin_lehner_tau(tau, Q: int, N: int):
    uQ, v, n, q = atkin_lehner_matrix(Q, N)
    return (uQ * tau + v) / (n * tau + q)


def beta_q(beta: int, Q: int, N: int, D: int) -> int:
    _check_index(Q, N)
    moduli: List[int] = []
    residues: List[int] = []
    for p, pk in prime_power_parts(2 * N).items():
        flip = Q % p == 0 and D % p != 0
        moduli.append(pk)
        residues.append((-beta if flip else beta) % pk)
    value, _ = crt(moduli, residues)
    return int(value) % (2 * N)


def pairing_class(g: QuadForm, N: int) -> Tuple[bool, QuadForm]:
    """(是否自配对, 共轭形式 ḡ 的约化类)。"""
    partner = reduced(conjugate_form(g, N))
    return reduced(g) == partner, partner


def _local_sign(eps: Mapping[int, int], Q: int) -> int:
    sign = 1
    for p in factorint(Q):
        sign *= eps[p]
    return sign


def tau_representatives(
    N: int,
    D: int,
    beta: int,
    eps: Mapping[int, int],
    use_atkin_lehner: bool = True,
) -> HeegnerPlan:
    """寻找好的 τ 代表元。

    eps 给出每个 p | N 的 W_p 特征值，ε_Q 取其乘积。use_atkin_lehner=False 时
    只用 b ≡ β、Q = 1，得到朴素方案。
    """
    S = sorted(sqrts_mod_4N(D, N))
    if not S:
        raise DomainError("D not a square mod 4N")
    beta %= 2 * N
    if beta not in S:
        raise DomainError(f"β={beta} 不在 S(D,N) 中")
    shared = math.gcd(D, N)
    if not is_squarefree(shared):
        raise DomainError(f"gcd(D,N)={shared} 不是无平方因子数")

    h = class_group(D).h
    parts = prime_power_parts(N)
    covered: Set[QuadForm] = set()
    reps: List[WeightedTau] = []
    a = 0
    while len(covered) < h:
        a += 1
        if a > PLAN_A_FACTOR * h:
            raise PlanIncompleteError(
                f"a 超过 {PLAN_A_FACTOR}·h={PLAN_A_FACTOR * h} 仍未覆盖类群 ({len(covered)}/{h})"
            )
        for b in S:
            if not use_atkin_lehner and b != beta:
                continue
            c0 = exact_div(b * b - D, 4 * N)
            for s in range(a):
                if (N * s * s + b * s + c0) % a:
                    continue
                B = b + 2 * N * s
                f = QuadForm(a * N, B, exact_div(B * B - D, 4 * a * N))
                base_q = math.prod(pk for p, pk in parts.items() if (b - beta) % pk)
                for d in (divisors(shared) if use_atkin_lehner else [1]):
                    Q = d * base_q
                    g = atkin_lehner_form(f, Q, N) if Q > 1 else f
                    if (g.B - beta) % (2 * N):
                        logger.debug("Skip %s via W_%d: B mod 2N != beta", f, Q)
                        continue
                    cls = reduced(g)
                    self_paired, partner = pairing_class(g, N)
                    if cls in covered or partner in covered:
                        continue
                    covered.add(cls)
                    covered.add(partner)
                    sign = _local_sign(eps, Q)
                    reps.append(WeightedTau(f, sign if self_paired else 2 * sign, Q))
                    if len(covered) >= h:
                        break
                if len(covered) >= h:
                    break
            if len(covered) >= h:
                break

    plan = HeegnerPlan(N, D, beta, reps, covered, max_a=a)
    logger.info(
        "Heegner plan built, D=%d, beta=%d, reps=%d, distinct forms=%d, max_a=%d",
        D, beta, len(reps), len({r.form for r in reps}), a,
    )
    return plan


def plan_min_imag(plan: HeegnerPlan, D: int) -> float:
    """方案中最小的 Im τ = √|D| / (2A)。"""
    return min(math.sqrt(-D) / (2 * r.form.A) for r in plan.reps)


def numeric_sign_check(
    coeffs: LSeriesCoeffs,
    lattice: PeriodLattice,
    Q: int,
    N: int,
    digits: int = 12,
) -> int:
    """数值判定 W_Q 的符号：φ(τ) - εφ(W_Q τ) 在两个采样点之差应落在 Λ 中。"""
    from .modparam import distance_to_lattice, phi_tau

    if Q == 1:
        return 1
    _check_index(Q, N)
    prec = int(digits * 3.33) + 8
    uQ = atkin_lehner_matrix(Q, N)[0]
    residuals: Dict[int, float] = {}
    with mp.workprec(prec):
        values = []
        for scale in (1, mpmath.mpf(5) / 4):
            t = mpmath.sqrt(Q) * scale
            tau = mpmath.mpc(-Q, t) / N
            w_tau = mpmath.mpc(mpmath.mpf(uQ) / N, mpmath.mpf(Q) / (N * t))
            values.append((phi_tau(coeffs, tau, prec), phi_tau(coeffs, w_tau, prec)))
        for eps in (1, -1):
            diff = (values[0][0] - eps * values[0][1]) - (values[1][0] - eps * values[1][1])
            residuals[eps] = float(distance_to_lattice(diff, lattice))
    tol = 10.0 ** (-(digits // 2))
    good = [e for e, r in residuals.items() if r < tol]
    logger.debug("Sign check W_%d residuals=%s", Q, residuals)
    if len(good) != 1:
        raise SignAmbiguityError(f"W_{Q} 的符号无法确定", residuals)
    return good[0]
