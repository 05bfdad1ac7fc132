from __future__ import annotations
import logging
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from sympy import Poly, factorint, isprime, legendre_symbol, sqrt_mod
from sympy.abc import T

from .errors import DomainError, NonMinimalModelError, NumericalError, RootNumberUndetermined
from .models import INFINITY, AffinePointQ, LocalData, TorsionGroup
from .utils import chi_at_prime, exact_div, valuation

logger = logging.getLogger(__name__)

Coeffs = Tuple[int, int, int, int, int]

# numpy 字符和计数的默认上限，超过后改用 BSGS
DEFAULT_AP_THRESHOLD = 1_000_000


def b_invariants(a: Sequence[int]) -> Tuple[int, int, int, int]:
    a1, a2, a3, a4, a6 = a
    b2 = a1 * a1 + 4 * a2
    b4 = a1 * a3 + 2 * a4
    b6 = a3 * a3 + 4 * a6
    b8 = a1 * a1 * a6 + 4 * a2 * a6 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4
    return b2, b4, b6, b8


def c_invariants(a: Sequence[int]) -> Tuple[int, int]:
    b2, b4, b6, _ = b_invariants(a)
    return b2 * b2 - 24 * b4, -(b2**3) + 36 * b2 * b4 - 216 * b6


def discriminant_of(a: Sequence[int]) -> int:
    b2, b4, b6, b8 = b_invariants(a)
    return -b2 * b2 * b8 - 8 * b4**3 - 27 * b6 * b6 + 9 * b2 * b4 * b6


def rst_transform(a: Coeffs, r: int, s: int, t: int) -> Coeffs:
    """u = 1 的坐标变换 x = x' + r, y = y' + s x' + t。"""
    a1, a2, a3, a4, a6 = a
    return (
        a1 + 2 * s,
        a2 - s * a1 + 3 * r - s * s,
        a3 + r * a1 + 2 * t,
        a4 - s * a3 + 2 * r * a2 - (t + r * s) * a1 + 3 * r * r - 2 * s * t,
        a6 + r * a4 + r * r * a2 + r**3 - t * a3 - t * t - r * t * a1,
    )


def _has_root(a: int, b: int, c: int, p: int) -> bool:
    """a T^2 + b T + c 在 F_p 中是否有根。"""
    a, b, c = a % p, b % p, c % p
    if p == 2:
        return any((a * x * x + b * x + c) % 2 == 0 for x in (0, 1))
    if a == 0:
        return b != 0 or c == 0
    disc = (b * b - 4 * a * c) % p
    return disc == 0 or legendre_symbol(disc, p) == 1


def _cubic_root_count(b: int, c: int, d: int, p: int) -> int:
    """T^3 + b T^2 + c T + d 在 F_p 中不同根的个数。"""
    if p <= 3:
        return sum(1 for x in range(p) if (x**3 + b * x * x + c * x + d) % p == 0)
    _, factors = Poly(T**3 + b * T**2 + c * T + d, T, modulus=p).factor_list()
    return sum(1 for f, _ in factors if f.degree() == 1)


def tate_local(a: Coeffs, p: int, minimalize: bool = False) -> Tuple[LocalData, Coeffs]:
    """Tate 算法：返回 p 处的局部数据以及在 p 处极小的整模型。

    minimalize=False 时遇到非极小模型直接报错。
    """
    a = tuple(a)
    while True:
        delta = discriminant_of(a)
        vpd = valuation(delta, p)
        if vpd == 0:
            return LocalData(p, "I0", 0, 1, 0, "good"), a

        a1, a2, a3, a4, a6 = a
        b2, b4, b6, b8 = b_invariants(a)
        c4, c6 = c_invariants(a)

        # 平移使奇点落在 (0, 0)：p | a3, a4, a6
        if p == 2:
            if b2 % 2 == 0:
                r = a4 % 2
                t = (((r + a2) * r + a4) * r + a6) % 2
            else:
                r = a3 % 2
                t = (a4 + r * r) % 2
        elif p == 3:
            r = (-b6) % 3 if b2 % 3 == 0 else (-b2 * b4) % 3
            t = (a1 * r + a3) % 3
        else:
            if c4 % p == 0:
                r = (-pow(12, -1, p) * b2) % p
            else:
                r = (-pow(12 * c4, -1, p) * (c6 + b2 * c4)) % p
            t = (-pow(2, -1, p) * (a1 * r + a3)) % p
        a = rst_transform(a, r, 0, t)
        a1, a2, a3, a4, a6 = a
        b2, b4, b6, b8 = b_invariants(a)

        if c4 % p != 0:
            split = _has_root(1, a1, -a2, p)
            if split:
                cp = vpd
            else:
                cp = 2 if vpd % 2 == 0 else 1
            return LocalData(p, f"I{vpd}", 1, cp, vpd, "split" if split else "nonsplit"), a

        if valuation(a6, p) < 2:
            return LocalData(p, "II", vpd, 1, vpd, "additive"), a
        if valuation(b8, p) < 3:
            return LocalData(p, "III", vpd - 1, 2, vpd, "additive"), a
        if valuation(b6, p) < 3:
            cp = 3 if _has_root(1, exact_div(a3, p), -exact_div(a6, p * p), p) else 1
            return LocalData(p, "IV", vpd - 2, cp, vpd, "additive"), a

        # p | a1, a2；p^2 | a3, a4；p^3 | a6
        if p == 2:
            s = a2 % 2
            t = 2 * (exact_div(a6, 4) % 2)
        elif p == 3:
            s, t = a1, a3
        else:
            s = -a1 * pow(2, -1, p)
            t = -a3 * pow(2, -1, p)
        a = rst_transform(a, 0, s, t)
        a1, a2, a3, a4, a6 = a

        b = exact_div(a2, p)
        c = exact_div(a4, p * p)
        d = exact_div(a6, p**3)
        w = 27 * d * d - b * b * c * c + 4 * b**3 * d - 18 * b * c * d + 4 * c**3
        x = 3 * c - b * b

        if w % p != 0:
            cp = 1 + _cubic_root_count(b, c, d, p)
            return LocalData(p, "I0*", vpd - 4, cp, vpd, "additive"), a

        if x % p != 0:
            # 二重根，I_m*
            if p == 2:
                r = c % 2
            elif p == 3:
                r = c * pow(b, -1, 3)
            else:
                r = (b * c - 9 * d) * pow(2 * x, -1, p)
            a = rst_transform(a, p * (r % p), 0, 0)
            ix = iy = 3
            mx = my = p * p
            while True:
                a1, a2, a3, a4, a6 = a
                a2t = exact_div(a2, p)
                a3t = exact_div(a3, my)
                a4t = exact_div(a4, p * mx)
                a6t = exact_div(a6, mx * my)
                if (a3t * a3t + 4 * a6t) % p != 0:
                    cp = 4 if _has_root(1, a3t, -a6t, p) else 2
                    break
                if p == 2:
                    t = my * (a6t % 2)
                else:
                    t = my * ((-a3t * pow(2, -1, p)) % p)
                a = rst_transform(a, 0, 0, t)
                my *= p
                iy += 1
                a1, a2, a3, a4, a6 = a
                a2t = exact_div(a2, p)
                a3t = exact_div(a3, my)
                a4t = exact_div(a4, p * mx)
                a6t = exact_div(a6, mx * my)
                if (a4t * a4t - 4 * a6t * a2t) % p != 0:
                    cp = 4 if _has_root(a2t, a4t, a6t, p) else 2
                    break
                if p == 2:
                    r = mx * ((a6t * pow(a2t, -1, 2)) % 2)
                else:
                    r = mx * ((-a4t * pow(2 * a2t, -1, p)) % p)
                a = rst_transform(a, r, 0, 0)
                mx *= p
                ix += 1
            m = ix + iy - 5
            return LocalData(p, f"I{m}*", vpd - m - 4, cp, vpd, "additive"), a

        # 三重根
        if p == 2:
            r = b
        elif p == 3:
            r = -d
        else:
            r = -b * pow(3, -1, p)
        a = rst_transform(a, p * (r % p), 0, 0)
        a1, a2, a3, a4, a6 = a
        x3t = exact_div(a3, p * p)
        x6t = exact_div(a6, p**4)
        if (x3t * x3t + 4 * x6t) % p != 0:
            cp = 3 if _has_root(1, x3t, -x6t, p) else 1
            return LocalData(p, "IV*", vpd - 6, cp, vpd, "additive"), a

        if p == 2:
            t = -p * p * (x6t % 2)
        else:
            t = p * p * ((-x3t * pow(2, -1, p)) % p)
        a = rst_transform(a, 0, 0, t)
        a1, a2, a3, a4, a6 = a
        if valuation(a4, p) < 4:
            return LocalData(p, "III*", vpd - 7, 2, vpd, "additive"), a
        if valuation(a6, p) < 6:
            return LocalData(p, "II*", vpd - 8, 1, vpd, "additive"), a

        if not minimalize:
            raise NonMinimalModelError(p)
        a = (
            exact_div(a1, p),
            exact_div(a2, p**2),
            exact_div(a3, p**3),
            exact_div(a4, p**4),
            exact_div(a6, p**6),
        )
        logger.debug("Model rescaled at p=%d", p)


@dataclass(frozen=True)
class CurveQ:
    a1: int
    a2: int
    a3: int
    a4: int
    a6: int
    conductor: int
    local: Tuple[LocalData, ...] = field(compare=False)

    @property
    def coeffs(self) -> Coeffs:
        return (self.a1, self.a2, self.a3, self.a4, self.a6)

    @property
    def label(self) -> str:
        return "[" + ",".join(str(c) for c in self.coeffs) + "]"

    @cached_property
    def b_invariants(self) -> Tuple[int, int, int, int]:
        return b_invariants(self.coeffs)

    @property
    def b2(self) -> int:
        return self.b_invariants[0]

    @property
    def b4(self) -> int:
        return self.b_invariants[1]

    @property
    def b6(self) -> int:
        return self.b_invariants[2]

    @property
    def b8(self) -> int:
        return self.b_invariants[3]

    @cached_property
    def c4(self) -> int:
        return c_invariants(self.coeffs)[0]

    @cached_property
    def c6(self) -> int:
        return c_invariants(self.coeffs)[1]

    @cached_property
    def discriminant(self) -> int:
        return discriminant_of(self.coeffs)

    @property
    def N(self) -> int:
        return self.conductor

    @cached_property
    def local_data(self) -> Dict[int, LocalData]:
        return {ld.p: ld for ld in self.local}

    @property
    def bad_primes(self) -> List[int]:
        return sorted(self.local_data)

    def is_on_curve(self, P: AffinePointQ) -> bool:
        if P.is_infinity:
            return True
        x, y = P.x, P.y
        lhs = y * y + self.a1 * x * y + self.a3 * y
        rhs = x**3 + self.a2 * x * x + self.a4 * x + self.a6
        return lhs == rhs


def curve_from_coeffs(a1: int, a2: int, a3: int, a4: int, a6: int) -> CurveQ:
    coeffs: Coeffs = (int(a1), int(a2), int(a3), int(a4), int(a6))
    delta = discriminant_of(coeffs)
    if delta == 0:
        raise DomainError(f"奇异曲线：判别式为 0，系数 {list(coeffs)}")
    c4, c6 = c_invariants(coeffs)
    assert c4**3 - c6**2 == 1728 * delta

    local: List[LocalData] = []
    conductor = 1
    for p in sorted(factorint(abs(delta))):
        ld, _ = tate_local(coeffs, p, minimalize=False)
        local.append(ld)
        conductor *= p**ld.f_p
    E = CurveQ(*coeffs, conductor=conductor, local=tuple(local))
    logger.info("Curve %s built, N=%d, disc=%d", E.label, conductor, delta)
    return E


def local_info(E: CurveQ, p: int) -> LocalData:
    """tate_local 的 CurveQ 版本：良约化素数返回 (I0, 0, 1, 0)。"""
    if not isprime(p):
        raise DomainError(f"{p} 不是素数")
    return E.local_data.get(p, LocalData(p, "I0", 0, 1, 0, "good"))


def real_components(E: CurveQ) -> int:
    return 2 if E.discriminant > 0 else 1


# ---------------------------------------------------------------- 群运算


def point_neg(E: CurveQ, P: AffinePointQ) -> AffinePointQ:
    if P.is_infinity:
        return P
    return AffinePointQ(P.x, -P.y - E.a1 * P.x - E.a3)


def point_add(E: CurveQ, P: AffinePointQ, Q: AffinePointQ) -> AffinePointQ:
    if P.is_infinity:
        return Q
    if Q.is_infinity:
        return P
    a1, a2, a3, a4, a6 = E.coeffs
    x1, y1, x2, y2 = P.x, P.y, Q.x, Q.y
    if x1 == x2:
        denom = 2 * y1 + a1 * x1 + a3
        if y1 + y2 + a1 * x2 + a3 == 0:
            return INFINITY
        lam = (3 * x1 * x1 + 2 * a2 * x1 + a4 - a1 * y1) / denom
        nu = (-(x1**3) + a4 * x1 + 2 * a6 - a3 * y1) / denom
    else:
        lam = (y2 - y1) / (x2 - x1)
        nu = (y1 * x2 - y2 * x1) / (x2 - x1)
    x3 = lam * lam + a1 * lam - a2 - x1 - x2
    y3 = -(lam + a1) * x3 - nu - a3
    return AffinePointQ(Fraction(x3), Fraction(y3))


def point_mul(E: CurveQ, P: AffinePointQ, n: int) -> AffinePointQ:
    if n < 0:
        return point_mul(E, point_neg(E, P), -n)
    result = INFINITY
    addend = P
    while n:
        if n & 1:
            result = point_add(E, result, addend)
        addend = point_add(E, addend, addend)
        n >>= 1
    return result


# ---------------------------------------------------------------- a_p


def _count_affine_brute(a: Coeffs, p: int) -> int:
    a1, a2, a3, a4, a6 = a
    return sum(
        1
        for x in range(p)
        for y in range(p)
        if (y * y + a1 * x * y + a3 * y - x**3 - a2 * x * x - a4 * x - a6) % p == 0
    )


def _character_sum(a: Coeffs, p: int) -> int:
    """Σ_x χ(4x^3 + b2 x^2 + 2 b4 x + b6)，p 为奇素数。"""
    b2, b4, b6, _ = b_invariants(a)
    x = np.arange(p, dtype=np.int64)
    f = np.full(p, 4 % p, dtype=np.int64)
    for coef in (b2, 2 * b4, b6):
        f = (f * x + coef % p) % p
    is_square = np.zeros(p, dtype=bool)
    is_square[(x * x) % p] = True
    chi = np.where(f == 0, 0, np.where(is_square[f], 1, -1))
    return int(chi.sum())


def _add_mod(P, Q, A: int, p: int):
    if P is None:
        return Q
    if Q is None:
        return P
    x1, y1 = P
    x2, y2 = Q
    if x1 == x2:
        if (y1 + y2) % p == 0:
            return None
        lam = (3 * x1 * x1 + A) * pow(2 * y1, -1, p) % p
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, p) % p
    x3 = (lam * lam - x1 - x2) % p
    return (x3, (lam * (x1 - x3) - y1) % p)


def _mul_mod(n: int, P, A: int, p: int):
    result = None
    while n:
        if n & 1:
            result = _add_mod(result, P, A, p)
        P = _add_mod(P, P, A, p)
        n >>= 1
    return result


def _random_point_mod(A: int, B: int, p: int, rng: random.Random):
    while True:
        x = rng.randrange(p)
        rhs = (x**3 + A * x + B) % p
        if rhs == 0:
            return (x, 0)
        if legendre_symbol(rhs, p) == 1:
            return (x, sqrt_mod(rhs, p))


def _annihilators(P, lo: int, hi: int, A: int, p: int) -> Set[int]:
    """[lo, hi] 中满足 M·P = O 的全部 M（大步小步）。"""
    m = math.isqrt(hi - lo) + 1
    baby: Dict[object, List[int]] = {}
    R = None
    for j in range(m + 1):
        baby.setdefault(R, []).append(j)
        R = _add_mod(R, P, A, p)
    step = _mul_mod(m, P, A, p)
    G = _mul_mod(lo, P, A, p)
    found: Set[int] = set()
    for i in range(m + 1):
        neg = None if G is None else (G[0], (-G[1]) % p)
        for j in baby.get(neg, ()):
            M = lo + i * m + j
            if M <= hi:
                found.add(M)
        G = _add_mod(G, step, A, p)
    return found


def _ap_bsgs(a: Coeffs, p: int) -> int:
    c4, c6 = c_invariants(a)
    A, B = (-27 * c4) % p, (-54 * c6) % p
    g = next(k for k in range(2, p) if legendre_symbol(k, p) == -1)
    At, Bt = A * g * g % p, B * g**3 % p
    width = math.isqrt(4 * p)
    lo, hi = p + 1 - width, p + 1 + width
    candidates = set(range(lo, hi + 1))
    rng = random.Random(p)
    for _ in range(64):
        P = _random_point_mod(A, B, p, rng)
        candidates &= _annihilators(P, lo, hi, A, p)
        if len(candidates) == 1:
            break
        # 二次扭曲的点数为 2p + 2 - M
        Pt = _random_point_mod(At, Bt, p, rng)
        candidates &= {2 * p + 2 - M for M in _annihilators(Pt, lo, hi, At, p)}
        if len(candidates) == 1:
            break
    if len(candidates) != 1:
        raise NumericalError(f"BSGS 未能确定 p={p} 处的点数: {sorted(candidates)[:8]}")
    return p + 1 - candidates.pop()


def ap_of_model(a: Coeffs, p: int, threshold: int = DEFAULT_AP_THRESHOLD) -> int:
    """a_p = p + 1 - #Ẽ(F_p)，模型在 p 处须为好约化。"""
    if p == 2:
        value = 2 - _count_affine_brute(a, 2)
    elif p < max(threshold, 1000):
        value = -_character_sum(a, p)
    else:
        value = _ap_bsgs(a, p)
    assert value * value <= 4 * p, f"Hasse 界被破坏: p={p}, a_p={value}"
    return value


def ap(E: CurveQ, p: int, threshold: int = DEFAULT_AP_THRESHOLD) -> int:
    ld = E.local_data.get(p)
    if ld is not None:
        return {"split": 1, "nonsplit": -1}.get(ld.reduction, 0)
    return ap_of_model(E.coeffs, p, threshold)


# ---------------------------------------------------------------- 根数


def local_root_number(E: CurveQ, p: int) -> int:
    ld = E.local_data.get(p)
    if ld is None:
        raise DomainError(f"p={p} 不整除导子 N={E.N}")
    if ld.is_multiplicative:
        return -1 if ld.reduction == "split" else 1
    if p in (2, 3):
        raise RootNumberUndetermined(p)
    if 3 * valuation(E.c4, p) < ld.v_delta:
        # 潜在乘法约化
        return legendre_symbol(p - 1, p)
    e = 12 // math.gcd(12, ld.v_delta)
    if e in (2, 6):
        return legendre_symbol(p - 1, p)
    if e == 3:
        return legendre_symbol((-3) % p, p)
    return legendre_symbol((-2) % p, p)


def local_root_numbers(E: CurveQ) -> Dict[int, Optional[int]]:
    """p | N -> ε_p；无法由公式确定的（2、3 处加法约化）记为 None。"""
    out: Dict[int, Optional[int]] = {}
    for p in E.bad_primes:
        try:
            out[p] = local_root_number(E, p)
        except RootNumberUndetermined:
            out[p] = None
    return out


def global_root_number(E: CurveQ) -> int:
    eps = local_root_numbers(E)
    unknown = [p for p, v in eps.items() if v is None]
    if unknown:
        raise RootNumberUndetermined(unknown[0])
    return -math.prod(eps.values())


# ---------------------------------------------------------------- 挠子群


def _order_of(E: CurveQ, P: AffinePointQ, bound: int = 12) -> Optional[int]:
    Q = P
    for n in range(1, bound + 1):
        if Q.is_infinity:
            return n
        Q = point_add(E, Q, P)
    return None


def _lutz_nagell_points(E: CurveQ) -> List[AffinePointQ]:
    """短模型 Y^2 = X^3 - 27c4 X - 54c6 上的 Lutz-Nagell 搜索，映回 E。"""
    from sympy.abc import x as X

    A, B = -27 * E.c4, -54 * E.c6
    d0 = abs(4 * A**3 + 27 * B * B)
    ys = [1]
    for q, k in factorint(d0).items():
        ys = [y * q**i for y in ys for i in range(k // 2 + 1)]
    found: List[AffinePointQ] = []
    for Y in sorted({0, *ys}):
        for Xr in Poly(X**3 + A * X + B - Y * Y, X).ground_roots():
            if not Xr.is_integer:
                continue
            x = Fraction(int(Xr) - 3 * E.b2, 36)
            for sY in {Y, -Y}:
                y = (Fraction(sY, 108) - E.a1 * x - E.a3) / 2
                P = AffinePointQ(x, y)
                if E.is_on_curve(P) and _order_of(E, P) is not None:
                    found.append(P)
    return found


def torsion_structure(E: CurveQ, reduction_primes: int = 12) -> TorsionGroup:
    bound = 0
    used = 0
    p = 3
    while used < reduction_primes and bound != 1:
        if E.N % p and isprime(p):
            bound = math.gcd(bound, p + 1 - ap(E, p))
            used += 1
        p += 2
    if bound == 1:
        return TorsionGroup(1, 1, (), (), (INFINITY,))

    points = [INFINITY] + _lutz_nagell_points(E)
    n = len(points)
    if n > 16:
        raise NumericalError(f"挠子群阶 {n} 超出 Mazur 界")
    orders = {P: _order_of(E, P) for P in points}
    exponent = max(orders.values())
    if exponent == n:
        gens = (next(P for P in points if orders[P] == n),) if n > 1 else ()
        invariants = (n,) if n > 1 else ()
    else:
        P = next(Q for Q in points if orders[Q] == exponent)
        span = {point_mul(E, P, k) for k in range(exponent)}
        T2 = next(Q for Q in points if orders[Q] == 2 and Q not in span)
        gens = (P, T2)
        invariants = (2, exponent)
    logger.info("Torsion order=%d, bound from reduction=%d", n, bound)
    return TorsionGroup(n, exponent, invariants, gens, tuple(points))


# ---------------------------------------------------------------- 二次扭曲


@dataclass(frozen=True)
class TwistedCurve:
    """E 的二次扭曲 E_D：只保存 L 级数需要的局部数据。"""

    base: CurveQ
    D: int
    conductor: int
    local: Dict[int, LocalData] = field(compare=False)
    local_models: Dict[int, Coeffs] = field(compare=False)

    def ap(self, p: int, threshold: int = DEFAULT_AP_THRESHOLD, base_ap: Optional[int] = None) -> int:
        ld = self.local.get(p)
        if ld is not None and ld.reduction != "good":
            return {"split": 1, "nonsplit": -1}.get(ld.reduction, 0)
        if self.D % p == 0:
            return ap_of_model(self.local_models[p], p, threshold)
        if base_ap is None:
            base_ap = ap(self.base, p, threshold)
        return chi_at_prime(self.D, p) * base_ap


def quadratic_twist(E: CurveQ, D: int) -> TwistedCurve:
    model: Coeffs = (0, 0, 0, -27 * E.c4 * D * D, -54 * E.c6 * D**3)
    primes = {2, 3, *factorint(abs(D)), *E.bad_primes}
    local: Dict[int, LocalData] = {}
    models: Dict[int, Coeffs] = {}
    conductor = 1
    for p in sorted(primes):
        ld, a = tate_local(model, p, minimalize=True)
        models[p] = a
        if ld.reduction != "good":
            local[p] = ld
            conductor *= p**ld.f_p
    logger.debug("Twist by D=%d has conductor %d", D, conductor)
    return TwistedCurve(E, D, conductor, local, models)
