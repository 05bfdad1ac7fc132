from __future__ import annotations
import logging
import math
from typing import Dict, List, Set, Tuple

from sympy import factorint, sqrt_mod
from sympy.core.intfunc import igcdex

from .errors import DomainError
from .models import ClassGroup, QuadForm
from .utils import is_squarefree

logger = logging.getLogger(__name__)

Matrix2 = Tuple[int, int, int, int]  # (α, β, γ, δ) 即 [[α, β], [γ, δ]]

IDENTITY: Matrix2 = (1, 0, 0, 1)


def discriminant(f: QuadForm) -> int:
    return f.B * f.B - 4 * f.A * f.C


def is_fundamental(D: int) -> bool:
    if D in (0, 1):
        return False
    if D % 4 == 1:
        return is_squarefree(D)
    if D % 4 == 0:
        m = D // 4
        return m % 4 in (2, 3) and is_squarefree(m)
    return False


def unit_count(D: int) -> int:
    """虚二次序的单位个数 w(D)。"""
    return {-3: 6, -4: 4}.get(D, 2)


def principal_form(D: int) -> QuadForm:
    k = D % 2
    return QuadForm(1, k, (k * k - D) // 4)


def inverse(f: QuadForm) -> QuadForm:
    return QuadForm(f.A, -f.B, f.C)


def act(f: QuadForm, M: Matrix2) -> QuadForm:
    """(f·M)(x, y) = f(αx + βy, γx + δy)。"""
    al, be, ga, de = M
    A, B, C = f.A, f.B, f.C
    return QuadForm(
        A * al * al + B * al * ga + C * ga * ga,
        2 * A * al * be + B * (al * de + be * ga) + 2 * C * ga * de,
        A * be * be + B * be * de + C * de * de,
    )


def mat_mul(M1: Matrix2, M2: Matrix2) -> Matrix2:
    a, b, c, d = M1
    e, f, g, h = M2
    return (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)


def _normalize(f: QuadForm) -> Tuple[QuadForm, Matrix2]:
    r = (f.A - f.B) // (2 * f.A)
    return act(f, (1, r, 0, 1)), (1, r, 0, 1)


def is_reduced(f: QuadForm) -> bool:
    if not (abs(f.B) <= f.A <= f.C):
        return False
    if abs(f.B) == f.A or f.A == f.C:
        return f.B >= 0
    return True


def reduce_form(f: QuadForm) -> Tuple[QuadForm, Matrix2]:
    """返回约化形式与 SL2(Z) 变换 M，使 f·M 为约化形式。"""
    if f.A <= 0 or discriminant(f) >= 0:
        raise DomainError(f"需要正定形式: {f}")
    g, M = _normalize(f)
    while g.A > g.C or (g.A == g.C and g.B < 0):
        swap = (0, -1, 1, 0)
        g = act(g, swap)
        M = mat_mul(M, swap)
        g, N = _normalize(g)
        M = mat_mul(M, N)
    return g, M


def reduced(f: QuadForm) -> QuadForm:
    return reduce_form(f)[0]


def _solve_linmod(a: int, b: int, m: int) -> Tuple[int, int]:
    """解 a x ≡ b (mod m)，返回 (u, v)，解为 x = u + v n。"""
    d, _, g = igcdex(a, m)
    if b % g:
        raise DomainError(f"同余方程 {a}x ≡ {b} (mod {m}) 无解")
    return (b // g) * d % m, m // g


def compose(f: QuadForm, g: QuadForm) -> QuadForm:
    """Gauss 合成，结果已约化。"""
    D = discriminant(f)
    if discriminant(g) != D:
        raise DomainError(f"判别式不一致: {f} 与 {g}")
    a, b, c = f.A, f.B, f.C
    al, be = g.A, g.B
    gg = (b + be) // 2
    h = -(b - be) // 2
    w = math.gcd(math.gcd(a, al), gg)
    s, t, u = a // w, al // w, gg // w
    mu, nu = _solve_linmod(t * u, h * u + s * c, s * t)
    lam = _solve_linmod(t * nu, h - t * mu, s)[0]
    k = mu + nu * lam
    l = (k * t - h) // s
    m = (t * u * k - h * u - c * s) // (s * t)
    return reduced(QuadForm(s * t, w * u - (k * t + l * s), k * l - w * m))


def form_pow(f: QuadForm, n: int) -> QuadForm:
    result = principal_form(discriminant(f))
    base = reduced(f)
    while n > 0:
        if n & 1:
            result = compose(result, base)
        base = compose(base, base)
        n >>= 1
    return result


def reduced_forms(D: int) -> List[QuadForm]:
    forms: List[QuadForm] = []
    a = 1
    while 3 * a * a <= -D:
        for b in range(-a + 1, a + 1):
            if (b - D) % 2:
                continue
            num = b * b - D
            if num % (4 * a):
                continue
            c = num // (4 * a)
            if c < a or math.gcd(math.gcd(a, b), c) != 1:
                continue
            f = QuadForm(a, b, c)
            if is_reduced(f):
                forms.append(f)
        a += 1
    return forms


def _group_structure(forms: List[QuadForm], D: int) -> Tuple[int, ...]:
    """由 #{f : f^(ℓ^j) = 1} 得到不变因子 d1 | d2 | ..."""
    h = len(forms)
    one = principal_form(D)
    per_prime: Dict[int, List[int]] = {}
    for ell, k in factorint(h).items():
        ranks: List[int] = []
        prev = 0
        j = 1
        while prev < k:
            count = sum(1 for f in forms if form_pow(f, ell**j) == one)
            n_j = round(math.log(count, ell))
            ranks.append(n_j - prev)
            prev = n_j
            j += 1
        # ranks[j-1] = ℓ 部分中阶 ≥ ℓ^j 的循环因子个数
        exps: List[int] = []
        for j in range(len(ranks), 0, -1):
            longer = ranks[j] if j < len(ranks) else 0
            exps += [j] * (ranks[j - 1] - longer)
        per_prime[ell] = sorted(exps, reverse=True)
    width = max((len(v) for v in per_prime.values()), default=0)
    factors = []
    for i in range(width):
        d = 1
        for ell, exps in per_prime.items():
            if i < len(exps):
                d *= ell ** exps[i]
        factors.append(d)
    return tuple(sorted(factors))


def class_group(D: int) -> ClassGroup:
    if D >= 0 or not is_fundamental(D):
        raise DomainError(f"需要负的基本判别式: D={D}")
    forms = reduced_forms(D)
    structure = _group_structure(forms, D)
    logger.info("Class group D=%d, h=%d, structure=%s", D, len(forms), structure)
    return ClassGroup(D, forms, len(forms), structure)


def sqrts_mod_4N(D: int, N: int) -> Set[int]:
    """S(D, N) = {β mod 2N : β^2 ≡ D (mod 4N)}。"""
    roots = sqrt_mod(D % (4 * N), 4 * N, all_roots=True) or []
    return {int(r) % (2 * N) for r in roots}


def is_heegner(f: QuadForm, N: int) -> bool:
    if f.A % N:
        return False
    return math.gcd(math.gcd(f.A // N, f.B), f.C * N) == 1


def conjugate_form(f: QuadForm, N: int) -> QuadForm:
    if f.A % N:
        raise DomainError(f"N={N} 不整除 A: {f}")
    return QuadForm(f.A // N, -f.B, f.C * N)
