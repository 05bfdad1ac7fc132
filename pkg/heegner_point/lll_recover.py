from __future__ import annotations
import itertools
import logging
import math
from fractions import Fraction
from functools import reduce
from pathlib import Path
from typing import Iterable, List, Sequence, Set, Tuple

import mpmath
from mpmath import mp
from sympy import Matrix, Poly, QQ, ZZ, symbols
from sympy.polys.matrices import DomainMatrix

from .errors import CoverRecoveryError, DomainError, PreconditionError
from .models import QuadricCover
from .numerics import GUARD_BITS

logger = logging.getLogger(__name__)

IntRows = List[List[int]]

DEFAULT_DELTA = Fraction(99, 100)
COMBINATION_BOUND = 8


# ---------------------------------------------------------------- LLL


def gram_schmidt(rows: Sequence[Sequence[int]]) -> List[List[Fraction]]:
    ortho: List[List[Fraction]] = []
    for row in rows:
        v = [Fraction(x) for x in row]
        for u in ortho:
            uu = sum(a * a for a in u)
            if uu:
                mu = sum(a * b for a, b in zip(v, u)) / uu
                v = [a - mu * b for a, b in zip(v, u)]
        ortho.append(v)
    return ortho


def lovasz_holds(rows: Sequence[Sequence[int]], delta: Fraction = DEFAULT_DELTA) -> bool:
    """LLL 约化条件：|μ_ij| <= 1/2 且 Lovász 条件。"""
    ortho = gram_schmidt(rows)
    norms = [sum(a * a for a in u) for u in ortho]
    for k in range(1, len(rows)):
        for j in range(k):
            mu = sum(Fraction(a) * b for a, b in zip(rows[k], ortho[j])) / norms[j]
            if abs(mu) > Fraction(1, 2):
                return False
        mu = sum(Fraction(a) * b for a, b in zip(rows[k], ortho[k - 1])) / norms[k - 1]
        if norms[k] < (delta - mu * mu) * norms[k - 1]:
            return False
    return True


def lll_reduce(rows: Sequence[Sequence[int]], delta: Fraction = DEFAULT_DELTA) -> Tuple[IntRows, IntRows]:
    """返回 (约化基, 幺模变换 T)，满足 T·L = 约化基。"""
    rows = [[int(x) for x in r] for r in rows]
    n = len(rows)
    if Matrix(rows).rank() < n:
        raise DomainError("格基的行线性相关")
    M = DomainMatrix([[ZZ(x) for x in r] for r in rows], (n, len(rows[0])), ZZ)
    reduced, T = M.lll_transform(delta=QQ(delta.numerator, delta.denominator))
    red_rows = [[int(x) for x in r] for r in reduced.to_Matrix().tolist()]
    t_rows = [[int(x) for x in r] for r in T.to_Matrix().tolist()]
    return red_rows, t_rows


# ---------------------------------------------------------------- 逼近格矩阵


def _to_int(x) -> int:
    if isinstance(x, (int, Fraction)):
        return round(x)
    return int(mpmath.nint(x))


def build_m2(x0, B: int) -> IntRows:
    """[[1, -x0·B], [0, B]]，实数项取整。"""
    if B < 2:
        raise DomainError("B 必须 >= 2")
    return [[1, _to_int(-x0 * B)], [0, B]]


def m4_real(x0, y0, z0, y1, z1, y2, z2, B: int):
    """实数形式的 4×4 矩阵，(1, x0, y0, z0) 乘以它得到 (1, 0, 0, 0)。"""
    if y2 == 0:
        raise DomainError("y'' = 0，e = z''/y'' 无定义；请置换坐标")
    e = z2 / y2
    c3 = y1 * x0 - y0
    return [
        [1, -x0 * B, c3 * B**2, (-e * c3 + z1 * x0 - z0) * B**3],
        [0, B, -y1 * B**2, (e * y1 - z1) * B**3],
        [0, 0, B**2, -e * B**3],
        [0, 0, 0, B**3],
    ]


def build_m4(x0, y0, z0, y1, z1, y2, z2, B: int) -> IntRows:
    if B < 2:
        raise DomainError("B 必须 >= 2")
    return [[_to_int(v) for v in row] for row in m4_real(x0, y0, z0, y1, z1, y2, z2, B)]


def build_m3(x0, y0, y1, B: int) -> IntRows:
    """M4 的左上角 3×3。"""
    if B < 2:
        raise DomainError("B 必须 >= 2")
    c3 = y1 * x0 - y0
    return [[1, _to_int(-x0 * B), _to_int(c3 * B**2)], [0, B, _to_int(-y1 * B**2)], [0, 0, B**2]]


def rational_from_m2(x0, B: int, delta: Fraction = DEFAULT_DELTA) -> Fraction:
    _, T = lll_reduce(build_m2(x0, B), delta)
    q, p = T[0]
    if q == 0:
        raise CoverRecoveryError("变换矩阵首行分母为 0")
    return Fraction(p, q)


# ---------------------------------------------------------------- 二次曲面交


def load_cover(path: str | Path) -> QuadricCover:
    """两个 4×4 对称整数矩阵，每行 4 个整数，两块之间空一行。"""
    blocks: List[List[Tuple[int, ...]]] = [[]]
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            if blocks[-1]:
                blocks.append([])
            continue
        blocks[-1].append(tuple(int(t) for t in line.split()))
    blocks = [b for b in blocks if b]
    if len(blocks) != 2 or any(len(b) != 4 or any(len(r) != 4 for r in b) for b in blocks):
        raise DomainError(f"覆盖文件格式错误: {path}")
    for b in blocks:
        if any(b[i][j] != b[j][i] for i in range(4) for j in range(4)):
            raise DomainError(f"矩阵不对称: {path}")
    return QuadricCover(tuple(blocks[0]), tuple(blocks[1]))


def quadric_value(Q: Sequence[Sequence[int]], X: Sequence) -> object:
    return sum(Q[i][j] * X[i] * X[j] for i in range(4) for j in range(4))


def on_cover(cover: QuadricCover, X: Sequence[int]) -> bool:
    return quadric_value(cover.q1, X) == 0 and quadric_value(cover.q2, X) == 0


def _grad(Q, X) -> List:
    return [2 * sum(Q[i][j] * X[j] for j in range(4)) for i in range(4)]


def cover_derivatives(cover: QuadricCover, X) -> Tuple:
    """在 w = 1 的仿射图上对 x 隐式求导，返回 (y', z', y'', z'')。"""
    g1, g2 = _grad(cover.q1, X), _grad(cover.q2, X)
    J = mpmath.matrix([[g1[2], g1[3]], [g2[2], g2[3]]])
    if abs(mpmath.det(J)) < mpmath.mpf(2) ** (-mp.prec // 2):
        raise DomainError("Jacobian 在该点退化，请置换坐标")
    d1 = mpmath.lu_solve(J, mpmath.matrix([-g1[1], -g2[1]]))
    v = [0, 1, d1[0], d1[1]]
    h1 = 2 * quadric_value(cover.q1, v)
    h2 = 2 * quadric_value(cover.q2, v)
    d2 = mpmath.lu_solve(J, mpmath.matrix([-h1, -h2]))
    return d1[0], d1[1], d2[0], d2[1]


def refine_on_cover(cover: QuadricCover, x0, y0, z0, prec: int, max_iter: int = 200) -> Tuple:
    """固定 x，用 Newton 迭代把 (y, z) 提升到 prec 位精度。"""
    with mp.workprec(prec + GUARD_BITS):
        x, y, z = mpmath.mpf(x0), mpmath.mpf(y0), mpmath.mpf(z0)
        eps = mpmath.mpf(2) ** (-prec)
        for _ in range(max_iter):
            X = [1, x, y, z]
            F = mpmath.matrix([quadric_value(cover.q1, X), quadric_value(cover.q2, X)])
            g1, g2 = _grad(cover.q1, X), _grad(cover.q2, X)
            J = mpmath.matrix([[g1[2], g1[3]], [g2[2], g2[3]]])
            step = mpmath.lu_solve(J, -F)
            y += step[0]
            z += step[1]
            if max(abs(step[0]), abs(step[1])) <= eps * (1 + abs(y) + abs(z)):
                break
        else:
            raise CoverRecoveryError("Newton 迭代未收敛")
    return x, y, z


def _primitive(v: Sequence[int]) -> Tuple[int, ...]:
    g = reduce(math.gcd, (abs(c) for c in v), 0)
    if g == 0:
        return tuple(v)
    w = [c // g for c in v]
    first = next(c for c in w if c)
    return tuple(-c for c in w) if first < 0 else tuple(w)


def _combinations(k: int, bound: int) -> Iterable[Tuple[int, ...]]:
    coeffs = sorted(
        itertools.product(range(-bound, bound + 1), repeat=k),
        key=lambda c: (sum(abs(t) for t in c), c),
    )
    for c in coeffs:
        first = next((t for t in c if t), 0)
        if first > 0:
            yield c


def recover_on_cover(
    cover: QuadricCover,
    approx: Sequence,
    B: int,
    prec: int,
    delta: Fraction = DEFAULT_DELTA,
    bound: int = COMBINATION_BOUND,
) -> Tuple[int, int, int, int]:
    """由覆盖曲线上的近似实点恢复精确的射影整点。

    prec 为 approx 的有效位数（比特）；先 Newton 提升到 3·prec，再做 4 维格约化。
    """
    with mp.workprec(3 * prec + GUARD_BITS):
        v = [mpmath.mpf(c) for c in approx]
        if abs(v[0]) < mpmath.mpf(2) ** (-prec // 2) * max(abs(c) for c in v):
            raise PreconditionError("w 坐标接近 0，请置换坐标")
        v = [c / v[0] for c in v]
        scale = max(abs(c) for c in v) ** 2
        residual = max(abs(quadric_value(cover.q1, v)), abs(quadric_value(cover.q2, v))) / scale
        if residual > mpmath.mpf(2) ** (-prec // 2):
            raise PreconditionError(f"近似点不在覆盖上 (残差 {mpmath.nstr(residual, 5)})")

        x0, y0, z0 = refine_on_cover(cover, v[1], v[2], v[3], 3 * prec)
        y1, z1, y2, z2 = cover_derivatives(cover, [1, x0, y0, z0])
        M = build_m4(x0, y0, z0, y1, z1, y2, z2, B)
    logger.info("Cover recovery: B=10^%d, refined to %d bits", len(str(B)) - 1, 3 * prec)

    _, T = lll_reduce(M, delta)
    tried = 0
    for c in _combinations(4, bound):
        cand = [sum(ci * T[i][j] for i, ci in enumerate(c)) for j in range(4)]
        tried += 1
        if any(cand) and on_cover(cover, cand):
            point = _primitive(cand)
            logger.info("Cover point found after %d combinations (%d digits)", tried, len(str(max(map(abs, point)))))
            return point
    raise CoverRecoveryError(f"在系数范围 [-{bound}, {bound}] 内没有找到覆盖上的有理点 (试了 {tried} 组)")


def cover_scale(digits: int) -> int:
    """近似点有 digits 位有效数字时用 B = 10^digits：点的坐标约 10^(1.5·digits)，M4 的行列式为 B^6。"""
    return 10**digits


# ---------------------------------------------------------------- p 进搜索

W, X, Y = symbols("W X Y")


def _eval_mod(F: Poly, pt: Tuple[int, int, int], m: int) -> int:
    return int(F.eval({W: pt[0], X: pt[1], Y: pt[2]})) % m


# 三个仿射图：(1:x:y)、(0:1:y)、(0:0:1)；置换把取 1 的坐标移到首位
_CHARTS = ((0, 1, 2), (1, 0, 2), (2, 0, 1))


def _chart_points(
    F: Poly,
    p: int,
    B: int,
    residues: Iterable[Tuple[int, int]],
    delta: Fraction,
    bound: int,
) -> Tuple[Set[Tuple[int, ...]], int]:
    FX, FY = F.diff(X), F.diff(Y)
    found: Set[Tuple[int, ...]] = set()
    skipped = 0
    for xs, ys in residues:
        pt = (1, xs, ys)
        if _eval_mod(F, pt, p):
            continue
        gx, gy = _eval_mod(FX, pt, p), _eval_mod(FY, pt, p)
        if gx == 0 and gy == 0:
            skipped += 1
            logger.debug("Singular point (1:%d:%d) mod %d skipped", xs, ys, p)
            continue
        f0 = int(F.eval({W: 1, X: xs, Y: ys}))
        if gy:
            y0 = (ys - (f0 // p) * pow(gy, -1, p) * p) % (p * p)
            x0 = xs
            d = (-gx * pow(gy, -1, p)) % p
            rows = [[1, x0, y0], [0, p, d * p], [0, 0, p * p]]
        else:
            x0 = (xs - (f0 // p) * pow(gx, -1, p) * p) % (p * p)
            y0 = ys
            rows = [[1, x0, y0], [0, 0, p], [0, p * p, 0]]
        reduced_rows, _ = lll_reduce(rows, delta)
        for c in _combinations(3, bound):
            v = [sum(ci * reduced_rows[i][j] for i, ci in enumerate(c)) for j in range(3)]
            if not any(v) or max(abs(t) for t in v) > B:
                continue
            if int(F.eval({W: v[0], X: v[1], Y: v[2]})) == 0:
                found.add(tuple(v))
    return found, skipped


def padic_search(
    F: Poly,
    p: int,
    B: int,
    delta: Fraction = DEFAULT_DELTA,
    bound: int = COMBINATION_BOUND,
) -> List[Tuple[int, int, int]]:
    """P^2 中齐次曲线 F(W,X,Y) = 0 上坐标 <= B 的有理点。

    依次在 W ≢ 0、W ≡ 0 且 X ≢ 0、W ≡ X ≡ 0 (mod p) 三个图上搜索。
    """
    F = Poly(F, W, X, Y)
    gens = (W, X, Y)
    found: Set[Tuple[int, int, int]] = set()
    skipped = 0
    for chart, perm in enumerate(_CHARTS):
        # 置换后的第 k 个坐标是原坐标 perm[k]
        swap = {gens[perm[k]]: gens[k] for k in range(3)}
        G = Poly(F.as_expr().subs(swap, simultaneous=True), W, X, Y)
        if chart == 0:
            residues = itertools.product(range(p), range(p))
        elif chart == 1:
            residues = ((0, ys) for ys in range(p))
        else:
            residues = iter([(0, 0)])
        points, bad = _chart_points(G, p, B, residues, delta, bound)
        skipped += bad
        for v in points:
            orig = [0, 0, 0]
            for k in range(3):
                orig[perm[k]] = v[k]
            found.add(_primitive(orig))
    if skipped:
        logger.info("padic_search: %d singular points mod %d skipped", skipped, p)
    return sorted(found)
