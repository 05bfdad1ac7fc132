from __future__ import annotations
import logging
import math
from typing import Union

import mpmath
from mpmath import mp

from .errors import DomainError

logger = logging.getLogger(__name__)

# 复合运算内部统一多带的保护位数
GUARD_BITS = 16

RealLike = Union[int, float, str, mpmath.mpf]


def digits_to_bits(digits: int) -> int:
    return int(math.ceil(digits * math.log2(10)))


def bits_to_digits(bits: int) -> int:
    return int(math.floor(bits * math.log10(2)))


def rounded(x, prec: int):
    """把 x 舍入到 prec 位（就近偶数舍入，mpmath 默认模式）。"""
    with mp.workprec(prec):
        return +x


def agm(a: RealLike, b: RealLike, prec: int) -> mpmath.mpf:
    with mp.workprec(prec + GUARD_BITS):
        a, b = mpmath.mpf(a), mpmath.mpf(b)
        if a <= 0 or b <= 0:
            raise DomainError(f"agm 需要正实数输入: a={a}, b={b}")
        # mpmath.agm 对 (a, b) 对称
        value = mpmath.agm(a, b)
    return rounded(value, prec)


def exp_integral_e1(x: RealLike, prec: int) -> mpmath.mpf:
    """E1(x) = ∫_x^∞ e^(-t)/t dt，x > 0。

    mpmath 在小 x 时走幂级数，大 x 时走渐近/连分式展开，两支都满足 prec 位误差。
    """
    with mp.workprec(prec + GUARD_BITS):
        x = mpmath.mpf(x)
        if x <= 0:
            raise DomainError(f"E1 只在 x > 0 上定义: x={x}")
        value = mpmath.e1(x)
    return rounded(value, prec)


def nearest_int(x) -> int:
    return int(mpmath.nint(x))
