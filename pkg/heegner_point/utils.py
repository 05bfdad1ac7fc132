from __future__ import annotations
import math
from fractions import Fraction
from typing import Any, Dict, Iterable, Tuple

from sympy import factorint, legendre_symbol

from .errors import DomainError


def valuation(x: int, p: int) -> int:
    """p 进赋值；x = 0 时返回一个足够大的数。"""
    if x == 0:
        return 1 << 30
    x = abs(x)
    v = 0
    while x % p == 0:
        x //= p
        v += 1
    return v


def exact_div(x: int, d: int) -> int:
    q, r = divmod(x, d)
    if r:
        raise DomainError(f"{x} 不能被 {d} 整除")
    return q


def prime_power_parts(n: int) -> Dict[int, int]:
    """n = Π p^k -> {p: p^k}"""
    return {p: p**k for p, k in factorint(n).items()}


def is_squarefree(n: int) -> bool:
    return all(k == 1 for k in factorint(abs(n)).values())


def chi_at_prime(D: int, p: int) -> int:
    """二次特征 χ_D 在素数 p 处的值（Kronecker 符号）。"""
    if D % p == 0:
        return 0
    if p == 2:
        return 1 if D % 8 in (1, 7) else -1
    return legendre_symbol(D % p, p)


def isqrt_exact(n: int) -> int | None:
    if n < 0:
        return None
    r = math.isqrt(n)
    return r if r * r == n else None


def format_value(v: Any) -> str:
    if isinstance(v, Fraction):
        return str(v)
    if isinstance(v, (list, tuple)):
        return ",".join(format_value(x) for x in v)
    return str(v)


def format_kv(items: Iterable[Tuple[str, Any]]) -> str:
    """机器可读输出：每行一个 key=value。"""
    return "\n".join(f"{k}={format_value(v)}" for k, v in items)
