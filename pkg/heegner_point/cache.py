from __future__ import annotations
import logging
import os
from pathlib import Path
from typing import Callable, Dict, Sequence

from sympy import primerange

from .errors import DomainError

logger = logging.getLogger(__name__)


def cache_path(cache_dir: str | Path, coeffs: Sequence[int]) -> Path:
    return Path(cache_dir) / ("ap_" + "_".join(str(int(c)) for c in coeffs) + ".txt")


class ApCache:
    """a_p 平面文件缓存：首行 `curve a1 a2 a3 a4 a6`，其后每行 `p a_p`，p 递增。"""

    def __init__(self, cache_dir: str | Path, coeffs: Sequence[int]):
        self.coeffs = tuple(int(c) for c in coeffs)
        self.path = cache_path(cache_dir, self.coeffs)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.table: Dict[int, int] = {}
        if self.path.exists():
            self._load()

    def _header(self) -> str:
        return "curve " + " ".join(str(c) for c in self.coeffs)

    def _load(self) -> None:
        lines = self.path.read_text(encoding="utf-8").splitlines()
        if not lines or lines[0].strip() != self._header():
            raise DomainError(f"缓存文件头不匹配: {self.path}")
        for line in lines[1:]:
            if not line.strip():
                continue
            p, a = line.split()
            self.table[int(p)] = int(a)
        logger.debug("Loaded %d a_p values from %s", len(self.table), self.path)

    def save(self) -> None:
        body = "".join(f"{p} {self.table[p]}\n" for p in sorted(self.table))
        tmp = self.path.with_suffix(".tmp")
        tmp.write_text(self._header() + "\n" + body, encoding="utf-8")
        os.replace(tmp, self.path)

    @property
    def bound(self) -> int:
        return max(self.table, default=1)

    def extend(self, bound: int, compute: Callable[[int], int]) -> Dict[int, int]:
        """补齐 p <= bound 的全部 a_p，返回该范围的表。"""
        missing = [p for p in primerange(2, bound + 1) if p not in self.table]
        for p in missing:
            self.table[p] = compute(p)
        if missing:
            self.save()
            logger.info("a_p cache extended to %d (+%d primes): %s", bound, len(missing), self.path)
        return {p: a for p, a in self.table.items() if p <= bound}

    def dump(self, bound: int) -> str:
        lines = [self._header()] + [f"{p} {a}" for p, a in sorted(self.table.items()) if p <= bound]
        return "\n".join(lines) + "\n"
