from __future__ import annotations
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, field_validator, model_validator


@dataclass
class Config:
    precision_digits: Optional[int]
    min_precision_digits: int
    d_min: int
    d_max: int
    ap_threshold: int
    max_terms: int
    cache_dir: str
    lll_delta: str
    combination_bound: int
    ehat_tolerance_floor: float
    sign_check_digits: int
    twist_check_digits: int
    threads: int


def load_config(path: str | Path) -> Config:
    p = Path(path)
    raw = json.loads(p.read_text(encoding="utf-8"))
    digits = raw.get("precision_digits")
    return Config(
        precision_digits=None if digits is None else int(digits),
        min_precision_digits=int(raw["min_precision_digits"]),
        d_min=int(raw["d_min"]),
        d_max=int(raw["d_max"]),
        ap_threshold=int(raw["ap_threshold"]),
        max_terms=int(raw["max_terms"]),
        cache_dir=os.getenv("HEEGNER_CACHE_DIR") or str(raw["cache_dir"]),
        lll_delta=str(raw["lll_delta"]),
        combination_bound=int(raw["combination_bound"]),
        ehat_tolerance_floor=float(raw["ehat_tolerance_floor"]),
        sign_check_digits=int(raw["sign_check_digits"]),
        twist_check_digits=int(raw["twist_check_digits"]),
        threads=int(raw["threads"]),
    )


class RunConfig(BaseModel):
    """一次 point 运行的全部参数：配置文件默认值 + 命令行覆盖。"""

    curve: List[int]
    precision_digits: Optional[int] = None
    d_min: int = -7
    d_max: int = -5000
    discriminant: Optional[int] = None
    max_terms: int = 2_000_000
    cache_dir: Optional[str] = None
    allow_shared_factors: bool = False
    manin_const: int = 1
    overlap: bool = False
    dump_plan: bool = False
    assume_sha: int = 1
    threads: int = 1

    @field_validator("curve")
    @classmethod
    def _five_coeffs(cls, v: List[int]) -> List[int]:
        if len(v) != 5:
            raise ValueError("曲线需要 5 个 Weierstrass 系数 a1,a2,a3,a4,a6")
        return v

    @field_validator("precision_digits")
    @classmethod
    def _min_digits(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 15:
            raise ValueError("precision_digits 至少为 15")
        return v

    @field_validator("manin_const", "threads", "assume_sha")
    @classmethod
    def _positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("必须为正整数")
        return v

    @model_validator(mode="after")
    def _scan_bounds(self) -> "RunConfig":
        # 扫描从 d_min 向 d_max 推进，|d_min| <= |d_max|
        if self.d_min >= 0 or self.d_max >= 0:
            raise ValueError("判别式扫描边界必须为负数")
        if abs(self.d_min) > abs(self.d_max):
            raise ValueError("要求 |d_min| <= |d_max|")
        if self.discriminant is not None and self.discriminant >= 0:
            raise ValueError("判别式必须为负")
        return self

    @classmethod
    def from_config(cls, cfg: Config, curve: List[int], **overrides) -> "RunConfig":
        base = dict(
            curve=curve,
            precision_digits=cfg.precision_digits,
            d_min=cfg.d_min,
            d_max=cfg.d_max,
            max_terms=cfg.max_terms,
            cache_dir=cfg.cache_dir,
            threads=cfg.threads,
        )
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)
