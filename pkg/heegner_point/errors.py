from __future__ import annotations
from typing import Any, Dict, List, Optional


class HeegnerError(Exception):
    """所有流程错误的基类；exit_code 供 CLI 使用。"""

    exit_code = 1


class DomainError(HeegnerError, ValueError):
    pass


class NonMinimalModelError(DomainError):
    def __init__(self, p: int):
        super().__init__(f"模型在 p={p} 处不是极小模型")
        self.p = p


class RootNumberUndetermined(HeegnerError):
    def __init__(self, p: int):
        super().__init__(f"p={p} 处为加法约化，局部根数需数值判定")
        self.p = p


class EvenSignError(HeegnerError):
    exit_code = 2


class NoDiscriminantError(HeegnerError):
    exit_code = 3

    def __init__(self, message: str, near_misses: Optional[List[Dict[str, Any]]] = None):
        super().__init__(message)
        self.near_misses = near_misses or []


class ReconstructionError(HeegnerError):
    exit_code = 4

    def __init__(self, message: str, nearest: Optional[List[Dict[str, Any]]] = None):
        super().__init__(message)
        self.nearest = nearest or []


class ZeroIndexError(HeegnerError):
    exit_code = 4


class PlanIncompleteError(HeegnerError):
    exit_code = 5


class SignAmbiguityError(HeegnerError):
    exit_code = 5

    def __init__(self, message: str, residuals: Dict[int, float]):
        super().__init__(message)
        self.residuals = residuals


class PreconditionError(HeegnerError, ValueError):
    exit_code = 6


class CoverRecoveryError(HeegnerError):
    exit_code = 6


class NumericalError(HeegnerError, RuntimeError):
    """数值自检失败：精度不足或内部结果相互矛盾。"""


class ConfigError(HeegnerError, ValueError):
    pass
