from __future__ import annotations
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

import mpmath


@dataclass(frozen=True, order=True)
class QuadForm:
    A: int
    B: int
    C: int

    def as_tuple(self) -> Tuple[int, int, int]:
        return (self.A, self.B, self.C)

    def __str__(self) -> str:
        return f"({self.A},{self.B},{self.C})"


@dataclass(frozen=True)
class LocalData:
    p: int
    kodaira: str
    f_p: int
    c_p: int
    v_delta: int
    reduction: str  # good / split / nonsplit / additive

    @property
    def is_multiplicative(self) -> bool:
        return self.reduction in ("split", "nonsplit")


@dataclass(frozen=True)
class AffinePointQ:
    """有理点；x 与 y 都为 None 时表示无穷远点 O。"""

    x: Optional[Fraction] = None
    y: Optional[Fraction] = None

    @property
    def is_infinity(self) -> bool:
        return self.x is None

    def __str__(self) -> str:
        if self.is_infinity:
            return "O"
        return f"({self.x}, {self.y})"


INFINITY = AffinePointQ()


@dataclass(frozen=True)
class TorsionGroup:
    order: int
    exponent: int
    invariants: Tuple[int, ...]
    generators: Tuple[AffinePointQ, ...]
    points: Tuple[AffinePointQ, ...] = ()


@dataclass
class ClassGroup:
    D: int
    reduced_forms: List[QuadForm]
    h: int
    structure: Tuple[int, ...]


@dataclass(frozen=True)
class WeightedTau:
    form: QuadForm
    weight: int
    q_index: int = 1

    @property
    def take_real_part(self) -> bool:
        return abs(self.weight) == 2


@dataclass
class HeegnerPlan:
    N: int
    D: int
    beta: int
    reps: List[WeightedTau]
    covered_classes: set = field(default_factory=set)
    max_a: int = 0

    def dump(self) -> str:
        return "\n".join(f"{r.form.A} {r.form.B} {r.form.C} {r.weight}" for r in self.reps)


@dataclass
class LSeriesCoeffs:
    curve_id: str
    n_max: int
    an: List[int]

    def __getitem__(self, n: int) -> int:
        return self.an[n]


@dataclass
class IndexPrediction:
    D: int
    beta: int
    l_derivative: Any
    twisted_l_value: Any
    h_target: Any
    heegner_height: Any
    l: int
    l_raw: Any
    w_D: int
    omega_shared: int
    gz_residual: Any = 0


@dataclass
class PeriodLattice:
    omega_re: mpmath.mpf
    omega_im: mpmath.mpc
    omega_vol: mpmath.mpf
    disc_sign: int
    prec: int

    @property
    def tau(self) -> mpmath.mpc:
        return self.omega_im / self.omega_re


@dataclass
class LocalHeightMenu:
    """p -> [(修正量, 局部高度)]；修正量以 log p 为单位。"""

    entries: Dict[int, List[Tuple[Fraction, Any]]]

    def count(self, p: int) -> int:
        return len(self.entries[p])

    def combinations(self) -> int:
        total = 1
        for values in self.entries.values():
            total *= len(values)
        return total


@dataclass
class HeightBudget:
    h_target: Any
    h_infinity: Any
    finite: Dict[int, Any]
    log_denominator: Any

    def residual(self) -> Any:
        return self.h_target - self.h_infinity - sum(self.finite.values()) - self.log_denominator


@dataclass(frozen=True)
class QuadricCover:
    q1: Tuple[Tuple[int, ...], ...]
    q2: Tuple[Tuple[int, ...], ...]


@dataclass
class PointReport:
    point: AffinePointQ
    D: int
    beta: int
    l: int
    l_prime: int
    u: int
    h_target: Any
    h_point: Any
    precision_digits: int
    timings: Dict[str, float] = field(default_factory=dict)
    extra: Dict[str, Any] = field(default_factory=dict)
