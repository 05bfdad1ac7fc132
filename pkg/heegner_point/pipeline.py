from __future__ import annotations
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, Iterator, Optional

import mpmath
from sympy import factorint

from .cache import ApCache
from .config import Config, RunConfig
from .ec_curve import CurveQ, curve_from_coeffs, local_root_numbers, torsion_structure
from .errors import DomainError, EvenSignError, NoDiscriminantError, NumericalError
from .heegner_enum import numeric_sign_check, plan_min_imag, tau_representatives
from .lfunc import (
    an_expand,
    analytic_sign,
    bsd_height,
    discriminant_predicates,
    heegner_index,
    l_derivative,
    select_discriminant,
    terms_needed,
    twisted_l_value,
    zero_tolerance,
)
from .models import HeegnerPlan, LSeriesCoeffs, PointReport
from .modparam import candidate_points, heegner_sum, period_lattice, phi_terms
from .numerics import digits_to_bits
from .quadforms import sqrts_mod_4N
from .recover import canonical_height, reconstruct_point

logger = logging.getLogger(__name__)

# 预估 h_target 时使用的精度（比特）
PREPASS_BITS = 64
# 扫描判别式时 L(E_D,1) 只需判零
TWIST_BITS = 16


class HeegnerPointPipeline:
    """秩 1 曲线求点主流程：符号 -> 判别式 -> 指标 -> φ 求和 -> 重建。"""

    def __init__(self, cfg: Config, run: RunConfig):
        self.cfg = cfg
        self.run_cfg = run
        self.curve: CurveQ = curve_from_coeffs(*run.curve)
        self.cache = ApCache(run.cache_dir, self.curve.coeffs) if run.cache_dir else None
        self.timings: Dict[str, float] = {}
        self.plan: Optional[HeegnerPlan] = None

    @contextmanager
    def _timed(self, stage: str) -> Iterator[None]:
        start = time.perf_counter()
        yield
        self.timings[stage] = round(time.perf_counter() - start, 3)
        logger.debug("Stage %s finished in %.3fs", stage, self.timings[stage])

    def _coeffs(self, n_max: int) -> LSeriesCoeffs:
        if n_max > self.run_cfg.max_terms:
            raise DomainError(f"需要 {n_max} 项 L 级数，超过 max_terms={self.run_cfg.max_terms}")
        return an_expand(self.curve, n_max, self.cfg.ap_threshold, self.cache)

    def local_signs(self) -> Dict[int, int]:
        """确定函数方程符号与每个 p | N 的 W_p 特征值。"""
        E = self.curve
        eps = local_root_numbers(E)
        coeffs = self._coeffs(math.ceil(1.2 * math.sqrt(E.N) * (53 * math.log(2) + 5) / (2 * math.pi)))
        sign = analytic_sign(coeffs, E.N)
        if all(v is not None for v in eps.values()) and -math.prod(eps.values()) != sign:
            raise NumericalError("局部根数与解析符号矛盾")
        if sign != -1:
            raise EvenSignError("函数方程符号为偶 (+1)，不适用 Heegner 点方法")

        unknown = [p for p, v in eps.items() if v is None]
        if len(unknown) == 1:
            # 全局符号 -1 = -Π ε_p
            p = unknown[0]
            eps[p] = math.prod(v for q, v in eps.items() if q != p)
            logger.info("epsilon_%d=%d from parity", p, eps[p])
        elif unknown:
            digits = self.cfg.sign_check_digits
            lattice = period_lattice(E, digits_to_bits(digits))
            for p in unknown:
                Q = p ** factorint(E.N)[p]
                # 采样点中最小的 Im τ 为 √Q / (1.25 N)
                t = math.sqrt(Q) / (1.25 * E.N)
                extra = self._coeffs(phi_terms(t, int(digits * 3.33) + 8))
                eps[p] = numeric_sign_check(extra, lattice, Q, E.N, digits)
                logger.info("epsilon_%d=%d from numeric check", p, eps[p])
        return eps

    def choose_discriminant(self):
        E, run = self.curve, self.run_cfg
        if run.discriminant is None:
            return select_discriminant(
                E, run.d_min, run.d_max, run.allow_shared_factors, TWIST_BITS, self.cfg.ap_threshold, self.cache
            )
        D = run.discriminant
        checks = discriminant_predicates(E, D, run.allow_shared_factors)
        failed = [k for k, ok in checks.items() if not ok]
        if failed:
            raise NoDiscriminantError(f"D={D} 不满足条件: {','.join(failed)}", [{"D": D, **checks}])
        if run.allow_shared_factors and math.gcd(D, 2 * E.N) > 1:
            logger.warning("gcd(D, 2N)=%d > 1: the index formula is conjectural there", math.gcd(D, 2 * E.N))
        return D, sorted(sqrts_mod_4N(D, E.N))

    def _precision_digits(self, torsion) -> int:
        if self.run_cfg.precision_digits is not None:
            return self.run_cfg.precision_digits
        E = self.curve
        lattice = period_lattice(E, PREPASS_BITS)
        coeffs = self._coeffs(terms_needed(PREPASS_BITS, E.N))
        h = bsd_height(E, lattice, torsion, l_derivative(coeffs, E.N, -1, PREPASS_BITS), self.run_cfg.assume_sha)
        digits = max(self.cfg.min_precision_digits, math.ceil(float(h) / math.log(10)) + 10)
        logger.info("Estimated h_target=%s, using %d digits", mpmath.nstr(h, 10), digits)
        return digits

    def run(self) -> PointReport:
        E, run = self.curve, self.run_cfg
        logger.info("Pipeline run started, curve=%s, N=%d", E.label, E.N)

        with self._timed("sign"):
            eps = self.local_signs()
        with self._timed("discriminant"):
            D, S = self.choose_discriminant()
            beta = S[0]
        with self._timed("torsion"):
            torsion = torsion_structure(E)
        with self._timed("plan"):
            self.plan = tau_representatives(E.N, D, beta, eps)

        digits = self._precision_digits(torsion)
        prec = digits_to_bits(digits)
        with self._timed("coefficients"):
            n_max = max(terms_needed(prec, E.N), phi_terms(plan_min_imag(self.plan, D), prec))
            coeffs = self._coeffs(n_max)
        with self._timed("lattice"):
            lattice = period_lattice(E, prec)

        executor = ProcessPoolExecutor(max_workers=run.threads) if run.threads > 1 else None
        try:
            z = None
            if run.overlap:
                # 先算 φ 求和；若指标为 0 这部分工作白做
                with self._timed("phi_sum"):
                    z = heegner_sum(coeffs, self.plan, lattice, prec, run.manin_const, executor)
            with self._timed("l_derivative"):
                l_deriv = l_derivative(coeffs, E.N, -1, prec)
            with self._timed("twisted_l_value"):
                twist_bits = min(prec, digits_to_bits(self.cfg.twist_check_digits))
                twisted = twisted_l_value(E, D, twist_bits, self.cfg.ap_threshold, self.cache)
                if abs(twisted) <= zero_tolerance(twist_bits):
                    raise NoDiscriminantError(f"L(E_D,1) = 0 (D={D})", [{"D": D, "L(E_D,1)": float(twisted)}])
            index = heegner_index(E, D, beta, lattice, torsion, l_deriv, twisted, run.assume_sha)
            if z is None:
                with self._timed("phi_sum"):
                    z = heegner_sum(coeffs, self.plan, lattice, prec, run.manin_const, executor)
        finally:
            if executor is not None:
                executor.shutdown()

        with self._timed("reconstruct"):
            candidates = candidate_points(z, index.l, torsion.exponent, lattice)
            point, k, u, budget = reconstruct_point(
                candidates, E, index.h_target, index.l, lattice, prec, self.cfg.ehat_tolerance_floor
            )
            h_point = canonical_height(E, point, lattice, prec)

        report = PointReport(
            point=point,
            D=D,
            beta=beta,
            l=index.l,
            l_prime=k,
            u=u,
            h_target=index.h_target,
            h_point=h_point,
            precision_digits=digits,
            timings=dict(self.timings),
            extra={
                "N": E.N,
                "class_number": len(self.plan.covered_classes),
                "n_terms": n_max,
                "z": z,
                "h_infinity": budget.h_infinity,
                "local_heights": budget.finite,
                "heegner_height": index.heegner_height,
                "torsion_order": torsion.order,
            },
        )
        logger.info("Pipeline finished, point=%s", point)
        return report


def run_point(cfg: Config, run: RunConfig) -> PointReport:
    return HeegnerPointPipeline(cfg, run).run()


def default_cache_dir(data_dir: str | Path, cfg: Config) -> str:
    p = Path(cfg.cache_dir)
    return str(p if p.is_absolute() else Path(data_dir).parent / p)
