from __future__ import annotations
import argparse
import logging
import math
import os
import sys
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import dotenv
import mpmath
from mpmath import mp
from pydantic import ValidationError

from .cache import ApCache
from .config import Config, RunConfig, load_config
from .ec_curve import curve_from_coeffs, torsion_structure
from .errors import ConfigError, HeegnerError
from .heegner_enum import tau_representatives
from .lfunc import an_expand, analytic_sign, l_derivative, l_value, prime_table, terms_needed
from .lll_recover import cover_scale, load_cover, recover_on_cover
from .models import AffinePointQ, PointReport
from .modparam import candidate_points, period_lattice
from .numerics import digits_to_bits
from .pipeline import HeegnerPointPipeline, default_cache_dir
from .quadforms import class_group
from .recover import canonical_height, height_infinity_point, height_menu, local_height_p, reconstruct_point
from .utils import format_kv

logger = logging.getLogger(__name__)

DEFAULT_CONFIG = Path("data") / "config.default.json"


def _ints(text: str) -> List[int]:
    try:
        return [int(t) for t in text.replace(" ", "").strip("[]").split(",")]
    except ValueError as exc:
        raise ConfigError(f"无法解析整数列表: {text!r}") from exc


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--curve", required=True, help="a1,a2,a3,a4,a6")
    p.add_argument("--precision-digits", type=int)
    p.add_argument("--d-min", type=int)
    p.add_argument("--d-max", type=int)
    p.add_argument("--discriminant", type=int)
    p.add_argument("--max-terms", type=int)
    p.add_argument("--cache-dir")
    p.add_argument(
        "--allow-shared-factors",
        action="store_true",
        default=None,
        help="允许 gcd(D, 2N) > 1（例如 N = 11682 的曲线要用 D = -932）",
    )
    p.add_argument("--manin-const", type=int)
    p.add_argument("--overlap", action="store_true", default=None)
    p.add_argument("--dump-plan", action="store_true", default=None)
    p.add_argument("--assume-sha", type=int)
    p.add_argument("--threads", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heegner-point", description="秩 1 椭圆曲线的 Heegner 点计算")
    parser.add_argument("--config", default=str(DEFAULT_CONFIG))
    sub = parser.add_subparsers(dest="command", required=True)

    point = sub.add_parser("point", help="完整流程：求一个非挠有理点")
    _add_run_flags(point)

    stage = sub.add_parser("stage", help="单独运行某一阶段")
    stages = stage.add_subparsers(dest="stage", required=True)

    ap = stages.add_parser("ap")
    ap.add_argument("--curve", required=True)
    ap.add_argument("--bound", type=int, default=1000)
    ap.add_argument("--cache-dir")

    ls = stages.add_parser("lseries")
    ls.add_argument("--curve", required=True)
    ls.add_argument("--precision-digits", type=int, default=20)
    ls.add_argument("--cache-dir")

    cg = stages.add_parser("classgroup")
    cg.add_argument("D", type=int)

    plan = stages.add_parser("plan")
    _add_run_flags(plan)
    plan.add_argument("--beta", type=int)

    hs = stages.add_parser("heights")
    hs.add_argument("--curve", required=True)
    hs.add_argument("--x", required=True, help="有理数 n/d")
    hs.add_argument("--y", required=True)
    hs.add_argument("--precision-digits", type=int, default=30)

    rc = stages.add_parser("recover")
    rc.add_argument("--curve", required=True)
    rc.add_argument("--z", required=True, help="z 的实部（或 re,im）")
    rc.add_argument("--l", type=int, required=True)
    rc.add_argument("--h-target", required=True)
    rc.add_argument("--precision-digits", type=int, required=True)

    lll = stages.add_parser("lll")
    lll.add_argument("--cover", required=True, help="两个 4×4 对称矩阵的文本文件")
    lll.add_argument("--approx", required=True, help="w,x,y,z 近似值")
    lll.add_argument("--precision-digits", type=int, required=True)
    return parser


def _run_config(cfg: Config, args: argparse.Namespace, config_path: Path) -> RunConfig:
    overrides = {
        k: getattr(args, k, None)
        for k in (
            "precision_digits", "d_min", "d_max", "discriminant", "max_terms", "cache_dir",
            "allow_shared_factors", "manin_const", "overlap", "dump_plan", "assume_sha", "threads",
        )
    }
    if overrides["cache_dir"] is None:
        overrides["cache_dir"] = default_cache_dir(config_path.parent, cfg)
    try:
        return RunConfig.from_config(cfg, _ints(args.curve), **overrides)
    except ValidationError as exc:
        raise ConfigError(f"运行参数不合法: {exc.error_count()} 处错误\n{exc}") from exc


def _report_lines(report: PointReport) -> List[Tuple[str, object]]:
    P = report.point
    extra = report.extra
    return [
        ("N", extra["N"]),
        ("D", report.D),
        ("beta", report.beta),
        ("class_number", extra["class_number"]),
        ("l", report.l),
        ("l_prime", report.l_prime),
        ("u", report.u),
        ("precision_digits", report.precision_digits),
        ("n_terms", extra["n_terms"]),
        ("h_target", mpmath.nstr(report.h_target, report.precision_digits - 5)),
        ("h_point", mpmath.nstr(report.h_point, report.precision_digits - 5)),
        ("h_infinity", mpmath.nstr(extra["h_infinity"], report.precision_digits - 5)),
        ("x", P.x),
        ("y", P.y),
    ]


def cmd_point(cfg: Config, args: argparse.Namespace, config_path: Path) -> int:
    run = _run_config(cfg, args, config_path)
    pipe = HeegnerPointPipeline(cfg, run)
    report = pipe.run()
    print(format_kv(_report_lines(report)))
    if run.dump_plan and pipe.plan is not None:
        print(pipe.plan.dump())
    print()
    print(f"找到非挠点 P = {report.point}")
    print(f"D={report.D}, β={report.beta}, 指标 l={report.l}, 用时 {sum(report.timings.values()):.1f}s")
    for stage, seconds in report.timings.items():
        print(f"  {stage}: {seconds}s")
    return 0


def cmd_stage(cfg: Config, args: argparse.Namespace, config_path: Path) -> int:
    name = args.stage
    if name == "classgroup":
        G = class_group(args.D)
        print(format_kv([("D", G.D), ("h", G.h), ("structure", list(G.structure))]))
        for f in G.reduced_forms:
            print(f)
        return 0

    if name == "lll":
        cover = load_cover(args.cover)
        prec = digits_to_bits(args.precision_digits)
        with mp.workprec(prec):
            approx = [mpmath.mpf(t) for t in args.approx.split(",")]
        point = recover_on_cover(
            cover, approx, cover_scale(args.precision_digits),
            prec,
            delta=Fraction(cfg.lll_delta),
            bound=cfg.combination_bound,
        )
        print(format_kv([("point", list(point))]))
        return 0

    E = curve_from_coeffs(*_ints(args.curve))
    if name == "ap":
        cache = ApCache(args.cache_dir or default_cache_dir(config_path.parent, cfg), E.coeffs)
        prime_table(E, args.bound, cfg.ap_threshold, cache)
        sys.stdout.write(cache.dump(args.bound))
        return 0

    if name == "lseries":
        prec = digits_to_bits(args.precision_digits)
        cache = ApCache(args.cache_dir or default_cache_dir(config_path.parent, cfg), E.coeffs)
        n_sign = math.ceil(1.2 * math.sqrt(E.N) * (53 * math.log(2) + 5) / (2 * math.pi))
        coeffs = an_expand(E, max(terms_needed(prec, E.N), n_sign), cfg.ap_threshold, cache)
        sign = analytic_sign(coeffs, E.N)
        value = l_derivative(coeffs, E.N, sign, prec) if sign == -1 else l_value(coeffs, E.N, sign, prec)
        print(format_kv([
            ("N", E.N),
            ("sign", sign),
            ("terms", terms_needed(prec, E.N)),
            ("L'(E,1)" if sign == -1 else "L(E,1)", mpmath.nstr(value, args.precision_digits)),
        ]))
        return 0

    if name == "plan":
        run = _run_config(cfg, args, config_path)
        pipe = HeegnerPointPipeline(cfg, run)
        eps = pipe.local_signs()
        D, S = pipe.choose_discriminant()
        beta = args.beta if args.beta is not None else S[0]
        plan = tau_representatives(E.N, D, beta, eps)
        print(format_kv([("N", E.N), ("D", D), ("beta", beta), ("reps", len(plan.reps)), ("max_a", plan.max_a)]))
        print(plan.dump())
        return 0

    if name == "heights":
        prec = digits_to_bits(args.precision_digits)
        P = AffinePointQ(Fraction(args.x), Fraction(args.y))
        if not E.is_on_curve(P):
            raise HeegnerError(f"{P} 不在曲线上")
        lattice = period_lattice(E, prec)
        menu = height_menu(E, prec)
        lines = [("h_infinity", mpmath.nstr(height_infinity_point(E, P, lattice, prec), args.precision_digits))]
        for p in E.bad_primes:
            lines.append((f"h_{p}", mpmath.nstr(local_height_p(E, P, p, prec), args.precision_digits)))
            lines.append((f"candidates_{p}", menu.count(p)))
        lines.append(("log_denominator", mpmath.nstr(mpmath.log(P.x.denominator), args.precision_digits)))
        lines.append(("h", mpmath.nstr(canonical_height(E, P, lattice, prec), args.precision_digits)))
        print(format_kv(lines))
        return 0

    if name == "recover":
        prec = digits_to_bits(args.precision_digits)
        with mp.workprec(prec):
            parts = [mpmath.mpf(t) for t in args.z.split(",")]
            z = mpmath.mpc(*parts)
            h_target = mpmath.mpf(args.h_target)
        lattice = period_lattice(E, prec)
        torsion = torsion_structure(E)
        candidates = candidate_points(z, args.l, torsion.exponent, lattice)
        point, k, u, _ = reconstruct_point(candidates, E, h_target, args.l, lattice, prec, cfg.ehat_tolerance_floor)
        print(format_kv([("u", u), ("l_prime", k), ("x", point.x), ("y", point.y)]))
        return 0

    raise HeegnerError(f"未知阶段: {name}")


def _load(config_path: Path) -> Config:
    try:
        return load_config(config_path)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"配置文件无法读取: {config_path} ({exc})") from exc


def main(argv: Optional[Sequence[str]] = None) -> int:
    dotenv.load_dotenv()
    logging.basicConfig(
        level=os.getenv("HEEGNER_LOG_LEVEL", "INFO"),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    config_path = Path(args.config)
    try:
        cfg = _load(config_path)
        if args.command == "point":
            return cmd_point(cfg, args, config_path)
        return cmd_stage(cfg, args, config_path)
    except HeegnerError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        for item in getattr(exc, "near_misses", []) or getattr(exc, "nearest", []):
            print(format_kv(item.items()), file=sys.stderr)
        return exc.exit_code
    except (ValueError, ZeroDivisionError) as exc:
        # 命令行里的数值参数无法解析
        logger.error("Invalid argument: %s", exc)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
