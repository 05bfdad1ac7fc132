from __future__ import annotations
import sys
from pathlib import Path

import dotenv
dotenv.load_dotenv()

from heegner_point.cli import main as cli_main

E1 = "1,-1,0,-751055859,-7922219731979"


def main():
    """对默认曲线跑完整流程；命令行参数原样转给 heegner-point point。"""
    root = Path(__file__).resolve().parent
    config = str(root / "data" / "config.default.json")
    args = sys.argv[1:] or ["--curve", E1, "--discriminant", "-932", "--allow-shared-factors"]
    return cli_main(["--config", config, "point", *args])


if __name__ == "__main__":
    sys.exit(main())
