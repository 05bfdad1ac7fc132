from __future__ import annotations
import sys
from pathlib import Path

import dotenv
dotenv.load_dotenv()

from heegner_point.cli import main as cli_main


def main():
    """单阶段入口，例如 `python cli_stage.py classgroup -932`。"""
    root = Path(__file__).resolve().parent
    config = str(root / "data" / "config.default.json")
    return cli_main(["--config", config, "stage", *sys.argv[1:]])


if __name__ == "__main__":
    sys.exit(main())
