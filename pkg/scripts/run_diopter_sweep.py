#!/usr/bin/env python3
"""Run the default gaze-mapping accuracy experiment.

Evaluates the polynomial and the geometric gaze mapper for eyeglass powers
0 / -1 / -3 / -5 dpt on the 16-pose test grid and writes records.csv,
summary.csv, calibrations.csv and a summary table under --out.
"""

import argparse
import sys
from pathlib import Path

from specsim.cli import cli_main


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("results/default_sweep"))
    parser.add_argument("--config", type=Path, default=None, help="optional JSON config override")
    args = parser.parse_args()

    argv = ["evaluate", "--out", str(args.out)]
    if args.config is not None:
        argv += ["--config", str(args.config)]
    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
