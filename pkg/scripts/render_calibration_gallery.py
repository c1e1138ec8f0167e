#!/usr/bin/env python3
"""Render the nine calibration poses through a chosen lens.

Produces img_<dpt>_<h>_<v>.pgm files plus a features.csv with the exact
pupil ellipse and glint positions for each pose: the synthetic analogue of a
calibration image set recorded through eyeglasses.
"""

import argparse
import sys
from pathlib import Path

from specsim.cli import cli_main
from specsim.harness import calibration_grid


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--diopter", type=float, default=-1.0)
    parser.add_argument("--out", type=Path, default=Path("results/gallery"))
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--image-format", choices=("pgm", "png"), default="pgm")
    args = parser.parse_args()

    base = []
    if args.config is not None:
        base = ["--config", str(args.config)]
    for pose in calibration_grid():
        rc = cli_main(
            ["render", *base, "--diopter", str(args.diopter),
             "--theta-h", str(pose.theta_h), "--theta-v", str(pose.theta_v),
             "--image-format", args.image_format,
             "--out", str(args.out / f"h{pose.theta_h:+.0f}_v{pose.theta_v:+.0f}")]
        )
        if rc != 0:
            return rc
    print(f"gallery written to {args.out}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
