"""Kahler initial data: torsion should stay at the integration-error level.

    python scripts/kahler_invariance.py --out runs/kahler
"""

import argparse
import json
import sys
from pathlib import Path

from pcflab.cli import cmd_flow_run
from pcflab.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/kahler_invariance")
    args = ap.parse_args()
    status = cmd_flow_run(load_config("kahler_invariance.cfg"), Path(args.out))
    info = json.loads((Path(args.out) / "summary.json").read_text())["kahler_invariance"]
    print(f"max |T| / error estimate = {info['max_ratio_T_to_estimate']:.3f} "
          f"(factor {info['factor']}), max |T| = {info['max_T']:.3e}")
    return status


if __name__ == "__main__":
    sys.exit(main())
