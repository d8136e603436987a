"""Standard non-Kahler run on the flat 2-torus (N=12, eps=0.05).

Integrates until |-S + Q| < 1e-6 and prints the monitor verdicts and the
convergence summary.  Takes roughly 10-20 minutes on one core.

    python scripts/run_standard.py --out runs/standard
"""

import argparse
import json
import sys
from pathlib import Path

from pcflab.cli import cmd_flow_run
from pcflab.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/standard")
    ap.add_argument("--config", default="torus_nonkahler_small.cfg")
    args = ap.parse_args()
    status = cmd_flow_run(load_config(args.config), Path(args.out))
    summary = json.loads((Path(args.out) / "summary.json").read_text())
    print(json.dumps(summary["convergence"], indent=2))
    return status


if __name__ == "__main__":
    sys.exit(main())
