"""Negative controls: an oversized fixed step must be flagged.

Runs the bundled negative-control config (monitors flag the run, exit 1)
and the same step carried further, where the metric loses positivity
(exit 2, with the time and grid point recorded).

    python scripts/negative_control.py --out runs/negative
"""

import argparse
import json
import sys
from pathlib import Path

from pcflab.cli import cmd_flow_run
from pcflab.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/negative_control")
    args = ap.parse_args()
    out = Path(args.out)
    cfg = load_config("negative_control_bigdt.cfg")
    status = cmd_flow_run(cfg, out / "flagged", quiet=True)
    s = json.loads((out / "flagged" / "summary.json").read_text())
    print(f"t_max {cfg.integrator.t_max}: exit {status}, violated {s['violated']}")
    cfg.integrator.t_max = 0.6
    status2 = cmd_flow_run(cfg, out / "degenerated", quiet=True)
    s = json.loads((out / "degenerated" / "summary.json").read_text())
    print(f"t_max 0.6: exit {status2}, events {s['existence']['events']}")
    return 0 if (status, status2) == (1, 2) else 1


if __name__ == "__main__":
    sys.exit(main())
