"""Calibration plus the Richardson identity study, optionally with a flipped Q sign.

    python scripts/identity_study.py                      # all checks should pass
    python scripts/identity_study.py --flip covariant     # only the covariant family fails
    python scripts/identity_study.py --flip contravariant
"""

import argparse
import sys
from pathlib import Path

from pcflab.cli import cmd_check_identities
from pcflab.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/identities")
    ap.add_argument("--config", default="identities.cfg")
    ap.add_argument("--flip", choices=["none", "covariant", "contravariant"], default="none")
    args = ap.parse_args()
    cfg = load_config(args.config)
    if args.flip == "covariant":
        cfg.identities.covariant_q_sign *= -1
    elif args.flip == "contravariant":
        cfg.identities.contravariant_q_sign *= -1
    return cmd_check_identities(cfg, Path(args.out))


if __name__ == "__main__":
    sys.exit(main())
