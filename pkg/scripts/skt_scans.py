"""SKT residual scans over the algebra catalog, plus the homogeneous ODE runs.

    python scripts/skt_scans.py --starts 100
"""

import argparse

import numpy as np

from pcflab.homogeneous import (
    HomogeneousFlowConfig,
    SKTScanConfig,
    catalog_ids,
    load_algebra,
    logdet_identity_residual,
    ode_flow,
    skt_residual_scan,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--starts", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"{'algebra':10s} {'min residual':>14s} {'max residual':>14s} boundary")
    for name in catalog_ids():
        spec = load_algebra(name)
        res = skt_residual_scan(spec, SKTScanConfig(n_starts=args.starts, seed=args.seed))
        print(f"{name:10s} {res.min_residual:14.3e} {res.residuals.max():14.3e} {res.on_boundary}")
    print()
    for name in ("abelian4", "sl2c"):
        spec = load_algebra(name)
        traj = ode_flow(spec, np.eye(spec.n), HomogeneousFlowConfig(dt=1e-3, t_max=0.5, cadence=10))
        drift = float(np.abs(traj.metrics - traj.metrics[0]).max())
        print(f"{name:10s} ODE flow to t={traj.times[-1]:.2f}: metric drift {drift:.3e}, "
              f"|T|^2 {traj.torsion_norm_sq[0]:.3f} -> {traj.torsion_norm_sq[-1]:.3f}, "
              f"log det identity residual {logdet_identity_residual(traj):.2e}")


if __name__ == "__main__":
    main()
