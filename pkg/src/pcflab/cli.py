"""Command-line runner.

    pcflab flow run CFG             integrate the flow and evaluate monitors
    pcflab flow check-identities CFG  calibration + Richardson identity suite
    pcflab homog run CFG            invariant-metric ODE flow on a Lie algebra
    pcflab homog skt-scan CFG       multi-start SKT residual scan

Exit codes: 0 success, 1 monitor verdict violated, 2 degeneration,
3 configuration error.  ``PCFLAB_OUT`` overrides the output directory;
``--out`` overrides both.

Every command writes ``summary.json`` into the output directory.  Its
``manifest`` maps each other emitted file to its sha256 hash.  The summary
carries no timestamps, so equal config and seed give identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .flow import (
    FlowConfig,
    PluriclosedFlow,
    StepDoublingEstimator,
    cfl_timestep,
    fit_decay_rate,
    initial_state,
)
from .geometry import MetricGeometry
from .homogeneous import (
    AlgebraError,
    HomogeneousFlowConfig,
    SKTScanConfig,
    load_algebra,
    logdet_identity_residual,
    ode_flow,
    skt_residual_scan,
)
from .monitors import (
    MIN_ORDER,
    MaximumPrincipleRecorder,
    calibration_check,
    maximum_principle_suite,
    richardson_study,
    sandwich_holds,
    standard_identity_checks,
)
from .torus import (
    GridSpec,
    PositivityError,
    PotentialForm,
    SpectralOps,
    make_kahler_initial,
    write_snapshot,
)

EXIT_OK, EXIT_VIOLATION, EXIT_DEGENERATE, EXIT_CONFIG = 0, 1, 2, 3

log = logging.getLogger("pcflab")


# ---------------------------------------------------------------------------
# output helpers


class Outputs:
    """Collects emitted files so the summary can list them with hashes."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        p = self.root / name
        p.parent.mkdir(parents=True, exist_ok=True)
        if name not in self.files:
            self.files.append(name)
        return p

    def write_csv(self, name: str, header, rows):
        with open(self.path(name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])

    def write_json(self, name: str, obj):
        self.path(name).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")

    def finish(self, summary: dict) -> Path:
        manifest = {}
        for name in sorted(self.files):
            manifest[name] = hashlib.sha256((self.root / name).read_bytes()).hexdigest()
        summary = dict(summary, manifest=manifest)
        out = self.root / "summary.json"
        out.write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
        return out


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


PLOT_SCRIPT = '''\
"""Plot every monitor series CSV found next to this script (needs matplotlib)."""
import csv
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
for path in sorted((here / "series").glob("*.csv")):
    with open(path) as fh:
        rows = list(csv.reader(fh))[1:]
    if not rows:
        continue
    t = [float(r[0]) for r in rows]
    v = [float(r[1]) for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(t, v, marker=".")
    ax.set_xlabel("t")
    ax.set_title(path.stem)
    if path.stem in ("sup_T2", "rhs_norm") and min(v) > 0:
        ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path.with_suffix(".png"), dpi=120)
    plt.close(fig)
print("plots written to", here / "series", file=sys.stderr)
'''


def _output_dir(cfg: ExperimentConfig, override: str | None) -> Path:
    if override:
        return Path(override)
    env = os.environ.get("PCFLAB_OUT")
    if env:
        return Path(env) / cfg.experiment.name
    return Path(cfg.output.dir)


# ---------------------------------------------------------------------------
# torus experiments


def _torus_initial(cfg: ExperimentConfig, grid: GridSpec, ops: SpectralOps):
    """``(state, kahler)`` for the configured initial data."""
    ini = cfg.initial
    if ini.kahler_modes:
        G0 = make_kahler_initial(grid, [tuple(m) for m in ini.kahler_modes], ops)
        return initial_state(grid, PotentialForm.zero(grid), ops, G0=G0), True
    modes = [(m[0], complex(m[1]) if not isinstance(m[1], list) else complex(*m[1]), m[2], m[3])
             for m in ini.modes]
    alpha = PotentialForm.from_modes(grid, modes) if modes else PotentialForm.zero(grid)
    if ini.random_amplitude > 0:
        rng = np.random.default_rng(cfg.experiment.seed)
        extra = PotentialForm.random(grid, rng, ini.random_amplitude, ini.random_kmax)
        alpha = PotentialForm(grid, alpha.values + extra.values, alpha.modes + extra.modes)
    return initial_state(grid, alpha, ops), False


def _flow_config(cfg: ExperimentConfig) -> FlowConfig:
    it = cfg.integrator
    return FlowConfig(
        dt=it.dt or None, safety=it.safety, t_max=it.t_max, stop_tol=it.stop_tol,
        max_steps=it.max_steps, wall_clock=it.wall_clock or None,
        cadence=cfg.monitors.cadence, adaptive=it.adaptive,
        reject_on_regress=it.reject_on_regress, dealias=it.dealias,
        stop_on_convergence=it.stop_on_convergence,
    )


def cmd_flow_run(cfg: ExperimentConfig, out_dir: Path, quiet: bool = False) -> int:
    grid = GridSpec(cfg.domain.n, cfg.domain.N)
    ops = SpectralOps(grid)
    state, kahler = _torus_initial(cfg, grid, ops)
    flow = PluriclosedFlow(grid, _flow_config(cfg), ops)
    suites = cfg.monitors.suites
    recorder = MaximumPrincipleRecorder(grid, ops, p=cfg.monitors.p,
                                        extended="diagnostics" in suites,
                                        slack=cfg.monitors.slack)
    observers = [recorder]
    estimator = None
    if cfg.monitors.error_estimate:
        dt = flow.config.dt or cfl_timestep(state.G, grid, flow.config.safety)
        floor = float(np.abs(MetricGeometry(state.G, ops).torsion).max())
        estimator = StepDoublingEstimator(flow, dt, floor=floor)
        observers.append(estimator)
    result = flow.run(state, observers)

    out = Outputs(out_dir)
    rows = recorder.rows
    if estimator is not None:
        for row, (_, total) in zip(rows, estimator.history):
            row["error_estimate"] = total
    series = maximum_principle_suite(recorder) if "maximum_principle" in suites else []
    keys = list(rows[0].keys())
    if "csv" in cfg.output.formats:
        out.write_csv("trajectory.csv", keys, ([r.get(k) for k in keys] for r in rows))
        for s in series:
            s.write_csv(out.path(f"series/{s.name}.csv"))
        out.write_csv("series/rhs_norm.csv", ["t", "rhs_norm"],
                      ((r["t"], r["rhs_norm"]) for r in rows))
    if "json" in cfg.output.formats:
        out.write_json("trajectory.json", {"columns": keys,
                                           "rows": [[r.get(k) for k in keys] for r in rows]})
    if cfg.output.snapshot:
        final = result.state
        write_snapshot(out.path("final_snapshot.pcfsnap"),
                       {"g": final.G, "alpha": final.alpha}, n=grid.n, N=grid.N, t=final.t,
                       signatures={"g": "dD", "alpha": "d"})
    if cfg.output.plot_script and "csv" in cfg.output.formats:
        out.path("plot_series.py").write_text(PLOT_SCRIPT)

    violated = [s.name for s in series if not s.ok]
    if not sandwich_holds(recorder):
        violated.append("eigenvalue_sandwich")
    kahler_info = None
    if kahler and estimator is not None:
        ratios = [r["max_T"] / r["error_estimate"] if r["error_estimate"] > 0 else
                  (0.0 if r["max_T"] == 0 else math.inf) for r in rows]
        ok = max(ratios) < cfg.monitors.kahler_factor
        kahler_info = {"max_ratio_T_to_estimate": max(ratios),
                       "factor": cfg.monitors.kahler_factor,
                       "max_T": max(r["max_T"] for r in rows),
                       "final_error_estimate": rows[-1]["error_estimate"], "ok": ok}
        if not ok:
            violated.append("kahler_invariance")
    final_geo = MetricGeometry(result.state.G, ops, check=False)
    times = [r["t"] for r in rows]
    convergence = {
        "final_t": result.state.t,
        "final_rhs_norm": float(np.abs(final_geo.flow_rhs()).max()),
        "final_max_T": float(np.abs(final_geo.torsion).max()),
        "final_max_rho": float(np.abs(final_geo.rho).max()),
        "log_sup_T2_slope": fit_decay_rate(times, [r["sup_T2"] for r in rows]),
    }
    if "diagnostics" in suites:
        convergence["max_hodge_equivalence"] = max(r["hodge_equivalence"] for r in rows)
        convergence["max_consistency"] = max(r["consistency"] for r in rows)
    if result.record.degenerated:
        status = EXIT_DEGENERATE
    elif violated:
        status = EXIT_VIOLATION
    else:
        status = EXIT_OK
    summary = {
        "command": "flow run",
        "config": cfg.to_dict(),
        "stop_reason": result.stop_reason,
        "steps": result.steps,
        "rejections": result.rejections,
        "existence": result.record.to_dict(),
        "verdicts": {s.name: s.to_dict() for s in series},
        "sandwich_ok": sandwich_holds(recorder),
        "violated": violated,
        "convergence": convergence,
        "kahler_invariance": kahler_info,
        "exit_status": status,
    }
    path = out.finish(summary)
    if not quiet:
        print(f"flow run: {result.stop_reason} after {result.steps} steps "
              f"(t={result.state.t:.6g}, rejections={result.rejections})")
        for s in series:
            print(f"  {s.name:16s} {s.verdict}")
        if violated:
            print("  violated: " + ", ".join(violated))
        print(f"  summary: {path}")
    return status


def cmd_check_identities(cfg: ExperimentConfig, out_dir: Path, quiet: bool = False) -> int:
    grid = GridSpec(cfg.domain.n, cfg.domain.N)
    ops = SpectralOps(grid)
    idc = cfg.identities
    calib = calibration_check(grid, idc.calibration_samples, idc.calibration_amplitude,
                              seed=cfg.experiment.seed, ops=ops)
    calib_ok = max(calib, default=0.0) < idc.calibration_tol
    state, _ = _torus_initial(cfg, grid, ops)
    checks, passengers = standard_identity_checks(grid, ops, idc.covariant_q_sign,
                                                  idc.contravariant_q_sign, idc.passenger_wave)
    state.passengers = passengers
    results = richardson_study(grid, state, checks, idc.horizon, idc.n_coarse, ops,
                               dealias=cfg.integrator.dealias)
    for r in results:
        r.finalize(min_order=idc.min_order, margin_tol=1e-8)
    out = Outputs(out_dir)
    out.write_csv("identities.csv", ["identity", "dt", "residual", "order", "passed"],
                  ((r.identity, dt, res, "exact" if r.exact else r.order, r.passed)
                   for r in results for dt, res in sorted(r.residuals.items(), reverse=True)))
    out.write_csv("calibration.csv", ["sample", "max_difference"], enumerate(calib))
    failed = [r.identity for r in results if not r.passed]
    if not calib_ok:
        failed.append("calibration")
    status = EXIT_VIOLATION if failed else EXIT_OK
    summary = {
        "command": "flow check-identities",
        "config": cfg.to_dict(),
        "calibration": {"max_difference": max(calib, default=0.0), "tol": idc.calibration_tol,
                        "samples": len(calib), "ok": calib_ok},
        "identities": {r.identity: r.to_dict() for r in results},
        "min_order": idc.min_order,
        "failed": failed,
        "exit_status": status,
    }
    path = out.finish(summary)
    if not quiet:
        print(f"calibration: max |difference| = {max(calib, default=0.0):.3e} "
              f"({'ok' if calib_ok else 'FAILED'})")
        for r in results:
            order = "exact" if r.exact else f"{r.order:.3f}"
            print(f"  {r.identity:22s} order {order:>7s}  {'ok' if r.passed else 'FAILED'}")
        print(f"  summary: {path}")
    return status


# ---------------------------------------------------------------------------
# homogeneous experiments


def _homog_metric(cfg: ExperimentConfig, n: int) -> np.ndarray:
    m = cfg.initial.metric
    if isinstance(m, str):
        if m != "identity":
            raise ConfigError(f"{cfg.source}: initial.metric must be \"identity\" or a matrix")
        return np.eye(n, dtype=complex)
    g = np.array(m, dtype=float).astype(complex)
    if cfg.initial.metric_imag:
        g = g + 1j * np.array(cfg.initial.metric_imag, dtype=float)
    if g.shape != (n, n):
        raise ConfigError(f"{cfg.source}: initial.metric must be {n}x{n}")
    if not np.allclose(g, g.conj().T) or np.linalg.eigvalsh(g).min() <= 0:
        raise ConfigError(f"{cfg.source}: initial.metric must be Hermitian positive definite")
    return g


def cmd_homog_run(cfg: ExperimentConfig, out_dir: Path, quiet: bool = False) -> int:
    spec = load_algebra(cfg.domain.catalog)
    g0 = _homog_metric(cfg, spec.n)
    it = cfg.integrator
    hcfg = HomogeneousFlowConfig(dt=it.dt or 1e-3, t_max=it.t_max, cadence=cfg.monitors.cadence)
    traj = ode_flow(spec, g0, hcfg)
    out = Outputs(out_dir)
    cols, rows = traj.to_rows()
    out.write_csv("trajectory.csv", cols, rows)
    drift = float(np.abs(traj.metrics - traj.metrics[0]).max())
    status = EXIT_DEGENERATE if traj.degeneration else EXIT_OK
    summary = {
        "command": "homog run",
        "config": cfg.to_dict(),
        "algebra": spec.name,
        "samples": len(traj.times),
        "max_metric_drift": drift,
        "stationary": drift == 0.0,
        "final_metric_real": np.real(traj.metrics[-1]),
        "final_metric_imag": np.imag(traj.metrics[-1]),
        "logdet_identity_residual": logdet_identity_residual(traj) if len(traj.times) > 2 else None,
        "degeneration": traj.degeneration,
        "exit_status": status,
    }
    path = out.finish(summary)
    if not quiet:
        print(f"homog run on {spec.name}: {len(traj.times)} samples, metric drift {drift:.3e}")
        if traj.degeneration:
            print(f"  degenerated at t={traj.degeneration['t']:.6g}")
        print(f"  summary: {path}")
    return status


def cmd_homog_skt_scan(cfg: ExperimentConfig, out_dir: Path, quiet: bool = False) -> int:
    spec = load_algebra(cfg.domain.catalog)
    sc = cfg.scan
    res = skt_residual_scan(spec, SKTScanConfig(
        n_starts=sc.n_starts, tol=sc.tol, max_iter=sc.max_iter, seed=cfg.experiment.seed,
        log_diag_bound=sc.log_diag_bound, offdiag_bound=sc.offdiag_bound))
    out = Outputs(out_dir)
    out.write_csv("residuals.csv", ["start", "residual"], enumerate(res.residuals))
    summary = {"command": "homog skt-scan", "config": cfg.to_dict(), "algebra": spec.name,
               "scan": res.to_dict(), "exit_status": EXIT_OK}
    path = out.finish(summary)
    if not quiet:
        print(f"skt-scan on {spec.name}: min residual {res.min_residual:.6g} "
              f"over {len(res.residuals)} starts")
        print(f"  summary: {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

_COMMANDS = {
    ("flow", "run"): ("flow", cmd_flow_run),
    ("flow", "check-identities"): ("flow", cmd_check_identities),
    ("homog", "run"): ("homog", cmd_homog_run),
    ("homog", "skt-scan"): ("homog", cmd_homog_skt_scan),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pcflab", description="Pluriclosed flow numerical laboratory")
    groups = p.add_subparsers(dest="group", required=True)
    for group, subs in (("flow", ("run", "check-identities")), ("homog", ("run", "skt-scan"))):
        gp = groups.add_parser(group)
        sp = gp.add_subparsers(dest="action", required=True)
        for name in subs:
            c = sp.add_parser(name)
            c.add_argument("config", help="config file, or the name of a bundled config")
            c.add_argument("--out", help="output directory (overrides config and PCFLAB_OUT)")
            c.add_argument("--seed", type=int, help="override experiment.seed")
            c.add_argument("--quiet", action="store_true", help="suppress progress output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    kind, fn = _COMMANDS[(args.group, args.action)]
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.experiment.seed = args.seed
        if cfg.experiment.kind != kind:
            raise ConfigError(f"{cfg.source}: experiment.kind is {cfg.experiment.kind!r}, "
                              f"but `pcflab {args.group}` needs {kind!r}")
        out_dir = _output_dir(cfg, args.out)
        return fn(cfg, out_dir, quiet=args.quiet)
    except (ConfigError, AlgebraError, PositivityError) as exc:
        print(f"pcflab: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"pcflab: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
