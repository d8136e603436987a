"""Evolution-identity residuals and maximum-principle monitors.

Two kinds of checks live here.

*Identity residuals* compare a centred finite difference in time of a scalar
field (computed from stored states of a fixed-step run) with the analytic
right-hand side evaluated on the middle state.  The oracle never touches the
integrator's internal stages.  Repeating the run with half the step and
sharing the centre times gives an observed convergence order.

*Monitor series* record sup/inf quantities along a run and decide whether
they are monotone up to a slack of ``1e-7 (1 + |RHS|_inf)`` per step,
accumulated linearly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .flow import (
    FlowState,
    Passenger,
    PluriclosedFlow,
    FlowConfig,
    fit_decay_rate,
    initial_state,
    pcf_rhs_hodge,
)
from .geometry import (
    ComplexTensorField,
    MetricGeometry,
    chern_laplacian,
    covariant_d,
    covariant_dbar,
    inner,
    ip_Q_trace,
    norm_sq,
    pluriclosed_residual,
)
from .torus import GridSpec, PotentialForm, SpectralOps, holomorphic_frame_sections, sup_inf_scan

EXACT_RESIDUAL = 1e-12
MIN_ORDER = 1.9
SECTION_FLOOR = 1e-10
MONOTONE_SLACK = 1e-7


# ---------------------------------------------------------------------------
# identity checks


@dataclass
class IdentityCheck:
    """A scalar quantity ``q(state)`` and the claimed ``dq/dt`` as a field.

    ``quantity`` and ``rhs`` take ``(state, geo)``.  The constructors below
    take a ``q_sign`` argument so that tests can corrupt the sign of the
    ``Q`` term.
    """

    name: str
    quantity: Callable
    rhs: Callable
    margin: Callable | None = None  # optional pointwise inequality, >= 0 expected


def _scalar(f):
    return np.real(f).astype(float)


def _lap(f, geo):
    return np.real(chern_laplacian(np.asarray(f, dtype=complex), "", geo))


def _as_field(section, kinds=None):
    if isinstance(section, ComplexTensorField):
        return section.values, section.kinds
    return np.asarray(section), kinds


def _require_holomorphic(values, kinds, ops, tol=1e-10):
    d = ops.gradbar(np.asarray(values, dtype=complex))
    if np.abs(d).max() > tol:
        raise ValueError(f"section of type {kinds!r} is not holomorphic "
                         f"(dbar residual {np.abs(d).max():.2e})")


def covariant_section_check(section, kinds: str, ops: SpectralOps, q_sign: float = -1.0,
                            name: str | None = None) -> IdentityCheck:
    """``d/dt |b|^2 = Lap |b|^2 - |nabla b|^2 - p <Q, tr(b (x) bbar)>`` for fixed holomorphic ``b``."""
    beta, kinds = _as_field(section, kinds)
    if set(kinds) != {"d"}:
        raise ValueError("covariant sections are pure lower-unbarred tensors")
    _require_holomorphic(beta, kinds, ops)
    p = len(kinds)
    B = np.broadcast_to(beta, ops.grid.shape + beta.shape[-p:]) if beta.ndim == p else beta

    def quantity(state, geo):
        return norm_sq(B, kinds, geo.G, geo.H)

    def rhs(state, geo):
        f = norm_sq(B, kinds, geo.G, geo.H)
        nab, k2 = covariant_d(B, kinds, geo)
        return (_lap(f, geo) - norm_sq(nab, k2, geo.G, geo.H)
                + q_sign * p * ip_Q_trace(geo.Q, ComplexTensorField(B, kinds), geo.G, geo.H))

    return IdentityCheck(name or f"covariant_p{p}", quantity, rhs)


def contravariant_tensor_check(section, kinds: str, ops: SpectralOps, q_sign: float = 1.0,
                               name: str | None = None) -> IdentityCheck:
    """``d/dt |A|^2 = Lap |A|^2 - |nabla A|^2 + p <Q, tr(A (x) Abar)>`` for fixed holomorphic ``A``.

    The attached margin is the log form
    ``Lap log|A|^2 + p |T|^2 - d/dt log|A|^2 >= 0`` with the time derivative
    taken from the identity's right-hand side, evaluated where
    ``|A|^2 > SECTION_FLOOR``.
    """
    A, kinds = _as_field(section, kinds)
    if set(kinds) != {"u"}:
        raise ValueError("contravariant tensors are pure upper-unbarred tensors")
    _require_holomorphic(A, kinds, ops)
    p = len(kinds)
    A = np.broadcast_to(A, ops.grid.shape + A.shape[-p:]) if A.ndim == p else A

    def quantity(state, geo):
        return norm_sq(A, kinds, geo.G, geo.H)

    def rhs(state, geo):
        f = norm_sq(A, kinds, geo.G, geo.H)
        nab, k2 = covariant_d(A, kinds, geo)
        return (_lap(f, geo) - norm_sq(nab, k2, geo.G, geo.H)
                + q_sign * p * ip_Q_trace(geo.Q, ComplexTensorField(A, kinds), geo.G, geo.H))

    def margin(state, geo):
        f = norm_sq(A, kinds, geo.G, geo.H)
        good = f > SECTION_FLOOR
        dlog = rhs(state, geo) / np.where(good, f, 1.0)
        m = _lap(np.log(np.where(good, f, 1.0)), geo) + p * geo.torsion_norm_sq - dlog
        return np.where(good, m, np.inf)

    return IdentityCheck(name or f"contravariant_p{p}", quantity, rhs, margin)


def general_parabolic_check(passenger: str, kinds: str, q_sign: float | None = None,
                            name: str | None = None) -> IdentityCheck:
    """Forced heat equation ``db/dt = Lap b + mu`` carried as a passenger field.

    ``d/dt |b|^2 = Lap |b|^2 - |nabla b|^2 - |nablabar b|^2 -/+ p <Q, tr(b (x) bbar)>
    + 2 Re <b, mu>`` with ``-`` for covariant and ``+`` for contravariant ``b``.
    """
    p = len(kinds)
    if set(kinds) not in ({"d"}, {"u"}):
        raise ValueError(f"unsupported passenger signature {kinds!r}")
    sign = q_sign if q_sign is not None else (-1.0 if kinds[0] == "d" else 1.0)

    def get(state):
        pas: Passenger = state.passengers[passenger]
        if pas.kinds != kinds:
            raise ValueError(f"passenger {passenger!r} has signature {pas.kinds!r}, expected {kinds!r}")
        return pas

    def quantity(state, geo):
        return norm_sq(get(state).values, kinds, geo.G, geo.H)

    def rhs(state, geo):
        pas = get(state)
        b = pas.values
        f = norm_sq(b, kinds, geo.G, geo.H)
        out = (_lap(f, geo)
               - norm_sq(*covariant_d(b, kinds, geo), geo.G, geo.H)
               - norm_sq(*covariant_dbar(b, kinds, geo), geo.G, geo.H)
               + sign * p * ip_Q_trace(geo.Q, ComplexTensorField(b, kinds), geo.G, geo.H))
        if pas.forcing is not None:
            mu = np.broadcast_to(pas.forcing, b.shape)
            out = out + 2 * np.real(inner(b, mu, kinds, geo.G, geo.H))
        return out

    return IdentityCheck(name or f"forced_{kinds}", quantity, rhs)


def logdet_check(name: str = "logdet") -> IdentityCheck:
    """``(d/dt - Lap) log(det g / det h) = |T|^2`` with flat ``h``."""

    def quantity(state, geo):
        return geo.logdet

    def rhs(state, geo):
        return _lap(geo.logdet, geo) + geo.torsion_norm_sq

    return IdentityCheck(name, quantity, rhs)


def phi_check(ops: SpectralOps, name: str = "phi") -> IdentityCheck:
    """``(d/dt - Lap)|phi|^2 = -|nabla phi|^2 - |T|^2 - 2 <Q, phi (x) phibar>``.

    The margin reports minus the non-Laplacian part, which must be >= 0.
    """

    def parts(state, geo):
        phi = state.phi(ops)
        f = norm_sq(phi, "dd", geo.G, geo.H)
        rest = (-norm_sq(*covariant_d(phi, "dd", geo), geo.G, geo.H) - geo.torsion_norm_sq
                - 2 * ip_Q_trace(geo.Q, ComplexTensorField(phi, "dd"), geo.G, geo.H))
        return f, rest

    def quantity(state, geo):
        return norm_sq(state.phi(ops), "dd", geo.G, geo.H)

    def rhs(state, geo):
        f, rest = parts(state, geo)
        return _lap(f, geo) + rest

    def margin(state, geo):
        return -parts(state, geo)[1]

    return IdentityCheck(name, quantity, rhs, margin)


@dataclass
class IdentityResidual:
    identity: str
    residuals: dict = field(default_factory=dict)  # dt -> max |lhs - rhs|
    scale: float = 0.0  # max |rhs| seen, for context
    min_margin: float | None = None
    order: float | None = None
    exact: bool = False
    passed: bool = False

    def finalize(self, min_order: float = MIN_ORDER, margin_tol: float = 0.0):
        res = [self.residuals[k] for k in sorted(self.residuals, reverse=True)]
        self.exact = all(r < EXACT_RESIDUAL for r in res)
        if len(res) >= 2 and res[-1] > 0 and res[-2] > 0:
            self.order = math.log2(res[-2] / res[-1])
        ok_order = self.exact or (self.order is not None and self.order >= min_order)
        ok_margin = self.min_margin is None or self.min_margin >= -margin_tol
        self.passed = bool(ok_order and ok_margin)
        return self

    def to_dict(self):
        return {
            "identity": self.identity,
            "residuals": {repr(k): v for k, v in sorted(self.residuals.items(), reverse=True)},
            "scale": self.scale,
            "min_margin": self.min_margin,
            "order": "exact" if self.exact else self.order,
            "passed": self.passed,
        }


class _Accumulator:
    """Rolling three-state window evaluating one check along a fixed-step run.

    Only centres whose index is a multiple of ``stride`` are scored, so a run
    with half the step can be compared on the same centre times.
    """

    def __init__(self, check: IdentityCheck, dt: float, stride: int = 1):
        self.check, self.dt, self.stride = check, dt, stride
        self.q: list = []
        self.rhs_mid = None
        self.index = 0
        self.max_res = 0.0
        self.scale = 0.0
        self.min_margin = math.inf

    def wants_rhs(self, k: int, last: bool) -> bool:
        return (not last) and k > 0 and k % self.stride == 0

    def push(self, state, geo, k: int, last: bool):
        self.q.append(_scalar(self.check.quantity(state, geo)))
        if len(self.q) == 3:
            if self.rhs_mid is not None:
                lhs = (self.q[2] - self.q[0]) / (2 * self.dt)
                self.max_res = max(self.max_res, float(np.abs(lhs - self.rhs_mid).max()))
            self.q.pop(0)
        self.rhs_mid = None
        if self.wants_rhs(k, last):
            r = _scalar(self.check.rhs(state, geo))
            self.scale = max(self.scale, float(np.abs(r).max()))
            self.rhs_mid = r
            if self.check.margin is not None:
                self.min_margin = min(self.min_margin, float(np.min(self.check.margin(state, geo))))


def evaluate_checks(flow: PluriclosedFlow, state: FlowState, dt: float, nsteps: int,
                    checks: Iterable[IdentityCheck], stride: int = 1) -> dict:
    """Integrate ``nsteps`` fixed steps and evaluate each check.

    The centred difference uses spacing ``dt``; residuals are scored at
    interior step indices divisible by ``stride``.  Returns
    ``{name: (max residual, scale, min margin)}``.
    """
    accs = [_Accumulator(c, dt, stride) for c in checks]
    for k in range(nsteps + 1):
        geo = MetricGeometry(state.G, flow.ops)
        for acc in accs:
            acc.push(state, geo, k, last=(k == nsteps))
        if k < nsteps:
            state, _ = flow.step(state, dt)
    return {a.check.name: (a.max_res, a.scale, a.min_margin) for a in accs}


def richardson_study(grid: GridSpec, state0: FlowState, checks: list, horizon: float,
                     n_coarse: int, ops: SpectralOps | None = None, dealias: bool = False,
                     margin_tol: float = 1e-8) -> list[IdentityResidual]:
    """Run with ``dt = horizon / n_coarse`` and ``dt / 2``, sharing centre times.

    The spacing of the finite difference halves together with the step, so
    both error sources (centred difference, RK4) shrink and a second-order
    oracle should show order ~2.
    """
    ops = ops or SpectralOps(grid)
    cfg = FlowConfig(adaptive=False, dealias=dealias, min_eigenvalue=0.0)
    flow = PluriclosedFlow(grid, cfg, ops)
    dt = horizon / n_coarse
    results = {c.name: IdentityResidual(c.name) for c in checks}
    for h, nsteps, stride in ((dt, n_coarse, 1), (dt / 2, 2 * n_coarse, 2)):
        out = evaluate_checks(flow, state0.copy(), h, nsteps, checks, stride)
        for name, (res, scale, margin) in out.items():
            r = results[name]
            r.residuals[h] = res
            r.scale = max(r.scale, scale)
            if math.isfinite(margin):
                r.min_margin = margin if r.min_margin is None else min(r.min_margin, margin)
    return [r.finalize(margin_tol=margin_tol) for r in results.values()]


def standard_identity_checks(grid: GridSpec, ops: SpectralOps, covariant_q_sign: float = -1.0,
                             contravariant_q_sign: float = 1.0,
                             passenger_wave: float = 0.1) -> tuple[list, dict]:
    """The identity checks run by ``check-identities`` plus the passengers they need.

    Each passenger starts as ``e_1 + passenger_wave * exp(2 pi i (x^1 - y^n)) e_n``
    with constant forcing ``mu = (0.3 + 0.2i) e_1``.  With ``passenger_wave = 0``
    on the flat metric the passenger is affine in time and its identity holds
    exactly under the centred difference.
    """
    n = grid.n
    dz = holomorphic_frame_sections(grid, "co", 1)
    dz2 = holomorphic_frame_sections(grid, "co", 2)
    d_z = holomorphic_frame_sections(grid, "contra", 1)
    d_z2 = holomorphic_frame_sections(grid, "contra", 2)
    mixed = 1 if n > 1 else 0
    checks = [
        covariant_section_check(dz[0], "d", ops, covariant_q_sign, "covariant_p1"),
        covariant_section_check(dz2[mixed], "dd", ops, covariant_q_sign, "covariant_p2"),
        contravariant_tensor_check(d_z[0], "u", ops, contravariant_q_sign, "contravariant_p1"),
        contravariant_tensor_check(d_z2[mixed], "uu", ops, contravariant_q_sign, "contravariant_p2"),
        general_parabolic_check("beta_co", "d", name="forced_covariant"),
        general_parabolic_check("beta_contra", "u", name="forced_contravariant"),
        logdet_check(),
        phi_check(ops),
    ]
    x, y = grid.coordinates()
    wave = np.exp(2j * np.pi * (x[0] - y[-1]))
    passengers = {}
    for name, kinds in (("beta_co", "d"), ("beta_contra", "u")):
        b = np.zeros(grid.shape + (n,), dtype=complex)
        b[..., 0] = 1.0
        b[..., -1] += passenger_wave * wave
        mu = np.zeros(n, dtype=complex)
        mu[0] = 0.3 + 0.2j
        passengers[name] = Passenger(b, kinds, mu)
    return checks, passengers


# ---------------------------------------------------------------------------
# monotone series


@dataclass
class MonitorSeries:
    name: str
    direction: str  # "nonincreasing" | "nondecreasing" | "trend"
    times: list = field(default_factory=list)
    values: list = field(default_factory=list)
    slack: list = field(default_factory=list)  # accumulated slack at each sample
    verdict: str = "pending"
    violation: tuple | None = None  # (t, excess)
    tolerance: float = MONOTONE_SLACK
    rate: float | None = None

    def evaluate(self):
        """Recompute the verdict from the stored samples."""
        v = np.asarray(self.values, dtype=float)
        s = np.asarray(self.slack, dtype=float)
        self.violation = None
        if self.direction == "trend":
            self.verdict = "recorded"
            return self
        sign = 1.0 if self.direction == "nonincreasing" else -1.0
        # violation iff sign*(v_k - v_j) > s_k - s_j for some j < k
        w = sign * v - s
        best = math.inf
        worst = (0.0, None)
        for k in range(len(w)):
            if k and w[k] - best > worst[0]:
                worst = (float(w[k] - best), float(self.times[k]))
            best = min(best, w[k])
        if worst[1] is None or not np.all(np.isfinite(v)):
            self.verdict = f"monotone-{self.direction}" if np.all(np.isfinite(v)) else "violated"
            if self.verdict == "violated":
                bad = int(np.argmin(np.isfinite(v)))
                self.violation = (float(self.times[bad]), math.inf)
        else:
            self.verdict = "violated"
            self.violation = (worst[1], worst[0])
        return self

    @property
    def ok(self) -> bool:
        return self.verdict != "violated"

    def to_dict(self):
        d = {"name": self.name, "direction": self.direction, "verdict": self.verdict,
             "tolerance_per_step": self.tolerance, "samples": len(self.values)}
        if self.values:
            d["first"] = float(self.values[0])
            d["last"] = float(self.values[-1])
        if self.violation is not None:
            d["violation"] = {"t": self.violation[0], "excess": self.violation[1]}
        if self.rate is not None:
            d["fitted_rate"] = self.rate
        return d

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", self.name, "accumulated_slack"])
            for row in zip(self.times, self.values, self.slack):
                w.writerow([repr(float(x)) for x in row])


def upsilon_norms(geo_g: MetricGeometry, geo_h: MetricGeometry) -> tuple[float, float]:
    """``sup |Upsilon|_g`` and ``sup |nabla_h Upsilon|_g`` with ``Upsilon = Gamma(g) - Gamma(h)``.

    ``nabla_h`` collects both the ``(1,0)`` and ``(0,1)`` Chern derivatives of ``h``.
    """
    ups = geo_g.gamma - geo_h.gamma
    kinds = "udd"
    n0 = norm_sq(ups, kinds, geo_g.G, geo_g.H)
    d1, k1 = covariant_d(ups, kinds, geo_h)
    d2, k2 = covariant_dbar(ups, kinds, geo_h)
    n1 = norm_sq(d1, k1, geo_g.G, geo_g.H) + norm_sq(d2, k2, geo_g.G, geo_g.H)
    return float(np.sqrt(n0.max())), float(np.sqrt(n1.max()))


def kato_margin(A, kinds: str, geo: MetricGeometry) -> float:
    """``min (|nabla A|^2 |A|^2 - |d |A|^2|^2)`` over points with ``|A|^2 > SECTION_FLOOR``.

    For holomorphic ``A`` the derivative of ``|A|^2`` comes from the (1,0)
    part alone, which is what this evaluates.
    """
    f = norm_sq(A, kinds, geo.G, geo.H)
    df = geo.ops.grad(f.astype(complex))
    lhs = norm_sq(df, "d", geo.G, geo.H)
    rhs = norm_sq(*covariant_d(A, kinds, geo), geo.G, geo.H) * f
    good = f > SECTION_FLOOR
    return float(np.min(np.where(good, rhs - lhs, np.inf)))


def cauchy_schwarz_margins(A, kinds: str, geo: MetricGeometry) -> tuple[float, float]:
    """Margins of ``<Q, tr(A (x) Abar)> <= |Q| |A|^2 <= |T|^2 |A|^2``."""
    f = norm_sq(A, kinds, geo.G, geo.H)
    q = ip_Q_trace(geo.Q, ComplexTensorField(A, kinds), geo.G, geo.H)
    qn = np.sqrt(norm_sq(geo.Q, "dD", geo.G, geo.H))
    return float(np.min(qn * f - q)), float(np.min((geo.torsion_norm_sq - qn) * f))


class MaximumPrincipleRecorder:
    """Observer for :meth:`PluriclosedFlow.run` collecting the monitored quantities.

    Sections: ``dz^i`` (covariant, ``p = 1``) and ``d/dz^i`` (contravariant).
    ``Phi_i = log |d/dz^i|^2 + p |phi|^2`` with ``p = 1``; points with
    ``|d/dz^i|^2 < SECTION_FLOOR`` are left out of the sup (never happens on
    the torus, but the guard mirrors the continuum argument).
    """

    def __init__(self, grid: GridSpec, ops: SpectralOps, p: int = 1,
                 extended: bool = True, slack: float = MONOTONE_SLACK):
        self.grid, self.ops, self.p = grid, ops, p
        self.extended = extended
        self.slack_per_step = slack
        self.rows: list[dict] = []
        self._flat = MetricGeometry(np.broadcast_to(np.eye(grid.n, dtype=complex),
                                                    grid.shape + (grid.n, grid.n)).copy(), ops)
        self._contra = holomorphic_frame_sections(grid, "contra", 1)

    def __call__(self, state: FlowState, geo: MetricGeometry, step: int):
        n = self.grid.n
        G, H = geo.G, geo.H
        row = {"t": float(state.t), "step": int(step)}
        diagH = np.real(np.diagonal(H, axis1=-2, axis2=-1))
        diagG = np.real(np.diagonal(G, axis1=-2, axis2=-1))
        phi2 = norm_sq(state.phi(self.ops), "dd", G, H)
        for i in range(n):
            row[f"sup_cov_{i + 1}"] = sup_inf_scan(diagH[..., i])[0]
            f = diagG[..., i]
            Phi = np.where(f > SECTION_FLOOR, np.log(np.maximum(f, SECTION_FLOOR)) + self.p * phi2,
                           -np.inf)
            row[f"sup_Phi_{i + 1}"] = sup_inf_scan(Phi)[0]
        row["inf_det_ratio"] = sup_inf_scan(np.real(geo.detG))[2]
        row["sup_phi2"] = sup_inf_scan(phi2)[0]
        row["sup_T2"] = sup_inf_scan(geo.torsion_norm_sq)[0]
        rhs = geo.flow_rhs()
        row["rhs_norm"] = float(np.abs(rhs).max())
        lam = np.linalg.eigvalsh(G)
        row["lambda_min"] = float(lam[..., 0].min())
        row["lambda_max"] = float(lam[..., -1].max())
        # bounds reconstructed from section norms only
        row["lambda_min_lower"] = float((1.0 / diagH.sum(axis=-1)).min())
        row["lambda_max_upper"] = float(diagG.sum(axis=-1).max())
        row["sandwich_ok"] = bool(np.all(1.0 / diagH.sum(axis=-1) <= lam[..., 0] * (1 + 1e-12))
                                  and np.all(lam[..., -1] <= diagG.sum(axis=-1) * (1 + 1e-12)))
        if self.extended:
            row["max_T"] = float(np.abs(geo.torsion).max())
            row["max_rho"] = float(np.abs(geo.rho).max())
            row["hodge_equivalence"] = float(np.abs(pcf_rhs_hodge(G, self.ops, geo) - rhs).max())
            row["pluriclosed_residual"] = pluriclosed_residual(G, self.ops)
            from .flow import consistency_residual

            row["consistency"] = consistency_residual(state, self.ops)
            u0, u1 = upsilon_norms(geo, self._flat)
            row["upsilon"] = u0
            row["nabla_upsilon"] = u1
            A = self._contra[0]
            row["kato_margin"] = kato_margin(A, "u", geo)
            cs1, cs2 = cauchy_schwarz_margins(A, "u", geo)
            row["cs_margin_Q"] = cs1
            row["cs_margin_T"] = cs2
        self.rows.append(row)
        return None

    def column(self, key):
        return [r[key] for r in self.rows]


def maximum_principle_suite(recorder: MaximumPrincipleRecorder) -> list[MonitorSeries]:
    """Build the monotone series and their verdicts from recorded samples."""
    rows = recorder.rows
    if not rows:
        return []
    n = recorder.grid.n
    # accumulated slack between samples: steps * tol * (1 + |RHS|)
    acc = [0.0]
    for a, b in zip(rows[:-1], rows[1:]):
        steps = max(b["step"] - a["step"], 1)
        acc.append(acc[-1] + steps * recorder.slack_per_step
                   * (1 + max(a["rhs_norm"], b["rhs_norm"])))
    times = [r["t"] for r in rows]
    spec = [(f"sup_cov_{i + 1}", "nonincreasing") for i in range(n)]
    spec += [(f"sup_Phi_{i + 1}", "nonincreasing") for i in range(n)]
    spec += [("inf_det_ratio", "nondecreasing"), ("sup_phi2", "nonincreasing"),
             ("sup_T2", "trend")]
    out = []
    for key, direction in spec:
        s = MonitorSeries(key, direction, list(times), [r[key] for r in rows], list(acc),
                          tolerance=recorder.slack_per_step)
        s.evaluate()
        if key == "sup_T2":
            s.rate = fit_decay_rate(times, s.values)
        out.append(s)
    return out


def sandwich_holds(recorder: MaximumPrincipleRecorder) -> bool:
    return all(r["sandwich_ok"] for r in recorder.rows)


# ---------------------------------------------------------------------------
# convenience driver for a standard non-Kahler identity run


def identity_suite(grid: GridSpec, alpha0: PotentialForm, horizon: float = 0.1,
                   n_coarse: int = 64, covariant_q_sign: float = -1.0,
                   contravariant_q_sign: float = 1.0, dealias: bool = False,
                   ops: SpectralOps | None = None,
                   passenger_wave: float = 0.1) -> list[IdentityResidual]:
    ops = ops or SpectralOps(grid)
    state = initial_state(grid, alpha0, ops)
    checks, passengers = standard_identity_checks(grid, ops, covariant_q_sign, contravariant_q_sign,
                                                  passenger_wave)
    state.passengers = passengers
    return richardson_study(grid, state, checks, horizon, n_coarse, ops, dealias)


def calibration_check(grid: GridSpec, n_samples: int, amplitude: float = 0.05,
                      seed: int = 0, kmax: int = 1, ops: SpectralOps | None = None) -> list[float]:
    """``max |(-S + Q) - (Hodge form velocity)|`` on random pluriclosed metrics.

    The two expressions of the flow are built by unrelated code paths, so
    agreement pins down the curvature and torsion sign conventions.
    """
    from .flow import pcf_rhs
    from .torus import make_pluriclosed_initial

    ops = ops or SpectralOps(grid)
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_samples):
        alpha = PotentialForm.random(grid, rng, amplitude, kmax)
        G, _ = make_pluriclosed_initial(grid, alpha, ops)
        out.append(float(np.abs(pcf_rhs(G, ops) - pcf_rhs_hodge(G, ops)).max()))
    return out
