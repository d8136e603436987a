"""Time integration of pluriclosed flow on the torus.

The metric ``g`` and the reduced potential ``alpha`` are integrated jointly
with classical RK4:

    dg/dt     = -S + Q
    dalpha/dt = dbar*_g omega - (i/2) d log det g

with the flat background ``h`` (``rho(h) = 0``, ``det h = 1``), ``mu = 0`` and
``omega_hat = omega_0``, so that ``omega_g`` should stay equal to
``omega_0 + dbar alpha + d alphabar``. The mismatch is reported, never
corrected.

Optional passenger tensor fields ``beta`` can ride along, evolving by
``dbeta/dt = Laplacian_g beta + forcing``; they feed the forced-identity
monitors.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    DegenerateMetricError,
    MetricGeometry,
    batched_det,
    batched_inv,
    chern_laplacian,
    check_positive,
    hermitian_part,
    smallest_eigenvalues,
)
from .torus import GridSpec, PotentialForm, SpectralOps, partial_of_form, potential_perturbation

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# right-hand sides


def pcf_rhs(G, ops) -> np.ndarray:
    """``-S + Q`` for the sampled metric ``G``."""
    return MetricGeometry(G, ops).flow_rhs()


def _adjoint_weights(geo: MetricGeometry, psi):
    # conj(psi_{k lbar}) H[k, a] H[b, l] det g, shared by both adjoints
    return np.einsum("...kl,...ka,...bl,...->...ab", np.conj(psi), geo.H, geo.H, geo.detG)


def d_star(psi, geo: MetricGeometry):
    """Formal L^2 adjoint of ``d`` (0,1)-forms -> (1,1)-forms, applied to ``psi``.

    ``psi[..., i, j]`` are components of ``psi_{i jbar} dz^i ^ dzbar^j``; the
    result holds the components ``gamma_jbar`` of a (0,1)-form. Pointwise
    products use the plain tensor contractions with ``g`` and the volume
    ``det g``.
    """
    X = _adjoint_weights(geo, psi)  # [a, b] = conj psi_{k l} H[k, a] H[b, l] V
    div = np.einsum("...iij->...j", geo.ops.grad(X))
    w = -div / geo.detG[..., None]
    return np.conj(np.einsum("...lj,...j->...l", geo.G, w))


def dbar_star(psi, geo: MetricGeometry):
    """Formal L^2 adjoint of ``dbar`` (1,0)-forms -> (1,1)-forms; returns ``b_i``."""
    Y = np.swapaxes(_adjoint_weights(geo, psi), -1, -2)  # [b, a]
    div = np.einsum("...jji->...i", geo.ops.gradbar(Y))
    u = div / geo.detG[..., None]
    return np.conj(np.einsum("...ik,...i->...k", geo.G, u))


def pcf_rhs_hodge(G, ops, geo: MetricGeometry | None = None) -> np.ndarray:
    """Metric velocity from ``d d* omega + dbar dbar* omega + i d dbar log det g``.

    Returned as a metric (not form) velocity so it compares directly with
    :func:`pcf_rhs`. Only meaningful for pluriclosed ``G``.
    """
    geo = geo or MetricGeometry(G, ops)
    psi = 1j * geo.G
    gam = d_star(psi, geo)
    b = dbar_star(psi, geo)
    form = ops.grad(gam) - np.swapaxes(ops.gradbar(b), -1, -2)
    form = form + 1j * ops.ddbar(geo.logdet.astype(complex))
    return hermitian_part(form / 1j)


def alpha_rhs(geo: MetricGeometry) -> np.ndarray:
    """Reduced-flow velocity of the (1,0)-form potential (flat background, ``mu = 0``)."""
    b = dbar_star(1j * geo.G, geo)
    return b - 0.5j * geo.ops.grad(geo.logdet.astype(complex))


# ---------------------------------------------------------------------------
# state and bookkeeping


@dataclass
class Passenger:
    """Tensor field ``beta`` carried along by ``dbeta/dt = Laplacian beta + forcing``."""

    values: np.ndarray
    kinds: str
    forcing: np.ndarray | None = None


@dataclass
class FlowState:
    t: float
    G: np.ndarray
    alpha: np.ndarray
    eta: np.ndarray
    G0: np.ndarray
    passengers: dict = field(default_factory=dict)
    dt: float | None = None

    def copy(self) -> "FlowState":
        return FlowState(
            self.t, self.G.copy(), self.alpha.copy(), self.eta, self.G0,
            {k: Passenger(p.values.copy(), p.kinds, p.forcing) for k, p in self.passengers.items()},
            self.dt,
        )

    def phi(self, ops) -> np.ndarray:
        """``phi = d alpha - eta`` as antisymmetric tensor components."""
        return partial_of_form(self.alpha, ops) - self.eta


def initial_state(grid: GridSpec, alpha0: PotentialForm, ops: SpectralOps | None = None,
                  G0: np.ndarray | None = None) -> FlowState:
    """Start from ``omega_0 = omega_flat + dbar alpha0 + d alpha0bar`` (or explicit ``G0``)."""
    from .torus import make_pluriclosed_initial

    ops = ops or SpectralOps(grid)
    G_init, eta = make_pluriclosed_initial(grid, alpha0, ops)
    if G0 is not None:
        G_init = np.asarray(G0, dtype=complex)
    zero = np.zeros(grid.shape + (grid.n,), dtype=complex)
    return FlowState(0.0, G_init.copy(), zero, eta, G_init.copy())


def consistency_residual(state: FlowState, ops) -> float:
    """``max |g - (g0 + dbar alpha + d alphabar)|``."""
    pot = PotentialForm(ops.grid, state.alpha)
    return float(np.abs(state.G - state.G0 - potential_perturbation(pot, ops)).max())


@dataclass
class DegenerationEvent:
    t: float
    reason: str
    min_eigenvalue: float | None = None
    location: tuple | None = None


@dataclass
class ExistenceRecord:
    tau_star: float | str
    events: list = field(default_factory=list)

    @property
    def degenerated(self) -> bool:
        return bool(self.events)

    def to_dict(self):
        tau = self.tau_star
        if isinstance(tau, float) and math.isinf(tau):
            tau = "inf"
        return {
            "tau_star": tau,
            "events": [
                {"t": e.t, "reason": e.reason, "min_eigenvalue": e.min_eigenvalue,
                 "location": list(e.location) if e.location is not None else None}
                for e in self.events
            ],
        }


NOT_COMPUTED = "not computed"


def formal_existence_time(background: str) -> ExistenceRecord:
    """``tau*`` for the supported backgrounds.

    The flat torus has vanishing first Chern class, so the Aeppli class never
    leaves the positive cone and ``tau* = inf``. Other backgrounds are not
    handled at the class level.
    """
    if background in ("torus", "torus-flat", "flat"):
        return ExistenceRecord(math.inf)
    return ExistenceRecord(NOT_COMPUTED)


def cfl_timestep(G, grid: GridSpec, safety: float = 0.2) -> float:
    """``safety * h^2 / max lambda_max(g^{-1})``."""
    lam_min = smallest_eigenvalues(G).min()
    return safety * grid.h ** 2 * lam_min


def fit_decay_rate(times, values, fraction: float = 0.5) -> float:
    """Least-squares slope of ``log values`` over the trailing ``fraction`` of samples."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > 0
    t, v = t[keep], v[keep]
    if len(t) < 2:
        return float("nan")
    start = int(len(t) * (1 - fraction))
    start = min(start, len(t) - 2)
    slope, _ = np.polyfit(t[start:], np.log(v[start:]), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# integrator


@dataclass
class FlowConfig:
    dt: float | None = None
    safety: float = 0.2
    t_max: float = 2.0
    stop_tol: float = 1e-6
    max_steps: int = 200_000
    wall_clock: float | None = None
    cadence: int = 10
    adaptive: bool = True
    reject_on_regress: bool = True
    regress_tol: float = 1e-7
    max_halvings: int = 10
    dealias: bool = True
    min_eigenvalue: float = 1e-12
    keep_snapshots: bool = False
    stop_on_convergence: bool = True


@dataclass
class RunResult:
    state: FlowState
    record: ExistenceRecord
    samples: list
    snapshots: list
    steps: int
    rejections: int
    stop_reason: str

    @property
    def converged(self) -> bool:
        return self.stop_reason == "converged"


class PluriclosedFlow:
    """RK4 integrator for the joint ``(g, alpha, passengers)`` system."""

    def __init__(self, grid: GridSpec, config: FlowConfig | None = None,
                 ops: SpectralOps | None = None):
        self.grid = grid
        self.config = config or FlowConfig()
        self.ops = ops or SpectralOps(grid)

    # -- right-hand side ---------------------------------------------------
    def _filter(self, f):
        return self.ops.dealias(f) if self.config.dealias else f

    def rhs(self, fields: dict) -> tuple[dict, MetricGeometry]:
        geo = MetricGeometry(fields["G"], self.ops)
        geo_threshold = self.config.min_eigenvalue
        if geo_threshold > 0:
            check_positive(geo.G, geo_threshold)
        out = {
            "G": self._filter(geo.flow_rhs()),
            "alpha": self._filter(alpha_rhs(geo)),
        }
        for key, value in fields.items():
            if key.startswith("p:"):
                kinds, forcing = self._passenger_meta[key]
                v = chern_laplacian(value, kinds, geo)
                if forcing is not None:
                    v = v + forcing
                out[key] = self._filter(v)
        return out, geo

    def _pack(self, state: FlowState) -> dict:
        fields = {"G": state.G, "alpha": state.alpha}
        self._passenger_meta = {}
        for name, p in state.passengers.items():
            fields["p:" + name] = p.values
            self._passenger_meta["p:" + name] = (p.kinds, p.forcing)
        return fields

    @staticmethod
    def _axpy(base: dict, k: dict, h: float) -> dict:
        return {key: base[key] + h * k[key] for key in base}

    def step(self, state: FlowState, dt: float) -> tuple[FlowState, MetricGeometry]:
        """One classical RK4 step; raises :class:`DegenerateMetricError` on failure.

        Returns the new state and the geometry of the *starting* state.
        """
        y = self._pack(state)
        k1, geo0 = self.rhs(y)
        k2, _ = self.rhs(self._axpy(y, k1, dt / 2))
        k3, _ = self.rhs(self._axpy(y, k2, dt / 2))
        k4, _ = self.rhs(self._axpy(y, k3, dt))
        new = {key: y[key] + dt / 6 * (k1[key] + 2 * k2[key] + 2 * k3[key] + k4[key]) for key in y}
        G = hermitian_part(new["G"])
        if not all(np.all(np.isfinite(v)) for v in new.values()):
            raise DegenerateMetricError(float("nan"), ())
        if self.config.min_eigenvalue > 0:
            check_positive(G, self.config.min_eigenvalue)
        passengers = {
            name: Passenger(new["p:" + name], p.kinds, p.forcing)
            for name, p in state.passengers.items()
        }
        out = FlowState(state.t + dt, G, new["alpha"], state.eta, state.G0, passengers, dt)
        return out, geo0

    # -- monotone guard used for step rejection ----------------------------
    @staticmethod
    def _guard_values(G):
        H = batched_inv(G)
        diag = np.real(np.diagonal(H, axis1=-2, axis2=-1))
        sup_cov = diag.reshape(-1, diag.shape[-1]).max(axis=0)
        inf_det = float(batched_det(G).real.min())
        return sup_cov, inf_det

    def _regressed(self, old, new, rhs_norm, nsteps=1) -> bool:
        slack = self.config.regress_tol * (1 + rhs_norm) * nsteps
        (sup_old, det_old), (sup_new, det_new) = old, new
        return bool(np.any(sup_new > sup_old + slack) or det_new < det_old - slack)

    # -- driver --------------------------------------------------------------
    def run(self, state: FlowState, observers=(), background: str = "torus") -> RunResult:
        cfg = self.config
        record = formal_existence_time(background)
        dt0 = cfg.dt if cfg.dt is not None else cfl_timestep(state.G, self.grid, cfg.safety)
        dt = state.dt or dt0
        steps = rejections = 0
        streak = 0
        samples, snapshots = [], []
        start = time.monotonic()
        guard = self._guard_values(state.G)
        stop_reason = "t_max"

        def observe(st, geo, step_index):
            for obs in observers:
                row = obs(st, geo, step_index)
                if row is not None:
                    samples.append(row)
            if cfg.keep_snapshots:
                snapshots.append(st.copy())

        while True:
            if steps >= cfg.max_steps:
                stop_reason = "max_steps"
                break
            if cfg.wall_clock is not None and time.monotonic() - start > cfg.wall_clock:
                stop_reason = "wall_clock"
                break
            remaining = cfg.t_max - state.t
            if remaining <= 1e-14:
                stop_reason = "t_max"
                break
            h = min(dt, remaining)
            attempts = 0
            while True:
                try:
                    new, geo = self.step(state, h)
                    rhs_norm = float(np.abs(geo.flow_rhs()).max())
                    new_guard = self._guard_values(new.G)
                    if cfg.adaptive and cfg.reject_on_regress and self._regressed(guard, new_guard, rhs_norm):
                        raise _Regression()
                    break
                except (DegenerateMetricError, _Regression, FloatingPointError) as err:
                    if not cfg.adaptive or attempts >= cfg.max_halvings:
                        if isinstance(err, DegenerateMetricError):
                            record.events.append(DegenerationEvent(
                                state.t, "degenerate metric", err.min_eigenvalue, err.location))
                        else:
                            record.events.append(DegenerationEvent(state.t, "monotone guard failed"))
                        log.warning("flow halted at t=%.6g: %s", state.t, err)
                        try:
                            geo_here = MetricGeometry(state.G, self.ops, check=False)
                            observe(state, geo_here, steps)
                        except Exception:  # noqa: BLE001 - best-effort final sample
                            pass
                        return RunResult(state, record, samples, snapshots, steps, rejections, "degenerated")
                    rejections += 1
                    attempts += 1
                    h /= 2
                    streak = 0
            if steps % cfg.cadence == 0:
                observe(state, geo, steps)
            if cfg.stop_on_convergence and rhs_norm < cfg.stop_tol:
                stop_reason = "converged"
                break
            state, guard = new, new_guard
            steps += 1
            dt = h
            streak += 1
            if streak >= 20 and dt < dt0:
                dt = min(2 * dt, dt0)
                streak = 0
        geo_final = MetricGeometry(state.G, self.ops, check=False)
        observe(state, geo_final, steps)
        state.dt = dt
        return RunResult(state, record, samples, snapshots, steps, rejections, stop_reason)


class StepDoublingEstimator:
    """Observer accumulating a global error estimate for the metric derivatives.

    At each observation it compares one RK4 step of size ``dt`` with two of
    size ``dt/2``; ``max |d(delta g)| / 15`` is the local error estimate of
    the first derivatives of ``g``, which bound the torsion error.  The
    estimate is multiplied by the number of steps since the previous
    observation and summed.  The starting value is the torsion of the
    initial data, the level at which a zero tensor is represented on the
    grid.
    """

    def __init__(self, flow: "PluriclosedFlow", dt: float, floor: float = 0.0):
        self.flow, self.dt = flow, dt
        self.total = floor
        self.local = 0.0
        self.last_step = None
        self.history: list[tuple[float, float]] = []

    def __call__(self, state: FlowState, geo: MetricGeometry, step: int):
        dt = self.dt
        try:
            full, _ = self.flow.step(state, dt)
            half, _ = self.flow.step(state, dt / 2)
            two, _ = self.flow.step(half, dt / 2)
            local = float(np.abs(self.flow.ops.grad(full.G - two.G)).max()) / 15.0
        except DegenerateMetricError:
            local = math.inf
        if self.last_step is not None:
            # steps since the previous observation, charged at the larger
            # of the two local estimates bracketing them
            self.total += (step - self.last_step) * max(self.local, local)
        self.local = local
        self.last_step = step
        self.history.append((float(state.t), self.total))
        return None


class _Regression(Exception):
    pass


def integrate_fixed(grid: GridSpec, state: FlowState, dt: float, nsteps: int,
                    ops: SpectralOps | None = None, dealias: bool = True) -> list:
    """Fixed-step RK4 returning every state, used by the finite-difference oracles."""
    cfg = FlowConfig(dt=dt, adaptive=False, dealias=dealias, min_eigenvalue=0.0)
    flow = PluriclosedFlow(grid, cfg, ops)
    states = [state.copy()]
    for _ in range(nsteps):
        state, _ = flow.step(state, dt)
        states.append(state.copy())
    return states
