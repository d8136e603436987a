"""Left-invariant Hermitian geometry on Lie algebras with complex structure.

A :class:`LieAlgebraSpec` holds real structure constants ``c[i, j, k] = c^k_{ij}``
(so ``[e_i, e_j] = sum_k c^k_{ij} e_k``) and a matrix ``J`` acting on column
vectors.  Everything below is evaluated in the complex frame

    Z_a = (v_a - i J v_a) / 2,   a = 0..n-1,

together with the conjugates ``Zbar_a``, where the real vectors ``v_a`` are
picked greedily so that ``{v_a, J v_a}`` is a basis.  The combined list
``B = (Z_0..Z_{n-1}, Zbar_0..Zbar_{n-1})`` indexes the complexified algebra
and ``C[A, B, E]`` are its structure constants.

Invariant frame structure equations (the replacement of coordinate
derivatives of ``g`` by brackets, since the metric is constant but the frame
is not closed):

* ``nabla_{Zbar_b} Z_a = [Zbar_b, Z_a]^{1,0}`` (the holomorphic structure),
* ``g(nabla_{Z_b} Z_a, Zbar_c) = -g(Z_a, nabla_{Z_b} Zbar_c)`` with
  ``nabla_{Z_b} Zbar_c = conj(nabla_{Zbar_b} Z_c)`` (metric compatibility),
* ``T(X, Y) = nabla_X Y - nabla_Y X - [X, Y]``,
* ``R(X, Y) = [M(X), M(Y)] - M([X, Y])`` with ``M(X)`` the matrix of
  ``nabla_X`` on the (1,0) part.

These reduce to the coordinate formulas of :mod:`pcflab.geometry` for a
holomorphic coordinate frame, and the test-suite checks them against a
symbolic coordinate computation on two non-abelian examples.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .geometry import hermitian_part, torsion_quadratic_Q

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

CATALOG_FORMAT = "pcflab-algebra/1"


class AlgebraError(ValueError):
    """Malformed algebra data: bad shape, Jacobi or integrability failure."""


def _standard_J(dim: int) -> np.ndarray:
    J = np.zeros((dim, dim))
    for a in range(dim // 2):
        J[2 * a + 1, 2 * a] = 1.0
        J[2 * a, 2 * a + 1] = -1.0
    return J


@dataclass(frozen=True, eq=False)
class LieAlgebraSpec:
    name: str
    c: np.ndarray
    J: np.ndarray
    tol: float = 1e-12

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        J = np.asarray(self.J, dtype=float)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "J", J)
        dim = c.shape[0]
        if c.shape != (dim, dim, dim) or J.shape != (dim, dim) or dim % 2:
            raise AlgebraError(f"{self.name}: inconsistent shapes {c.shape}, {J.shape}")
        if np.abs(c + np.swapaxes(c, 0, 1)).max() > self.tol:
            raise AlgebraError(f"{self.name}: structure constants not antisymmetric")
        if self.jacobi_residual() > self.tol:
            raise AlgebraError(f"{self.name}: Jacobi residual {self.jacobi_residual():.2e}")
        if np.abs(J @ J + np.eye(dim)).max() > self.tol:
            raise AlgebraError(f"{self.name}: J^2 != -1")
        if self.nijenhuis_residual() > self.tol:
            raise AlgebraError(f"{self.name}: J not integrable "
                               f"(Nijenhuis residual {self.nijenhuis_residual():.2e})")

    @property
    def dim(self) -> int:
        return self.c.shape[0]

    @property
    def n(self) -> int:
        return self.dim // 2

    def bracket(self, X, Y):
        """Bracket of (possibly complex) vectors in the real basis."""
        return np.einsum("ijk,i,j->k", self.c, X, Y)

    def jacobi_residual(self) -> float:
        c = self.c
        # sum over cyclic (i, j, k) of [[e_i, e_j], e_k]
        jac = np.einsum("ijm,mkl->ijkl", c, c)
        cyc = jac + np.transpose(jac, (1, 2, 0, 3)) + np.transpose(jac, (2, 0, 1, 3))
        return float(np.abs(cyc).max(initial=0.0))

    def nijenhuis_residual(self) -> float:
        """Max entry of ``N(e_i, e_j) = [Je_i, Je_j] - J[Je_i, e_j] - J[e_i, Je_j] - [e_i, e_j]``."""
        c, J = self.c, self.J
        br = lambda A, B: np.einsum("pqk,pi,qj->ijk", c, A, B)  # noqa: E731
        I = np.eye(self.dim)
        N = br(J, J) - br(J, I) @ J.T - br(I, J) @ J.T - br(I, I)
        return float(np.abs(N).max(initial=0.0))

    # -- complex frame -----------------------------------------------------

    def frame(self) -> np.ndarray:
        """Columns ``(Z_0..Z_{n-1}, Zbar_0..Zbar_{n-1})`` in real coordinates."""
        vs: list[np.ndarray] = []
        basis = np.zeros((self.dim, 0))
        for k in range(self.dim):
            e = np.eye(self.dim)[:, k]
            trial = np.column_stack([basis, e, self.J @ e])
            if np.linalg.matrix_rank(trial, tol=1e-9) == basis.shape[1] + 2:
                vs.append(e)
                basis = trial
        Z = np.column_stack([0.5 * (v - 1j * (self.J @ v)) for v in vs])
        return np.concatenate([Z, np.conj(Z)], axis=1)

    def complex_constants(self) -> np.ndarray:
        """``C[A, B, E]`` with ``[B_A, B_B] = sum_E C[A, B, E] B_E``."""
        P = self.frame()
        real = np.einsum("ijk,iA,jB->ABk", self.c, P, P)
        return np.linalg.solve(P, real.reshape(-1, self.dim).T).T.reshape(
            (self.dim,) * 3)


# ---------------------------------------------------------------------------
# catalog


def _catalog_dir() -> Path:
    return Path(str(resources.files("pcflab") / "data" / "algebras"))


def catalog_ids() -> list[str]:
    return sorted(p.stem for p in _catalog_dir().glob("*.toml"))


def parse_algebra(text: str, source: str = "<string>") -> LieAlgebraSpec:
    """Parse one catalog entry.

    Format (TOML)::

        format = "pcflab-algebra/1"
        name = "h8"
        dim = 6
        # [e_i, e_j] = coefficient * e_k with 1-based indices, i < j
        brackets = [[1, 2, 6, -2.0]]
        J = "standard"        # or an explicit dim x dim matrix (rows)

    ``J = "standard"`` means ``J e_{2a-1} = e_{2a}``.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise AlgebraError(f"{source}: {exc}") from exc
    unknown = set(data) - {"format", "name", "dim", "brackets", "J", "description"}
    if unknown:
        raise AlgebraError(f"{source}: unknown keys {sorted(unknown)}")
    if data.get("format") != CATALOG_FORMAT:
        raise AlgebraError(f"{source}: expected format = {CATALOG_FORMAT!r}")
    dim = int(data["dim"])
    c = np.zeros((dim, dim, dim))
    for entry in data.get("brackets", []):
        if len(entry) != 4:
            raise AlgebraError(f"{source}: bracket entries are [i, j, k, coefficient]")
        i, j, k = (int(v) - 1 for v in entry[:3])
        if not all(0 <= v < dim for v in (i, j, k)) or i == j:
            raise AlgebraError(f"{source}: bad bracket indices {entry[:3]}")
        c[i, j, k] += float(entry[3])
        c[j, i, k] -= float(entry[3])
    J = data.get("J", "standard")
    J = _standard_J(dim) if isinstance(J, str) and J == "standard" else np.array(J, float)
    return LieAlgebraSpec(str(data.get("name", source)), c, J)


def load_algebra(name_or_path) -> LieAlgebraSpec:
    path = Path(name_or_path)
    if not path.suffix:
        path = _catalog_dir() / f"{name_or_path}.toml"
    if not path.exists():
        raise AlgebraError(f"no catalog entry {name_or_path!r} (known: {catalog_ids()})")
    return parse_algebra(path.read_text(), str(path))


# ---------------------------------------------------------------------------
# invariant geometry


@dataclass
class InvariantGeometry:
    g: np.ndarray
    M: np.ndarray  # M[b] : matrix of nabla_{Z_b} on T^{1,0}
    Mbar: np.ndarray  # Mbar[b] : matrix of nabla_{Zbar_b}
    torsion: np.ndarray  # T[a, b, c] = g(T(Z_a, Z_b), Zbar_c)
    omega: np.ndarray  # Omega[i, j, k, l] = g(R(Z_i, Zbar_j) Z_k, Zbar_l)
    rho: np.ndarray
    S: np.ndarray
    Q: np.ndarray

    @property
    def torsion_norm_sq(self) -> float:
        H = np.linalg.inv(self.g)
        T = self.torsion
        # g^{dbar a} g^{ebar b} g^{cbar f} T_{a b cbar} conj(T_{d e fbar}), with H[d, a] = g^{dbar a}
        return float(np.real(np.einsum("abc,def,da,eb,cf->", T, np.conj(T), H, H, H)))

    def flow_rhs(self) -> np.ndarray:
        return hermitian_part(self.Q - self.S)


def invariant_geometry(spec: LieAlgebraSpec, g, C: np.ndarray | None = None) -> InvariantGeometry:
    """Chern connection, torsion and curvature traces of an invariant metric.

    ``g[a, b] = g(Z_a, Zbar_b)`` must be Hermitian positive definite.
    """
    g = np.asarray(g, dtype=complex)
    n = spec.n
    C = spec.complex_constants() if C is None else C
    H = np.linalg.inv(g)
    # nabla_{Zbar_b} Z_a = sum_c C[n+b, a, c] Z_c
    Mbar = np.transpose(C[n:, :n, :n], (0, 2, 1))
    # K[b, a, c] = -sum_d g[a, d] conj(C[n+b, c, d]);  M[b]^T = K[b] g^{-1}
    K = -np.einsum("ad,bcd->bac", g, np.conj(C[n:, :n, :n]))
    M = np.transpose(K @ H, (0, 2, 1))
    MM = np.concatenate([M, Mbar], axis=0)  # connection matrix along every B_A

    # torsion on (Z_a, Z_b): nabla_a Z_b - nabla_b Z_a - [Z_a, Z_b]
    # Tvec[a, b, e] = M[a][e, b] - M[b][e, a] - C[a, b, e]
    Tvec = (np.einsum("aeb->abe", M) - np.einsum("bea->abe", M) - C[:n, :n, :n])
    T = Tvec @ g

    # curvature on (Z_i, Zbar_j)
    comm = (M[:, None] @ Mbar[None, :]) - (Mbar[None, :] @ M[:, None])
    bracket_part = np.einsum("ijE,Eef->ijef", C[:n, n:, :], MM)
    R = comm - bracket_part  # R[i, j][e, k]
    Omega = np.einsum("ijek,el->ijkl", R, g)
    rho = np.einsum("ijkl,lk->ij", Omega, H)
    S = np.einsum("klij,lk->ij", Omega, H)
    Q = torsion_quadratic_Q(g, T, H)
    return InvariantGeometry(g, M, Mbar, T, Omega, rho, S, Q)


# ---------------------------------------------------------------------------
# ODE flow


@dataclass
class HomogeneousFlowConfig:
    dt: float = 1e-3
    t_max: float = 1.0
    cadence: int = 1
    min_eigenvalue: float = 1e-12
    max_eigenvalue: float = 1e12


@dataclass
class HomogeneousTrajectory:
    times: np.ndarray
    metrics: np.ndarray
    torsion_norm_sq: np.ndarray
    logdet: np.ndarray
    eigen_spread: np.ndarray
    rhs_norm: np.ndarray
    rho0_trace: np.ndarray  # tr_g rho(g0) at each sample
    degeneration: dict | None = None

    def to_rows(self):
        cols = ("t", "torsion_norm_sq", "logdet", "eigen_spread", "rhs_norm")
        arrays = (self.times, self.torsion_norm_sq, self.logdet, self.eigen_spread,
                  self.rhs_norm)
        return cols, [tuple(float(a[k]) for a in arrays) for k in range(len(self.times))]


def ode_flow(spec: LieAlgebraSpec, g0, config: HomogeneousFlowConfig | None = None
             ) -> HomogeneousTrajectory:
    """Classical RK4 for ``dg/dt = -S + Q`` on invariant metrics."""
    cfg = config or HomogeneousFlowConfig()
    C = spec.complex_constants()
    g = hermitian_part(np.asarray(g0, dtype=complex))
    rho0 = invariant_geometry(spec, g, C).rho
    f = lambda m: invariant_geometry(spec, m, C).flow_rhs()  # noqa: E731
    nsteps = int(round(cfg.t_max / cfg.dt))
    rec = {k: [] for k in ("t", "g", "T2", "ld", "spread", "rhs", "tr")}
    event = None

    def sample(t, m):
        geo = invariant_geometry(spec, m, C)
        lam = np.linalg.eigvalsh(m)
        rec["t"].append(t)
        rec["g"].append(m.copy())
        rec["T2"].append(geo.torsion_norm_sq)
        rec["ld"].append(float(np.sum(np.log(lam))))
        rec["spread"].append(float(lam[-1] / lam[0]))
        rec["rhs"].append(float(np.abs(geo.flow_rhs()).max()))
        rec["tr"].append(float(np.real(np.trace(np.linalg.inv(m) @ rho0))))

    sample(0.0, g)
    dt = cfg.dt
    for k in range(1, nsteps + 1):
        k1 = f(g)
        k2 = f(g + 0.5 * dt * k1)
        k3 = f(g + 0.5 * dt * k2)
        k4 = f(g + dt * k3)
        g = hermitian_part(g + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
        lam = np.linalg.eigvalsh(g)
        if (not np.all(np.isfinite(lam)) or lam[0] < cfg.min_eigenvalue
                or lam[-1] > cfg.max_eigenvalue):
            event = {"t": k * dt, "min_eigenvalue": float(lam[0]),
                     "max_eigenvalue": float(lam[-1])}
            break
        if k % cfg.cadence == 0 or k == nsteps:
            sample(k * dt, g)
    return HomogeneousTrajectory(
        np.array(rec["t"]), np.array(rec["g"]), np.array(rec["T2"]), np.array(rec["ld"]),
        np.array(rec["spread"]), np.array(rec["rhs"]), np.array(rec["tr"]), event)


def logdet_identity_residual(traj: HomogeneousTrajectory) -> float:
    """Max of ``|d/dt log det g - (|T|^2 - tr_g rho(g0))|`` at interior samples.

    The time derivative is a centred difference of the sampled ``log det g``.
    """
    t, ld = traj.times, traj.logdet
    if len(t) < 3:
        return 0.0
    lhs = (ld[2:] - ld[:-2]) / (t[2:] - t[:-2])
    rhs = traj.torsion_norm_sq[1:-1] - traj.rho0_trace[1:-1]
    return float(np.abs(lhs - rhs).max())


# ---------------------------------------------------------------------------
# SKT residual


def ce_differential(C: np.ndarray, form: np.ndarray) -> np.ndarray:
    """Chevalley-Eilenberg differential of an invariant k-form.

    ``form`` is a fully antisymmetric array over the complex basis; the
    result uses ``d a(X_0..X_k) = sum_{i<j} (-1)^{i+j} a([X_i, X_j], ...)``.
    """
    k = form.ndim
    if k == 0:
        return np.zeros(C.shape[0], dtype=complex)
    base = np.tensordot(C, form, axes=([2], [0]))
    out = np.zeros((C.shape[0],) * (k + 1), dtype=complex)
    for i, j in itertools.combinations(range(k + 1), 2):
        out += (-1) ** (i + j) * np.moveaxis(base, [0, 1], [i, j])
    return out


def _bidegree_mask(n: int, p: int, q: int) -> np.ndarray:
    barred = np.arange(2 * n) >= n
    grids = np.meshgrid(*([barred] * (p + q)), indexing="ij")
    return sum(g.astype(int) for g in grids) == q


def kahler_form(g: np.ndarray) -> np.ndarray:
    """``omega = i g_{a bbar} theta^a ^ thetabar^b`` as an antisymmetric array."""
    n = g.shape[0]
    w = np.zeros((2 * n, 2 * n), dtype=complex)
    w[:n, n:] = 1j * g
    w[n:, :n] = -1j * g.T
    return w


def ddbar_omega(spec: LieAlgebraSpec, g, C: np.ndarray | None = None) -> np.ndarray:
    """Components of ``i d dbar omega`` (a (2,2)-form) in the complex frame."""
    n = spec.n
    C = spec.complex_constants() if C is None else C
    dbar_w = ce_differential(C, kahler_form(np.asarray(g, complex))) * _bidegree_mask(n, 1, 2)
    return 1j * ce_differential(C, dbar_w) * _bidegree_mask(n, 2, 2)


def skt_operator(spec: LieAlgebraSpec) -> np.ndarray:
    """Matrix of the linear map ``vec(g) -> i d dbar omega_g``."""
    n = spec.n
    C = spec.complex_constants()
    cols = []
    for a, b in itertools.product(range(n), repeat=2):
        E = np.zeros((n, n), dtype=complex)
        E[a, b] = 1.0
        cols.append(ddbar_omega(spec, E, C).ravel())
    return np.column_stack(cols)


def skt_residual(spec: LieAlgebraSpec, g, op: np.ndarray | None = None) -> float:
    """``r(g) = sum |i d dbar omega_g|^2`` over all frame components."""
    op = skt_operator(spec) if op is None else op
    v = op @ np.asarray(g, complex).ravel()
    return float(np.real(np.vdot(v, v)))


def _cholesky_metric(theta: np.ndarray, n: int) -> np.ndarray:
    L = np.diag(np.exp(theta[:n])).astype(complex)
    off = theta[n:].reshape(2, -1)
    L[np.tril_indices(n, -1)] = off[0] + 1j * off[1]
    return L @ L.conj().T


@dataclass
class SKTScanConfig:
    """Multi-start settings.

    The search set is compact: Cholesky log-diagonals lie in
    ``[-log_diag_bound, log_diag_bound]`` and off-diagonal parts in
    ``[-offdiag_bound, offdiag_bound]``.  Without such a box the scale-free
    ratio can creep to zero along degenerating metrics, which says nothing
    about pluriclosed metrics.
    """

    n_starts: int = 100
    tol: float = 1e-10
    max_iter: int = 500
    seed: int = 0
    spread: float = 1.0
    log_diag_bound: float = 3.0
    offdiag_bound: float = 5.0


@dataclass
class SKTScanResult:
    min_residual: float
    witness: np.ndarray
    residuals: np.ndarray
    failures: int
    on_boundary: bool
    label: str = ("invariant-metric scan over a bounded metric set: numerical "
                  "evidence only, not a proof of (non)existence")

    def to_dict(self):
        lam = np.linalg.eigvalsh(self.witness)
        return {
            "min_residual": self.min_residual,
            "max_residual": float(self.residuals.max()),
            "n_starts": int(len(self.residuals)),
            "optimizer_failures": self.failures,
            "witness_on_boundary": self.on_boundary,
            "witness_condition_number": float(lam[-1] / lam[0]),
            "witness_real": np.real(self.witness).tolist(),
            "witness_imag": np.imag(self.witness).tolist(),
            "label": self.label,
        }


def skt_residual_scan(spec: LieAlgebraSpec, config: SKTScanConfig | None = None
                      ) -> SKTScanResult:
    """Multi-start minimisation of ``r(g) / det(g)^{2/n}`` over a bounded set.

    Starts are random Cholesky factors and each local descent is a projected
    quasi-Newton method (L-BFGS-B) on the box of Cholesky parameters.  Since
    ``r`` is quadratic in ``g`` the ratio is scale invariant; the reported
    witness is normalised to ``det g = 1``.
    """
    cfg = config or SKTScanConfig()
    n = spec.n
    op = skt_operator(spec)
    rng = np.random.default_rng(cfg.seed)
    bounds = ([(-cfg.log_diag_bound, cfg.log_diag_bound)] * n
              + [(-cfg.offdiag_bound, cfg.offdiag_bound)] * (n * n - n))
    lo, hi = np.array(bounds).T

    def objective(theta):
        g = _cholesky_metric(theta, n)
        return skt_residual(spec, g, op) * np.exp(-4.0 * theta[:n].sum() / n)

    best, witness, values, failures = np.inf, None, [], 0
    for _ in range(cfg.n_starts):
        theta0 = np.clip(rng.normal(scale=cfg.spread, size=n * n), lo, hi)
        res = minimize(objective, theta0, method="L-BFGS-B", bounds=bounds,
                       options={"gtol": cfg.tol, "ftol": 1e-15, "maxiter": cfg.max_iter})
        failures += int(not res.success)
        values.append(float(res.fun))
        if res.fun < best:
            best, witness = float(res.fun), res.x
    on_boundary = bool(np.any(np.isclose(witness, lo) | np.isclose(witness, hi)))
    g = _cholesky_metric(witness, n)
    g = g / np.real(np.linalg.det(g)) ** (1.0 / n)
    return SKTScanResult(best, g, np.array(values), failures, on_boundary)
