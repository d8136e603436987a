"""Hermitian geometry kernels on sampled metric fields.

Conventions (all arrays carry grid axes first, tensor indices last):

* ``G[..., i, j] = g_{i jbar}``; ``H = G^{-1}`` so ``H[b, a] = g^{bbar a}``.
* ``Gamma[..., l, i, j] = Gamma^l_{ij} = g^{kbar l} d_i g_{j kbar}``.
* ``T[..., i, j, k] = T_{i j kbar} = d_i g_{j kbar} - d_j g_{i kbar}``.
* ``Omega[..., i, j, k, l] = Omega_{i jbar k lbar}
  = -d_i d_jbar g_{k lbar} + g^{qbar p} d_i g_{k qbar} d_jbar g_{p lbar}``,
  which is ``-g_{m lbar} d_jbar Gamma^m_{ik}`` with the product rule expanded.
* ``rho_{i jbar} = g^{lbar k} Omega_{i jbar k lbar}`` and
  ``S_{i jbar} = g^{lbar k} Omega_{k lbar i jbar}``.

With these choices ``rho = -d dbar log det g``.

Tensor slots are described by a ``kinds`` string, one letter per slot:
``d`` lower unbarred, ``D`` lower barred, ``u`` upper unbarred, ``U`` upper
barred.
"""

from __future__ import annotations

import string
from dataclasses import dataclass

import numpy as np

from .torus import SpectralOps

MIN_EIGENVALUE = 1e-12


class DegenerateMetricError(ArithmeticError):
    """The metric lost positive definiteness somewhere on the grid."""

    def __init__(self, min_eigenvalue: float, location: tuple):
        super().__init__(
            f"degenerate metric: min eigenvalue {min_eigenvalue:.3e} at grid point {location}"
        )
        self.min_eigenvalue = min_eigenvalue
        self.location = location


@dataclass
class ComplexTensorField:
    """Sampled tensor with an explicit slot signature (see module docstring)."""

    values: np.ndarray
    kinds: str

    def __post_init__(self):
        k = len(self.kinds)
        if k and len(set(self.values.shape[-k:])) != 1:
            raise ValueError(f"index extents differ: {self.values.shape[-k:]}")
        if set(self.kinds) - set("dDuU"):
            raise ValueError(f"unknown index kinds in {self.kinds!r}")

    @property
    def signature(self) -> tuple[int, int, int, int]:
        """``(p_up, p_down, q_up, q_down)`` counts of unbarred/barred upper/lower slots."""
        c = self.kinds.count
        return c("u"), c("d"), c("U"), c("D")

    def conj(self) -> "ComplexTensorField":
        swap = {"d": "D", "D": "d", "u": "U", "U": "u"}
        return ComplexTensorField(np.conj(self.values), "".join(swap[k] for k in self.kinds))


def _lead(X: np.ndarray, k: int) -> np.ndarray:
    """Contiguous copy with the trailing ``k`` tensor axes moved to the front."""
    return np.ascontiguousarray(np.moveaxis(X, tuple(range(-k, 0)), tuple(range(k))))


def _trail(X: np.ndarray, k: int) -> np.ndarray:
    return np.moveaxis(X, tuple(range(k)), tuple(range(-k, 0)))


def hermitian_part(A: np.ndarray) -> np.ndarray:
    return 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))


def batched_inv(G: np.ndarray) -> np.ndarray:
    """Inverse of a stack of matrices; closed form for 2x2 blocks."""
    if G.shape[-1] != 2:
        return np.linalg.inv(G)
    det = batched_det(G)
    H = np.empty_like(G)
    H[..., 0, 0] = G[..., 1, 1]
    H[..., 1, 1] = G[..., 0, 0]
    H[..., 0, 1] = -G[..., 0, 1]
    H[..., 1, 0] = -G[..., 1, 0]
    return H / det[..., None, None]


def batched_det(G: np.ndarray) -> np.ndarray:
    if G.shape[-1] != 2:
        return np.linalg.det(G)
    return G[..., 0, 0] * G[..., 1, 1] - G[..., 0, 1] * G[..., 1, 0]


def smallest_eigenvalues(G: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of each Hermitian block (closed form for 2x2)."""
    if G.shape[-1] != 2:
        return np.linalg.eigvalsh(G)[..., 0]
    a, d = G[..., 0, 0].real, G[..., 1, 1].real
    return 0.5 * (a + d) - np.sqrt(0.25 * (a - d) ** 2 + np.abs(G[..., 0, 1]) ** 2)


def min_eigenvalue(G: np.ndarray) -> tuple[float, tuple]:
    lam = smallest_eigenvalues(G)
    idx = np.unravel_index(int(np.argmin(lam)), lam.shape) if lam.ndim else ()
    return float(lam[idx] if lam.ndim else lam), tuple(int(i) for i in idx)


def check_positive(G: np.ndarray, threshold: float = MIN_EIGENVALUE) -> float:
    """Raise :class:`DegenerateMetricError` if any matrix has eigenvalue below ``threshold``."""
    if not np.all(np.isfinite(G)):
        bad = np.argwhere(~np.isfinite(G))[0]
        raise DegenerateMetricError(float("nan"), tuple(int(i) for i in bad[:-2]))
    lam, where = min_eigenvalue(G)
    if lam < threshold:
        raise DegenerateMetricError(lam, where)
    return lam


class MetricGeometry:
    """Derived quantities of one sampled metric, computed lazily and cached.

    ``ops`` supplies spectral derivatives; pass ``None`` for constant
    (invariant) data, in which case every coordinate derivative vanishes.
    """

    def __init__(self, G: np.ndarray, ops: SpectralOps | None, check: bool = True):
        self.G = np.asarray(G, dtype=complex)
        self.ops = ops
        self.n = self.G.shape[-1]
        if check:
            check_positive(self.G)
        self._cache = {}

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def H(self):
        return self._get("H", lambda: batched_inv(self.G))

    @property
    def detG(self):
        return self._get("det", lambda: batched_det(self.G).real)

    @property
    def logdet(self):
        return self._get("logdet", lambda: np.log(self.detG))

    def _zeros(self, extra):
        return np.zeros(self.G.shape[:-2] + (self.n,) * extra, dtype=complex)

    @property
    def Ghat(self):
        return self._get("Ghat", lambda: self.ops.fft(self.G) if self.ops else None)

    @property
    def dG(self):
        """``dG[..., i, j, k] = d_i g_{j kbar}``."""
        if self.ops is None:
            return self._zeros(3)
        return self._get("dG", lambda: self.ops.grad(self.G, self.Ghat))

    @property
    def dbarG(self):
        """``dbarG[..., i, j, k] = d_ibar g_{j kbar}``."""
        if self.ops is None:
            return self._zeros(3)
        return self._get("dbarG", lambda: self.ops.gradbar(self.G, self.Ghat))

    @property
    def ddbarG(self):
        """``ddbarG[..., i, j, k, l] = d_i d_jbar g_{k lbar}``."""
        if self.ops is None:
            return self._zeros(4)
        return self._get("ddbarG", lambda: self.ops.ddbar(self.G, self.Ghat))

    @property
    def gamma(self):
        def build():
            # (dG @ H)[i, j, l] = sum_k d_i g_{j kbar} H[k, l]
            g = self.dG @ self.H[..., None, :, :]
            return np.moveaxis(g, -1, -3)
        return self._get("gamma", build)

    @property
    def torsion(self):
        return self._get("T", lambda: self.dG - np.swapaxes(self.dG, -3, -2))

    @property
    def omega(self):
        def build():
            # quadratic part sum_{p,q} d_i g_{k qbar} H[q, p] d_jbar g_{p lbar}, evaluated
            # with tensor indices leading so every product runs over the whole grid
            n = self.n
            dG, dbG, H = _lead(self.dG, 3), _lead(self.dbarG, 3), _lead(self.H, 2)
            A = np.zeros_like(dG)
            for q in range(n):
                A += dG[:, :, q, None] * H[None, None, q]
            quad = np.zeros((n,) * 4 + dG.shape[3:], dtype=complex)
            for p in range(n):
                quad += A[:, None, :, p, None] * dbG[None, :, None, p]
            return _trail(quad, 4) - self.ddbarG
        return self._get("Omega", build)

    def _trace_pair(self):
        # vec(H^T): entry (k, l) holds H[l, k] = g^{lbar k}
        n = self.n
        return np.swapaxes(self.H, -1, -2).reshape(self.H.shape[:-2] + (n * n,))

    @property
    def rho(self):
        def build():
            n = self.n
            om = self.omega.reshape(self.omega.shape[:-4] + (n * n, n * n))
            return (om @ self._trace_pair()[..., :, None]).reshape(om.shape[:-2] + (n, n))
        return self._get("rho", build)

    @property
    def S(self):
        def build():
            n = self.n
            om = self.omega.reshape(self.omega.shape[:-4] + (n * n, n * n))
            return (self._trace_pair()[..., None, :] @ om).reshape(om.shape[:-2] + (n, n))
        return self._get("S", build)

    @property
    def Q(self):
        return self._get("Q", lambda: torsion_quadratic_Q(self.G, self.torsion, self.H))

    @property
    def torsion_norm_sq(self):
        return self._get("T2", lambda: norm_sq(self.torsion, "ddD", self.G, self.H))

    def flow_rhs(self):
        """Tensor form of the pluriclosed flow velocity, ``-S + Q``."""
        return self._get("rhs", lambda: hermitian_part(self.Q - self.S))


# ---------------------------------------------------------------------------
# operation-level wrappers


@dataclass
class ConnectionCache:
    gamma: np.ndarray
    torsion: np.ndarray
    omega: np.ndarray | None = None


def chern_connection(G, ops) -> ConnectionCache:
    geo = MetricGeometry(G, ops)
    return ConnectionCache(geo.gamma, geo.torsion)


def torsion(G, ops) -> np.ndarray:
    return MetricGeometry(G, ops).torsion


def ricci_rho(G, ops) -> np.ndarray:
    return MetricGeometry(G, ops).rho


def ricci_S(G, ops) -> np.ndarray:
    return MetricGeometry(G, ops).S


def torsion_quadratic_Q(G, T, H=None) -> np.ndarray:
    """``Q_{i jbar} = g^{lbar k} g^{nbar m} T_{i k nbar} conj(T_{j l mbar})``."""
    H = batched_inv(G) if H is None else H
    n = T.shape[-1]
    Ts, Hs = _lead(T, 3), _lead(H, 2)
    Tc = np.conj(Ts)
    # C[j, l, p] = sum_m conj(T[j, l, m]) H[p, m];  B[j, k, p] = sum_l H[l, k] C[j, l, p]
    C = np.zeros_like(Ts)
    for m in range(n):
        C += Tc[:, :, m, None] * Hs[None, None, :, m]
    B = np.zeros_like(Ts)
    for l in range(n):
        B += Hs[None, l, :, None] * C[:, l, None, :]
    Q = np.zeros((n, n) + Ts.shape[3:], dtype=complex)
    for k in range(n):
        for p in range(n):
            Q += Ts[:, None, k, p] * B[None, :, k, p]
    return _trail(Q, 2)


def metric_compatibility_residual(geo: MetricGeometry) -> float:
    """``max |d_i g_{j kbar} - Gamma^l_{ij} g_{l kbar}|``."""
    res = geo.dG - np.einsum("...lij,...lk->...ijk", geo.gamma, geo.G)
    return float(np.abs(res).max())


# ---------------------------------------------------------------------------
# index gymnastics

_PAIR = {
    # pairing matrix for X[a] * conj(Y[b]) per slot kind
    "d": lambda G, H: np.swapaxes(H, -1, -2),  # H[b, a]
    "D": lambda G, H: H,  # H[a, b]
    "u": lambda G, H: G,  # G[a, b]
    "U": lambda G, H: np.swapaxes(G, -1, -2),  # G[b, a]
}


def inner(X, Y, kinds: str, G, H=None) -> np.ndarray:
    """Pointwise Hermitian inner product ``<X, Y>_g`` (linear in X)."""
    H = np.linalg.inv(G) if H is None else H
    p = len(kinds)
    letters = string.ascii_letters
    a = letters[:p]
    b = letters[p : 2 * p]
    terms = [f"...{a}", f"...{b}"]
    ops = [X, np.conj(Y)]
    for r, kind in enumerate(kinds):
        terms.append(f"...{a[r]}{b[r]}")
        ops.append(_PAIR[kind](G, H))
    return np.einsum(",".join(terms) + "->...", *ops, optimize=True)


def norm_sq(X, kinds: str, G, H=None) -> np.ndarray:
    return inner(X, X, kinds, G, H).real


def tensor_norm_sq(A: ComplexTensorField, G, H=None) -> np.ndarray:
    return norm_sq(A.values, A.kinds, G, H)


def ip_Q_trace(Q, A: ComplexTensorField, G, H=None) -> np.ndarray:
    """``<Q, tr_g (A (x) Abar)>``: ``Q`` paired with ``A`` in one slot, averaged over slots.

    For pure ``u`` tensors this is ``Q_{i jbar} g_{..} A^{i..} conj(A^{j..})``; for
    pure ``d`` tensors ``Q`` is contracted with the raised indices of ``A``.
    Multiplying by ``p`` gives the sum over slots appearing in the evolution
    identities.
    """
    kinds = A.kinds
    if set(kinds) - {"u", "d"} or len(set(kinds)) != 1:
        raise ValueError(f"ip_Q_trace needs a pure (p,0) or (0,p) tensor, got {kinds!r}")
    if Q.shape[-2:] != (A.values.shape[-1],) * 2:
        raise ValueError("signature mismatch between Q and A")
    H = np.linalg.inv(G) if H is None else H
    p = len(kinds)
    X = A.values
    if kinds[0] == "u":
        slot_matrix = Q  # replaces G[a, b] in one slot
    else:
        # Q with both indices raised: H[b, i] Q[i, j] H[j, a] pairs X[a] conj(X[b])
        slot_matrix = np.swapaxes(np.einsum("...bi,...ij,...ja->...ba", H, Q, H), -1, -2)
    letters = string.ascii_letters
    a, b = letters[:p], letters[p : 2 * p]
    pair = _PAIR[kinds[0]](G, H)
    total = 0.0
    for r in range(p):
        terms = [f"...{a}", f"...{b}"]
        ops = [X, np.conj(X)]
        for s in range(p):
            terms.append(f"...{a[s]}{b[s]}")
            ops.append(slot_matrix if s == r else pair)
        total = total + np.einsum(",".join(terms) + "->...", *ops, optimize=True)
    return (total / p).real


def _apply_slot(M, X, r, p):
    """``Y[..., l, a_0..a_{p-1}] = sum_b M[..., l, a_r, b] X[..., .., b at r, ..]``."""
    letters = string.ascii_letters
    idx = letters[:p]
    l, b = letters[p], letters[p + 1]
    xin = idx[:r] + b + idx[r + 1 :]
    return np.einsum(f"...{l}{idx[r]}{b},...{xin}->...{l}{idx}", M, X)


def _slot_matrices(gamma, kind, bar_direction):
    # M[..., l, a, b] so that nabla_l X gains sum_b M[l, a, b] X[b] in that slot
    if not bar_direction:
        if kind == "u":
            return np.swapaxes(gamma, -3, -2)  # Gamma^a_{l b}
        if kind == "d":
            return -np.transpose(gamma, tuple(range(gamma.ndim - 3)) + (gamma.ndim - 2, gamma.ndim - 1, gamma.ndim - 3))
        return None
    if kind == "U":
        return np.conj(np.swapaxes(gamma, -3, -2))
    if kind == "D":
        return -np.conj(np.transpose(gamma, tuple(range(gamma.ndim - 3)) + (gamma.ndim - 2, gamma.ndim - 1, gamma.ndim - 3)))
    return None


def covariant_d(X, kinds: str, geo: MetricGeometry):
    """Chern ``nabla_l X`` (new lower unbarred slot first). Returns ``(values, 'd'+kinds)``."""
    p = len(kinds)
    out = geo.ops.grad(X) if geo.ops is not None else np.zeros(X.shape[: X.ndim - p] + (geo.n,) + X.shape[X.ndim - p :], dtype=complex)
    for r, kind in enumerate(kinds):
        M = _slot_matrices(geo.gamma, kind, bar_direction=False)
        if M is not None:
            out = out + _apply_slot(M, X, r, p)
    return out, "d" + kinds


def covariant_dbar(X, kinds: str, geo: MetricGeometry):
    """Chern ``nabla_kbar X`` (new lower barred slot first)."""
    p = len(kinds)
    out = geo.ops.gradbar(X) if geo.ops is not None else np.zeros(X.shape[: X.ndim - p] + (geo.n,) + X.shape[X.ndim - p :], dtype=complex)
    for r, kind in enumerate(kinds):
        M = _slot_matrices(geo.gamma, kind, bar_direction=True)
        if M is not None:
            out = out + _apply_slot(M, X, r, p)
    return out, "D" + kinds


def chern_laplacian(X, kinds: str, geo: MetricGeometry):
    """``g^{kbar l} nabla_l nabla_kbar X``.

    Scalars use the direct formula ``g^{jbar i} d_i d_jbar f``.
    """
    if kinds == "":
        if geo.ops is None:
            return np.zeros(X.shape, dtype=complex)
        return np.einsum("...ji,...ij->...", geo.H, geo.ops.ddbar(X))
    if set(kinds) - set("dDuU"):
        raise ValueError(f"unsupported signature {kinds!r}")
    Y, k1 = covariant_dbar(X, kinds, geo)
    Z, _ = covariant_d(Y, k1, geo)
    p = len(kinds)
    letters = string.ascii_letters[: p]
    return np.einsum(f"...kl,...lk{letters}->...{letters}", geo.H, Z)


def scalar_gradient_norm_sq(f, geo: MetricGeometry):
    """``|d f|^2_g`` for a real scalar field."""
    df = geo.ops.grad(f.astype(complex))
    return norm_sq(df, "d", geo.G, geo.H)


def pluriclosed_residual(G, ops) -> float:
    """``max |i d dbar omega|`` over all components, with ``omega = i g_{i jbar} dz^i ^ dzbar^j``."""
    if ops is None:
        return 0.0
    psi = 1j * np.asarray(G, dtype=complex)
    D = ops.ddbar(psi)  # [..., a, b, i, j] = d_a d_bbar psi_{i jbar}
    R = (D - np.swapaxes(D, -4, -2)  # swap a <-> i
         - np.swapaxes(D, -3, -1)  # swap b <-> j
         + np.swapaxes(np.swapaxes(D, -4, -2), -3, -1))
    return float(np.abs(R).max())
