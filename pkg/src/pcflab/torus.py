"""Periodic discretization of flat complex tori C^n / Z^{2n}.

Grid axes are ordered ``(x^1, ..., x^n, y^1, ..., y^n)`` with ``z^j = x^j + i y^j``
and unit periods. Every field is stored with the grid axes first and tensor
indices last, so a metric lives in an array of shape ``(N,)*2n + (n, n)``.

Complex derivatives follow the usual normalization
``d/dz = (d/dx - i d/dy) / 2`` and ``d/dzbar = (d/dx + i d/dy) / 2``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft as sfft

DEFAULT_MAX_POINTS = 4_000_000


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid with ``N`` points per real direction on the unit torus."""

    n: int
    N: int
    max_points: int = DEFAULT_MAX_POINTS

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"complex dimension must be >= 1, got {self.n}")
        if self.N < 8 or self.N % 2:
            raise ValueError(f"N must be even and >= 8, got {self.N}")
        if self.N ** (2 * self.n) > self.max_points:
            raise ValueError(
                f"grid of {self.N}^{2 * self.n} points exceeds the memory budget "
                f"of {self.max_points} points"
            )

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * (2 * self.n)

    @property
    def ndim(self) -> int:
        return 2 * self.n

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def size(self) -> int:
        return self.N ** (2 * self.n)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(x, y)``, each of shape ``(n,) + shape``."""
        axis = np.arange(self.N) / self.N
        mesh = np.meshgrid(*([axis] * self.ndim), indexing="ij")
        return np.stack(mesh[: self.n]), np.stack(mesh[self.n :])

    def plane_wave(self, kx, ky=None) -> np.ndarray:
        """``exp(2 pi i (kx.x + ky.y))`` sampled on the grid."""
        kx = np.asarray(kx, dtype=float)
        ky = np.zeros(self.n) if ky is None else np.asarray(ky, dtype=float)
        x, y = self.coordinates()
        phase = np.tensordot(kx, x, axes=1) + np.tensordot(ky, y, axes=1)
        return np.exp(2j * np.pi * phase)


class SpectralOps:
    """Fourier differentiation and filtering on a :class:`GridSpec`.

    Odd derivatives drop the Nyquist mode; the same multipliers are reused
    for mixed second derivatives so that ``d_i d_jbar`` is exactly the
    composition of the two first-order operators.
    """

    def __init__(self, grid: GridSpec):
        self.grid = grid
        n, N = grid.n, grid.N
        k = sfft.fftfreq(N, d=1.0 / N)
        wave = 2 * np.pi * k
        wave_odd = wave.copy()
        wave_odd[N // 2] = 0.0
        shape1 = [1] * grid.ndim

        def along(axis, values):
            s = list(shape1)
            s[axis] = N
            return values.reshape(s)

        # symbols of d/dz^j and d/dzbar^j
        self._dz = []
        self._dzb = []
        for j in range(n):
            ikx = 1j * along(j, wave_odd)
            iky = 1j * along(n + j, wave_odd)
            self._dz.append(0.5 * (ikx - 1j * iky))
            self._dzb.append(0.5 * (ikx + 1j * iky))
        keep = np.abs(k) <= N // 3
        mask = np.ones(grid.shape, dtype=bool)
        for axis in range(grid.ndim):
            mask = mask & along(axis, keep)
        self._dealias_mask = mask
        self._axes = tuple(range(grid.ndim))

    # -- transforms -------------------------------------------------------
    def _check(self, f: np.ndarray):
        if f.shape[: self.grid.ndim] != self.grid.shape:
            raise ValueError(
                f"field shape {f.shape} does not match grid {self.grid.shape}"
            )

    def _expand(self, sym: np.ndarray, f: np.ndarray) -> np.ndarray:
        return sym.reshape(sym.shape + (1,) * (f.ndim - self.grid.ndim))

    def fft(self, f):
        self._check(f)
        return sfft.fftn(f, axes=self._axes)

    def ifft(self, F):
        return sfft.ifftn(F, axes=self._axes)

    # -- derivatives ------------------------------------------------------
    def dz(self, f, j):
        """``d f / dz^j``."""
        F = self.fft(f)
        return self.ifft(F * self._expand(self._dz[j], F))

    def dzbar(self, f, j):
        """``d f / dzbar^j``."""
        F = self.fft(f)
        return self.ifft(F * self._expand(self._dzb[j], F))

    def derivative(self, f, direction: str, index: int):
        if direction in ("holomorphic", "z"):
            return self.dz(f, index)
        if direction in ("antiholomorphic", "zbar"):
            return self.dzbar(f, index)
        raise ValueError(f"unknown derivative direction {direction!r}")

    def grad(self, f, F=None):
        """All ``d_i f`` stacked on a new axis placed right after the grid axes."""
        F = self.fft(f) if F is None else F
        out = [self.ifft(F * self._expand(s, F)) for s in self._dz]
        return np.stack(out, axis=self.grid.ndim)

    def gradbar(self, f, F=None):
        """All ``d_jbar f`` stacked on a new axis right after the grid axes."""
        F = self.fft(f) if F is None else F
        out = [self.ifft(F * self._expand(s, F)) for s in self._dzb]
        return np.stack(out, axis=self.grid.ndim)

    def ddbar(self, f, F=None):
        """``d_i d_jbar f`` with the two new axes ``(i, j)`` after the grid axes."""
        F = self.fft(f) if F is None else F
        n = self.grid.n
        rows = []
        for i in range(n):
            rows.append(
                np.stack(
                    [self.ifft(F * self._expand(self._dz[i] * self._dzb[j], F))
                     for j in range(n)],
                    axis=self.grid.ndim,
                )
            )
        return np.stack(rows, axis=self.grid.ndim)

    def laplacian_flat(self, f):
        """``sum_i d_i d_ibar f``, a quarter of the Euclidean Laplacian."""
        F = self.fft(f)
        sym = sum(a * b for a, b in zip(self._dz, self._dzb))
        return self.ifft(F * self._expand(sym, F))

    def dealias(self, f):
        """2/3-rule truncation in every real direction."""
        F = self.fft(f)
        F = F * self._expand(self._dealias_mask, F)
        out = self.ifft(F)
        return out if np.iscomplexobj(f) else out.real


# ---------------------------------------------------------------------------
# initial data and sections


@dataclass
class PotentialForm:
    """A (1,0)-form ``alpha = alpha_i dz^i`` sampled on the grid.

    ``values`` has shape ``grid.shape + (n,)``.
    """

    grid: GridSpec
    values: np.ndarray
    modes: list = field(default_factory=list)

    @classmethod
    def zero(cls, grid: GridSpec) -> "PotentialForm":
        return cls(grid, np.zeros(grid.shape + (grid.n,), dtype=complex))

    @classmethod
    def from_modes(cls, grid: GridSpec, modes) -> "PotentialForm":
        """Build ``alpha`` from ``(component, amplitude, kx, ky)`` plane waves.

        Each mode contributes ``amplitude * exp(2 pi i (kx.x + ky.y)) dz^component``
        (component is zero-based).
        """
        values = np.zeros(grid.shape + (grid.n,), dtype=complex)
        clean = []
        for comp, amp, kx, ky in modes:
            values[..., int(comp)] += complex(amp) * grid.plane_wave(kx, ky)
            clean.append((int(comp), complex(amp), list(kx), list(ky)))
        return cls(grid, values, clean)

    @classmethod
    def random(cls, grid: GridSpec, rng: np.random.Generator, amplitude: float,
               kmax: int = 1) -> "PotentialForm":
        """Random low-mode potential whose metric perturbation has sup norm ``amplitude``."""
        ops = SpectralOps(grid)
        modes = []
        ks = range(-kmax, kmax + 1)
        for comp in range(grid.n):
            for kvec in np.array(np.meshgrid(*([ks] * grid.ndim))).reshape(grid.ndim, -1).T:
                if not kvec.any():
                    continue
                amp = complex(rng.normal(), rng.normal())
                modes.append((comp, amp, kvec[: grid.n], kvec[grid.n :]))
        pot = cls.from_modes(grid, modes)
        size = np.abs(potential_perturbation(pot, ops)).max()
        scale = amplitude / size
        return cls.from_modes(grid, [(c, a * scale, kx, ky) for c, a, kx, ky in modes])


def potential_perturbation(alpha: PotentialForm, ops: SpectralOps) -> np.ndarray:
    """Metric components of ``dbar alpha + d alphabar``.

    With ``omega = i g_{i jbar} dz^i ^ dzbar^j`` the perturbation of ``g`` is
    ``i d_jbar alpha_i - i d_i conj(alpha_j)``.
    """
    a = alpha.values
    dbar_a = ops.gradbar(a)  # [..., j, i] = d_jbar alpha_i
    d_abar = ops.grad(np.conj(a))  # [..., i, j] = d_i conj(alpha_j)
    return 1j * np.swapaxes(dbar_a, -1, -2) - 1j * d_abar


def partial_of_form(alpha_values: np.ndarray, ops: SpectralOps) -> np.ndarray:
    """Tensor components of ``d alpha`` for a (1,0)-form: ``d_i a_j - d_j a_i``."""
    da = ops.grad(alpha_values)
    return da - np.swapaxes(da, -1, -2)


class PositivityError(ValueError):
    """Initial data failed the positive-definiteness requirement."""

    def __init__(self, min_eigenvalue: float):
        super().__init__(f"metric is not positive definite (min eigenvalue {min_eigenvalue:.3e})")
        self.min_eigenvalue = min_eigenvalue


def make_pluriclosed_initial(grid: GridSpec, alpha0: PotentialForm,
                             ops: SpectralOps | None = None,
                             background: np.ndarray | None = None):
    """Return ``(g0, eta)`` with ``omega_0 = omega_flat + dbar alpha0 + d alpha0bar``.

    ``eta = -d alpha0`` (tensor components) satisfies ``d omega_0 = dbar eta``.
    Raises :class:`PositivityError` if ``g0`` is not positive definite.
    """
    ops = ops or SpectralOps(grid)
    base = np.eye(grid.n) if background is None else np.asarray(background)
    g0 = base + potential_perturbation(alpha0, ops)
    g0 = 0.5 * (g0 + np.conj(np.swapaxes(g0, -1, -2)))
    lam = np.linalg.eigvalsh(g0).min()
    if lam <= 0:
        raise PositivityError(float(lam))
    eta = -partial_of_form(alpha0.values, ops)
    return g0, eta


def make_kahler_initial(grid: GridSpec, modes, ops: SpectralOps | None = None) -> np.ndarray:
    """Kahler metric ``g_{i jbar} = delta_ij + d_i d_jbar f`` for a real trigonometric ``f``.

    ``modes`` lists ``(amplitude, kx, ky)``; each adds
    ``amplitude * cos(2 pi (kx.x + ky.y))`` to ``f``.
    """
    ops = ops or SpectralOps(grid)
    f = np.zeros(grid.shape)
    for amp, kx, ky in modes:
        f = f + float(amp) * np.real(grid.plane_wave(kx, ky))
    g0 = np.eye(grid.n) + ops.ddbar(f.astype(complex))
    g0 = 0.5 * (g0 + np.conj(np.swapaxes(g0, -1, -2)))
    lam = np.linalg.eigvalsh(g0).min()
    if lam <= 0:
        raise PositivityError(float(lam))
    return g0


def holomorphic_frame_sections(grid: GridSpec, variance: str, p: int) -> list[np.ndarray]:
    """Constant frame of ``(T*_{1,0})^p`` (``variance='co'``) or ``(T_{1,0})^p``.

    Each section is returned with full grid shape ``grid.shape + (n,)*p``.
    """
    if p < 1:
        raise ValueError("tensor power must be >= 1")
    if variance not in ("co", "contra"):
        raise ValueError(f"variance must be 'co' or 'contra', got {variance!r}")
    n = grid.n
    out = []
    for multi in np.ndindex(*([n] * p)):
        s = np.zeros(grid.shape + (n,) * p, dtype=complex)
        s[(Ellipsis,) + multi] = 1.0
        out.append(s)
    return out


def sup_inf_scan(field_values: np.ndarray):
    """``(sup, argmax, inf, argmin)`` with ties broken by the lowest linear index."""
    flat = np.asarray(field_values).reshape(-1)
    if np.iscomplexobj(flat):
        flat = flat.real
    imax = int(np.argmax(flat))
    imin = int(np.argmin(flat))
    return float(flat[imax]), imax, float(flat[imin]), imin


# ---------------------------------------------------------------------------
# snapshot files
#
# A snapshot file is a sequence of records. Each record is
#
#   offset  size  content
#   0       8     magic b"PCFSNAP1"
#   8       4     uint32 LE: header length L (bytes)
#   12      L     UTF-8 JSON header {"name", "n", "N", "signature", "t",
#                 "dtype" ("complex64"|"complex128"), "shape"}
#   12+L    *     array payload, little-endian, C order, prod(shape) items
#
# Records are concatenated with no padding.

SNAPSHOT_MAGIC = b"PCFSNAP1"


def write_snapshot(path, records: dict, *, n: int, N: int, t: float,
                   signatures: dict | None = None, dtype: str = "complex128"):
    """Write named complex arrays to ``path`` in the documented layout."""
    if dtype not in ("complex64", "complex128"):
        raise ValueError(f"unsupported snapshot dtype {dtype}")
    signatures = signatures or {}
    with open(path, "wb") as fh:
        for name, arr in records.items():
            arr = np.ascontiguousarray(arr, dtype=np.dtype(dtype).newbyteorder("<"))
            header = {
                "name": name,
                "n": n,
                "N": N,
                "signature": signatures.get(name, ""),
                "t": float(t),
                "dtype": dtype,
                "shape": list(arr.shape),
            }
            raw = json.dumps(header, sort_keys=True).encode()
            fh.write(SNAPSHOT_MAGIC)
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(arr.tobytes())


def read_snapshot(path) -> tuple[dict, dict]:
    """Return ``(arrays, headers)`` keyed by record name."""
    data = Path(path).read_bytes()
    arrays, headers = {}, {}
    pos = 0
    while pos < len(data):
        if data[pos : pos + 8] != SNAPSHOT_MAGIC:
            raise ValueError(f"bad snapshot magic at offset {pos} in {path}")
        (hlen,) = struct.unpack("<I", data[pos + 8 : pos + 12])
        header = json.loads(data[pos + 12 : pos + 12 + hlen])
        pos += 12 + hlen
        dt = np.dtype(header["dtype"]).newbyteorder("<")
        count = int(np.prod(header["shape"]))
        arr = np.frombuffer(data, dtype=dt, count=count, offset=pos).reshape(header["shape"])
        pos += count * dt.itemsize
        arrays[header["name"]] = arr.astype(np.complex128)
        headers[header["name"]] = header
    return arrays, headers
