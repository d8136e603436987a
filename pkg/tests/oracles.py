"""Independent reference implementations used by the tests.

Nothing here imports the geometry kernels: metrics are written as sympy
expressions in the real coordinates and differentiated symbolically, and
contractions are spelled out as explicit loops.
"""

import itertools

import numpy as np
import sympy as sp


def real_symbols(n):
    xs = sp.symbols(f"x0:{n}", real=True)
    ys = sp.symbols(f"y0:{n}", real=True)
    return xs, ys


def dz(expr, j, xs, ys):
    return (sp.diff(expr, xs[j]) - sp.I * sp.diff(expr, ys[j])) / 2


def dzbar(expr, j, xs, ys):
    return (sp.diff(expr, xs[j]) + sp.I * sp.diff(expr, ys[j])) / 2


def evaluate(expr, grid, xs, ys):
    """Sample a sympy expression on the grid (same axis order as GridSpec)."""
    f = sp.lambdify(list(xs) + list(ys), expr, "numpy")
    x, y = grid.coordinates()
    vals = f(*list(x), *list(y))
    return np.broadcast_to(np.asarray(vals, dtype=complex), grid.shape).copy()


def plane(kx, ky, xs, ys):
    phase = sum(k * x for k, x in zip(kx, xs)) + sum(k * y for k, y in zip(ky, ys))
    return sp.exp(2 * sp.pi * sp.I * phase)


def metric_from_potential(modes, n, xs, ys):
    """``g = I + dbar alpha + d alphabar`` for ``alpha`` given by plane-wave modes."""
    alpha = [0] * n
    for comp, amp, kx, ky in modes:
        alpha[comp] += amp * plane(kx, ky, xs, ys)
    g = sp.zeros(n, n)
    for i in range(n):
        for j in range(n):
            g[i, j] = (1 if i == j else 0) + sp.I * dzbar(alpha[i], j, xs, ys) \
                - sp.I * dz(sp.conjugate(alpha[j]), i, xs, ys)
    return g


def torsion_symbolic(g, n, xs, ys):
    return {(i, j, k): dz(g[j, k], i, xs, ys) - dz(g[i, k], j, xs, ys)
            for i, j, k in itertools.product(range(n), repeat=3)}


def naive_Q(T, H):
    """Loop-nest ``Q_{i jbar} = H[k, l] H[m, n] T[i, k, n] conj(T[j, l, m])`` at one point."""
    n = T.shape[0]
    Q = np.zeros((n, n), dtype=complex)
    for i, j, k, l, m, p in itertools.product(range(n), repeat=6):
        Q[i, j] += H[l, k] * H[p, m] * T[i, k, p] * np.conj(T[j, l, m])
    return Q


def naive_ip_Q_trace_contra(Q, A, G):
    """``Q_{i jbar} A^i conj(A^j)`` for a contravariant vector, at one point."""
    n = len(A)
    return sum(Q[i, j] * A[i] * np.conj(A[j]) for i in range(n) for j in range(n)).real


def naive_sup_inf(values):
    flat = list(np.asarray(values).reshape(-1).real)
    sup = max(flat)
    inf = min(flat)
    return sup, flat.index(sup), inf, flat.index(inf)
