"""Coordinate oracle for invariant geometry.

A left-invariant metric on a complex Lie group is written in holomorphic
coordinates through the Maurer-Cartan coframe ``theta`` (``theta[a, i]`` is the
coefficient of ``dz^i`` in the a-th invariant (1,0)-form).  The coordinate
metric ``G = theta^T h conj(theta)`` is differentiated symbolically and all
quantities are computed with the coordinate formulas, then pulled back to the
invariant frame at one point.  Nothing here touches structure constants.
"""

import itertools

import numpy as np
import sympy as sp

N_DIM = 3
Z = sp.symbols("z0:3")
W = sp.symbols("w0:3")  # stands for conj(z)
_SWAP = {**{Z[k]: W[k] for k in range(N_DIM)}, **{W[k]: Z[k] for k in range(N_DIM)}}


def cj(expr):
    return sp.sympify(expr).xreplace(_SWAP).subs(sp.I, -sp.I)


def coframe_heisenberg():
    """``theta^3 = dz3 + zbar1 dz1``-type coframe whose frame has ``d theta^3 = dzbar1 ^ dz1``."""
    return sp.Matrix([[1, 0, 0], [0, 1, 0], [W[0], 0, 1]])


def coframe_sl2c():
    """Left Maurer-Cartan coframe of SL(2,C) in the chart ``(a, b, c)``, basis H, E, F."""
    a, b, c = Z
    g = sp.Matrix([[a, b], [c, (1 + b * c) / a]])
    gi = g.inv()
    th = sp.zeros(3, 3)
    for i, v in enumerate(Z):
        m = sp.simplify(gi * g.diff(v))
        th[0, i], th[1, i], th[2, i] = m[0, 0], m[0, 1], m[1, 0]
    return th


def coordinate_geometry(theta, h, point):
    """Torsion, curvature traces, Q and ``i d dbar omega`` in the invariant frame."""
    n = N_DIM
    G = sp.zeros(n, n)
    for i, j in itertools.product(range(n), repeat=2):
        G[i, j] = sum(h[a, b] * theta[a, i] * cj(theta[b, j])
                      for a in range(n) for b in range(n))
    sub = {**{Z[k]: point[k] for k in range(n)}, **{W[k]: np.conj(point[k]) for k in range(n)}}

    def ev(e):
        return complex(sp.N(sp.sympify(e).subs(sub)))

    rng3 = list(itertools.product(range(n), repeat=3))
    g = np.array([[ev(G[i, j]) for j in range(n)] for i in range(n)])
    dG = np.zeros((n,) * 3, complex)
    dbG = np.zeros((n,) * 3, complex)
    for i, j, k in rng3:
        dG[i, j, k] = ev(G[j, k].diff(Z[i]))
        dbG[i, j, k] = ev(G[j, k].diff(W[i]))  # [jbar, k, lbar]
    ddb = np.zeros((n,) * 4, complex)
    for i, j, k, l in itertools.product(range(n), repeat=4):
        ddb[i, j, k, l] = ev(G[k, l].diff(Z[i]).diff(W[j]))
    H = np.linalg.inv(g)
    T = dG - np.swapaxes(dG, 0, 1)
    Om = -ddb + np.einsum("ikq,qp,jpl->ijkl", dG, H, dbG)
    rho = np.einsum("ijkl,lk->ij", Om, H)
    S = np.einsum("klij,lk->ij", Om, H)
    Q = np.einsum("ikn,jlm,lk,nm->ij", T, T.conj(), H, H)

    # i d dbar omega of omega = i G dz ^ dzbar, as a 4-form on (z, zbar)
    om = sp.MutableDenseNDimArray.zeros(2 * n, 2 * n)
    for i, j in itertools.product(range(n), repeat=2):
        om[i, n + j] = sp.I * G[i, j]
        om[n + j, i] = -sp.I * G[i, j]
    var = list(Z) + list(W)

    def d(form, k):
        out = sp.MutableDenseNDimArray.zeros(*([2 * n] * (k + 1)))
        for idx in itertools.product(range(2 * n), repeat=k + 1):
            if len(set(idx)) < k + 1:
                continue
            out[idx] = sum((-1) ** p * sp.diff(form[idx[:p] + idx[p + 1:]], var[idx[p]])
                           for p in range(k + 1))
        return out

    w3 = d(om, 2)
    for idx in itertools.product(range(2 * n), repeat=3):
        if sum(i >= n for i in idx) != 2:
            w3[idx] = 0
    w4 = d(w3, 3)
    dd = np.zeros((2 * n,) * 4, complex)
    for idx in itertools.product(range(2 * n), repeat=4):
        if sum(i >= n for i in idx) == 2 and w4[idx] != 0:
            dd[idx] = 1j * ev(w4[idx])

    # pull back to the frame Z_a = sum_i Zm[i, a] d/dz^i with Zm = theta^{-1}
    Th = np.array([[ev(theta[a, i]) for i in range(n)] for a in range(n)])
    Zm = np.linalg.inv(Th)
    Zb = Zm.conj()
    P = np.block([[Zm, np.zeros((n, n))], [np.zeros((n, n)), Zb]])
    return {
        "T": np.einsum("ijk,ia,jb,kc->abc", T, Zm, Zm, Zb),
        "Omega": np.einsum("ijkl,ia,jb,kc,ld->abcd", Om, Zm, Zb, Zm, Zb),
        "rho": np.einsum("ij,ia,jb->ab", rho, Zm, Zb),
        "S": np.einsum("ij,ia,jb->ab", S, Zm, Zb),
        "Q": np.einsum("ij,ia,jb->ab", Q, Zm, Zb),
        "ddbar_omega": np.einsum("pqrs,pa,qb,rc,sd->abcd", dd, P, P, P, P),
    }
