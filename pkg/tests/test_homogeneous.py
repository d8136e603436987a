import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from pcflab.geometry import MetricGeometry
from pcflab.homogeneous import (
    AlgebraError,
    HomogeneousFlowConfig,
    LieAlgebraSpec,
    SKTScanConfig,
    catalog_ids,
    ddbar_omega,
    invariant_geometry,
    load_algebra,
    logdet_identity_residual,
    ode_flow,
    parse_algebra,
    skt_operator,
    skt_residual,
    skt_residual_scan,
)

import homog_oracle

H_SYM = sp.Matrix([[2, sp.Rational(1, 3) + sp.I / 5, 0],
                   [sp.Rational(1, 3) - sp.I / 5, 1, sp.I / 4],
                   [0, -sp.I / 4, sp.Rational(3, 2)]])
H_NUM = np.array(H_SYM.evalf(), dtype=complex)


def random_metric(n, seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return A @ A.conj().T + 0.5 * np.eye(n)


def test_catalog_loads_and_validates():
    ids = catalog_ids()
    assert {"abelian4", "abelian6", "h8", "nil6_skt", "sl2c"} <= set(ids)
    for name in ids:
        spec = load_algebra(name)
        assert spec.jacobi_residual() < 1e-12
        assert spec.nijenhuis_residual() < 1e-12
        assert np.allclose(spec.J @ spec.J, -np.eye(spec.dim))


def test_catalog_errors():
    with pytest.raises(AlgebraError, match="unknown keys"):
        parse_algebra('format = "pcflab-algebra/1"\ndim = 2\ncolour = 1\n')
    with pytest.raises(AlgebraError, match="format"):
        parse_algebra("dim = 2\n")
    # [e1, e3] = e2 is a Lie algebra, but the standard J on it is not integrable
    bad = 'format = "pcflab-algebra/1"\ndim = 4\nbrackets = [[1, 3, 2, 1.0]]\n'
    with pytest.raises(AlgebraError, match="integrable"):
        parse_algebra(bad)
    with pytest.raises(AlgebraError, match="no catalog entry"):
        load_algebra("no_such_algebra")
    with pytest.raises(AlgebraError, match="Jacobi"):
        c = np.zeros((4, 4, 4))
        c[0, 1, 2], c[1, 0, 2] = 1, -1
        c[2, 3, 0], c[3, 2, 0] = 1, -1
        c[0, 2, 3], c[2, 0, 3] = 1, -1
        LieAlgebraSpec("bad", c, np.zeros((4, 4)))


def test_abelian_everything_zero():
    spec = load_algebra("abelian4")
    geo = invariant_geometry(spec, random_metric(2, 0))
    for q in (geo.torsion, geo.omega, geo.rho, geo.S, geo.Q):
        assert np.abs(q).max() == 0


def test_abelian_agrees_with_grid_geometry():
    # constant fields on the torus: the coordinate kernels see no derivatives
    g = random_metric(2, 1)
    geo_grid = MetricGeometry(g[None, None], None)
    geo_alg = invariant_geometry(load_algebra("abelian4"), g)
    assert np.allclose(geo_grid.torsion[0, 0], geo_alg.torsion)
    assert np.allclose(geo_grid.flow_rhs()[0, 0], geo_alg.flow_rhs())


@pytest.mark.parametrize("name,coframe,point", [
    ("h8", homog_oracle.coframe_heisenberg, [0.3 + 0.1j, -0.2j, 0.5]),
    ("sl2c", homog_oracle.coframe_sl2c, [1.1 + 0.2j, 0.3 - 0.1j, -0.2 + 0.4j]),
])
def test_invariant_geometry_matches_coordinate_oracle(name, coframe, point):
    oracle = homog_oracle.coordinate_geometry(coframe(), H_SYM, point)
    spec = load_algebra(name)
    geo = invariant_geometry(spec, H_NUM)
    assert np.abs(geo.torsion).max() > 0.1
    assert np.allclose(geo.torsion, oracle["T"], atol=1e-12)
    assert np.allclose(geo.omega, oracle["Omega"], atol=1e-12)
    for key in ("rho", "S", "Q"):
        assert np.allclose(getattr(geo, key), oracle[key], atol=1e-12)
    assert np.allclose(ddbar_omega(spec, H_NUM), oracle["ddbar_omega"], atol=1e-12)


@given(st.integers(0, 10_000))
def test_invariant_Q_psd_and_trace(seed):
    spec = load_algebra("sl2c")
    g = random_metric(3, seed)
    geo = invariant_geometry(spec, g)
    assert np.linalg.eigvalsh(geo.Q).min() > -1e-9
    H = np.linalg.inv(g)
    assert np.einsum("ij,ji->", geo.Q, H).real == pytest.approx(geo.torsion_norm_sq, rel=1e-10)


@given(st.integers(0, 10_000), st.floats(0.1, 10))
def test_skt_residual_quadratic(seed, c):
    spec = load_algebra("sl2c")
    op = skt_operator(spec)
    g = random_metric(3, seed)
    assert skt_residual(spec, c * g, op) == pytest.approx(c ** 2 * skt_residual(spec, g, op),
                                                         rel=1e-10)


def test_rho_metric_independent_on_sl2c():
    spec = load_algebra("sl2c")
    r0 = invariant_geometry(spec, np.eye(3)).rho
    r1 = invariant_geometry(spec, random_metric(3, 4)).rho
    assert np.allclose(r0, r1, atol=1e-12)


def test_abelian_flow_stationary():
    spec = load_algebra("abelian6")
    g0 = random_metric(3, 2)
    traj = ode_flow(spec, g0, HomogeneousFlowConfig(dt=1e-2, t_max=0.5))
    assert np.array_equal(traj.metrics[-1], traj.metrics[0])
    assert np.allclose(traj.metrics[0], g0, rtol=0, atol=1e-14)
    assert traj.degeneration is None


def test_logdet_identity_along_sl2c_run():
    # a non-diagonal start makes transposed contractions visible
    # d/dt log det g = |T|^2 - tr_g rho(g0); the centred difference is O(dt^2)
    spec = load_algebra("sl2c")
    res = []
    for dt in (2e-3, 1e-3):
        traj = ode_flow(spec, H_NUM, HomogeneousFlowConfig(dt=dt, t_max=0.1, cadence=1))
        res.append(logdet_identity_residual(traj))
    assert res[1] < 1e-3
    assert np.log2(res[0] / res[1]) > 1.9


def test_sl2c_run_records_behaviour():
    spec = load_algebra("sl2c")
    traj = ode_flow(spec, np.eye(3), HomogeneousFlowConfig(dt=1e-3, t_max=0.2, cadence=10))
    assert len(traj.times) == 21
    assert np.all(np.isfinite(traj.torsion_norm_sq))
    cols, rows = traj.to_rows()
    assert cols[0] == "t" and len(rows) == 21


def test_skt_scan_abelian_zero():
    res = skt_residual_scan(load_algebra("abelian4"), SKTScanConfig(n_starts=5))
    assert res.min_residual == 0.0


@pytest.mark.parametrize("name", ["h8", "nil6_skt"])
def test_skt_scan_finds_pluriclosed(name):
    spec = load_algebra(name)
    res = skt_residual_scan(spec, SKTScanConfig(n_starts=5))
    assert res.min_residual < 1e-8
    # in this nilpotent family the residual is zero for every metric
    assert skt_residual(spec, random_metric(3, 9)) < 1e-20


def test_sl2c_not_pluriclosed_anywhere_sampled():
    spec = load_algebra("sl2c")
    res = skt_residual_scan(spec, SKTScanConfig(n_starts=10))
    assert res.min_residual > 1.0
    d = res.to_dict()
    assert d["n_starts"] == 10
    assert d["witness_condition_number"] >= 1.0
    assert np.linalg.det(res.witness).real == pytest.approx(1.0)
