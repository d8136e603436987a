import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pcflab.flow import FlowConfig, Passenger, PluriclosedFlow, initial_state
from pcflab.geometry import MetricGeometry, ip_Q_trace, ComplexTensorField
from pcflab.monitors import (
    IdentityResidual,
    MaximumPrincipleRecorder,
    MonitorSeries,
    cauchy_schwarz_margins,
    contravariant_tensor_check,
    covariant_section_check,
    general_parabolic_check,
    identity_suite,
    kato_margin,
    maximum_principle_suite,
    sandwich_holds,
    upsilon_norms,
)
from pcflab.torus import PotentialForm, holomorphic_frame_sections, make_pluriclosed_initial

from conftest import standard_alpha


def _series(values, direction="nonincreasing", slack=0.0):
    n = len(values)
    return MonitorSeries("q", direction, list(range(n)), list(values),
                         [slack * k for k in range(n)]).evaluate()


# ---------------------------------------------------------------------------
# monotone verdicts


def test_series_verdicts():
    assert _series([3, 2, 2, 1]).verdict == "monotone-nonincreasing"
    assert _series([1, 2, 2, 3], "nondecreasing").verdict == "monotone-nondecreasing"
    s = _series([3, 2, 2.5, 1])
    assert s.verdict == "violated" and not s.ok
    assert s.violation == (2.0, pytest.approx(0.5))
    assert _series([1, 5], "trend").verdict == "recorded"


def test_series_slack_is_accumulated():
    # slack grows by 0.1 per sample and only the slack accrued since the
    # earlier sample is available to a later rise
    assert _series([1.0, 0.9, 0.95], slack=0.1).ok
    assert _series([1.0, 1.05, 1.1], slack=0.1).ok
    s = _series([1.0, 0.9, 1.05], slack=0.1)
    assert s.violation == (2.0, pytest.approx(0.05))


def test_series_nonfinite_is_violation():
    s = _series([1.0, float("nan"), 0.5])
    assert s.verdict == "violated"
    assert s.violation == (1.0, math.inf)


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30))
def test_sorted_series_is_monotone(values):
    assert _series(sorted(values, reverse=True)).ok
    assert _series(sorted(values), "nondecreasing").ok


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30), st.floats(1e-3, 10))
def test_bump_above_running_min_is_caught(values, bump):
    v = sorted(values, reverse=True) + [min(values) + bump]
    s = _series(v)
    assert s.verdict == "violated"
    assert s.violation[1] == pytest.approx(bump)


def test_series_to_dict():
    d = _series([3, 2.5, 3]).to_dict()
    assert d["verdict"] == "violated"
    assert d["violation"]["t"] == 2.0
    assert d["first"] == 3 and d["last"] == 3


# ---------------------------------------------------------------------------
# pointwise inequalities


def _curved(grid, ops, seed=0):
    alpha = PotentialForm.random(grid, np.random.default_rng(seed), 0.08)
    return MetricGeometry(make_pluriclosed_initial(grid, alpha, ops)[0], ops)


def test_upsilon_vanishes_for_constant_multiples(grid8, ops8):
    geo = _curved(grid8, ops8)
    assert upsilon_norms(geo, geo) == (0.0, 0.0)
    u0, u1 = upsilon_norms(MetricGeometry(2.5 * geo.G, ops8), geo)
    assert u0 < 1e-12 and u1 < 1e-10
    flat = MetricGeometry(np.broadcast_to(np.eye(2, dtype=complex), geo.G.shape).copy(), ops8)
    assert upsilon_norms(geo, flat)[0] > 0.1


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_kato_and_cauchy_schwarz_margins_nonnegative(grid8, ops8, seed):
    geo = _curved(grid8, ops8, seed)
    for A in holomorphic_frame_sections(grid8, "contra", 1):
        assert kato_margin(A, "u", geo) >= -1e-12
        m1, m2 = cauchy_schwarz_margins(A, "u", geo)
        assert m1 >= -1e-12 and m2 >= -1e-12


# ---------------------------------------------------------------------------
# identity checks


def test_check_requires_holomorphic_section(grid8, ops8):
    x, _ = grid8.coordinates()
    bad = np.zeros(grid8.shape + (2,), dtype=complex)
    bad[..., 0] = np.cos(2 * np.pi * x[0])
    with pytest.raises(ValueError, match="not holomorphic"):
        covariant_section_check(bad, "d", ops8)
    with pytest.raises(ValueError, match="lower"):
        covariant_section_check(holomorphic_frame_sections(grid8, "contra", 1)[0], "u", ops8)


def test_general_check_reduces_to_section_check(grid8, ops8):
    # with no forcing and a holomorphic start the dbar term vanishes, so the
    # passenger identity and the fixed-section identity agree at that time
    state = initial_state(grid8, standard_alpha(grid8), ops8)
    geo = MetricGeometry(state.G, ops8)
    for kinds, sign in (("d", -1.0), ("u", 1.0)):
        section = holomorphic_frame_sections(grid8, "co" if kinds == "d" else "contra", 1)[0]
        state.passengers = {"b": Passenger(np.array(section), kinds)}
        general = general_parabolic_check("b", kinds)
        make = covariant_section_check if kinds == "d" else contravariant_tensor_check
        fixed = make(section, kinds, ops8, sign)
        assert np.abs(general.rhs(state, geo) - fixed.rhs(state, geo)).max() < 1e-12


def test_contravariant_sign_matters_on_torsion(grid8, ops8):
    geo = _curved(grid8, ops8)
    A = holomorphic_frame_sections(grid8, "contra", 1)[0]
    good = contravariant_tensor_check(A, "u", ops8, 1.0)
    bad = contravariant_tensor_check(A, "u", ops8, -1.0)
    diff = good.rhs(None, geo) - bad.rhs(None, geo)
    expect = 2 * ip_Q_trace(geo.Q, ComplexTensorField(np.broadcast_to(A, geo.G.shape[:-1]), "u"),
                            geo.G, geo.H)
    assert np.allclose(diff, expect)
    assert np.abs(diff).max() > 1e-3


def test_identity_residual_finalize():
    r = IdentityResidual("x", {0.1: 4e-4, 0.05: 1e-4}).finalize()
    assert r.order == pytest.approx(2.0) and r.passed
    r = IdentityResidual("x", {0.1: 4e-4, 0.05: 3e-4}).finalize()
    assert not r.passed
    r = IdentityResidual("x", {0.1: 1e-15, 0.05: 1e-15}).finalize()
    assert r.exact and r.passed and r.to_dict()["order"] == "exact"
    r = IdentityResidual("x", {0.1: 4e-4, 0.05: 1e-4}, min_margin=-1e-3).finalize(margin_tol=1e-8)
    assert not r.passed


@pytest.fixture(scope="module")
def short_studies(grid8, ops8):
    alpha = standard_alpha(grid8)
    good = identity_suite(grid8, alpha, horizon=0.02, n_coarse=8, ops=ops8)
    flipped = identity_suite(grid8, alpha, horizon=0.02, n_coarse=8, covariant_q_sign=1.0, ops=ops8)
    return {r.identity: r for r in good}, {r.identity: r for r in flipped}


def test_identity_orders_on_short_run(short_studies):
    good, _ = short_studies
    for name, r in good.items():
        assert r.passed, name
        assert r.exact or r.order == pytest.approx(2.0, abs=0.01), name
    # margins of the inequality-carrying checks are comfortably positive
    assert good["phi"].min_margin > 0
    assert good["contravariant_p1"].min_margin > 0


def test_flipped_covariant_sign_fails_only_covariant(short_studies):
    good, flipped = short_studies
    failed = {name for name, r in flipped.items() if not r.passed}
    assert failed == {"covariant_p1", "covariant_p2"}
    assert flipped["covariant_p1"].residuals[0.00125] > 0.1


# ---------------------------------------------------------------------------
# maximum-principle recorder


@pytest.fixture(scope="module")
def short_run(grid8, ops8):
    state = initial_state(grid8, standard_alpha(grid8), ops8)
    rec = MaximumPrincipleRecorder(grid8, ops8)
    cfg = FlowConfig(t_max=0.05, cadence=2, stop_on_convergence=False)
    PluriclosedFlow(grid8, cfg, ops8).run(state, observers=[rec])
    return rec


def test_short_run_verdicts(short_run):
    series = maximum_principle_suite(short_run)
    names = [s.name for s in series]
    assert names == ["sup_cov_1", "sup_cov_2", "sup_Phi_1", "sup_Phi_2", "inf_det_ratio",
                     "sup_phi2", "sup_T2"]
    for s in series:
        assert s.ok, s.to_dict()
    assert series[-1].verdict == "recorded" and series[-1].rate < 0
    assert sandwich_holds(short_run)


def test_short_run_diagnostics(short_run):
    rows = short_run.rows
    assert rows[0]["t"] == 0 and rows[0]["consistency"] == 0
    assert max(r["pluriclosed_residual"] for r in rows) < 1e-8
    assert min(r["kato_margin"] for r in rows) >= -1e-12
    assert min(r["cs_margin_Q"] for r in rows) >= -1e-12
    for r in rows:
        assert r["lambda_min_lower"] <= r["lambda_min"] * (1 + 1e-12)
        assert r["lambda_max"] <= r["lambda_max_upper"] * (1 + 1e-12)
