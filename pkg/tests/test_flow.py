import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import nil_exact, warped_gauss_curvature
from rfcollapse.errors import DomainError, HypothesisError, IntegrationError, UsageError
from rfcollapse.flow import (
    BoundParams,
    FlowTrace,
    NilMetric,
    WarpedSurfaceMetric,
    check_ball_containment,
    check_lipschitz_equivalence,
    check_metric_equivalence_bounds,
    check_modulus_window,
    containment_radius,
    gauss_curvature,
    integrate_nil,
    integrate_warped_surface,
    nil_box_sampler,
    nil_coordinate_metric,
    nil_curvature_bound,
    nil_first_integrals,
    nil_residual_report,
    nil_ricci_derivative,
    nil_sectional_curvatures,
    nil_similarity_solution,
    sqrt_law_closed_form,
    stable_dt,
    sweep_ratio_bounds,
    total_curvature,
    warped_sampler,
)

positive = st.floats(0.1, 10.0)
# initial data with rate A / (B C) <= 10, where dt = 1e-3 resolves the flow
nil_data = st.tuples(positive, positive, positive).filter(lambda m: m[0] / (m[1] * m[2]) <= 10)


def torus(n_r=64, lam=1.0):
    return WarpedSurfaceMetric.from_profile(lambda r: 2 + np.cos(r), lam, n_r)


# -- Nil ----------------------------------------------------------------------


def test_nil_validation():
    with pytest.raises(DomainError):
        NilMetric(0.0, 1.0, 1.0)
    with pytest.raises(DomainError):
        NilMetric(1.0, math.inf, 1.0)
    with pytest.raises(DomainError):
        integrate_nil(NilMetric(1, 1, 1), 1.0, 0.0)


def test_nil_curvatures():
    m = NilMetric(2.0, 1.0, 4.0)
    mu2 = 0.5
    assert nil_sectional_curvatures(m) == pytest.approx((-0.75 * mu2, 0.25 * mu2, 0.25 * mu2))
    assert nil_curvature_bound(m) == pytest.approx(0.375)
    # Rc(e3, e3) = A mu^2 / 2, Rc(e2, e2) = -B mu^2 / 2, Rc(e1, e1) = -C mu^2 / 2, dg/dt = -2 Rc
    assert nil_ricci_derivative(m) == pytest.approx((-2.0 * mu2, 1.0 * mu2, 4.0 * mu2))


def test_stiff_nil_step_aborts():
    # rate A / (B C) = 224: a step of 0.01 overshoots A below zero
    with pytest.raises(IntegrationError):
        integrate_nil(NilMetric(7.0, 0.25, 0.125), 1.0, 0.01)


def test_nil_reference_value():
    tr = integrate_nil(NilMetric(1.0, math.sqrt(3), math.sqrt(3)), 1.0, 1e-3)
    assert abs(tr.states[-1].A - 2 ** (-1 / 3)) <= 1e-8
    assert tr.times[-1] == 1.0


def test_nil_rk4_is_fourth_order():
    m0 = NilMetric(2.0, 0.5, 0.7)
    exact = nil_exact(2.0, 0.5, 0.7, 1.0)[0]
    e1 = abs(integrate_nil(m0, 1.0, 0.02).states[-1].A - exact)
    e2 = abs(integrate_nil(m0, 1.0, 0.01).states[-1].A - exact)
    assert 12 < e1 / e2 < 20


def test_record_every_subsamples():
    tr = integrate_nil(NilMetric(1, 1, 1), 1.0, 0.01, record_every=10)
    assert len(tr.times) == 11
    assert np.allclose(tr.times, np.linspace(0, 1, 11))
    # interval maxima: curvature decreases, so each entry is the left endpoint value
    assert tr.K_max[1] == pytest.approx(nil_curvature_bound(tr.states[0]), rel=1e-12)


def test_residual_report_picks_similarity():
    rep = nil_residual_report()
    assert rep["oracle"] == "similarity"
    assert rep["exactly_one_vanishes"]
    assert rep["residual_similarity"] < 1e-12
    assert rep["residual_sqrt_law"] > 0.1


def test_sqrt_law_domain():
    with pytest.raises(DomainError):
        sqrt_law_closed_form(-1.0, 1.0, 1.0, 0.0)


def test_coordinate_metric_is_left_invariant_form():
    m = NilMetric(2.0, 3.0, 5.0)
    p = np.array([[0.5, 0.1, 0.2]])
    G = nil_coordinate_metric(m, p)[0]
    # A (dz - x dy)^2 + B dy^2 + C dx^2 applied to (dx, dy, dz) = (0, 1, 1)
    v = np.array([0.0, 1.0, 1.0])
    assert v @ G @ v == pytest.approx(2.0 * (1 - 0.5) ** 2 + 3.0)
    assert np.all(np.linalg.eigvalsh(G) > 0)


@settings(max_examples=30, deadline=None)
@given(m=nil_data, T=st.floats(0.1, 3.0))
def test_nil_matches_exact_solution(m, T):
    A, B, C = m
    tr = integrate_nil(NilMetric(A, B, C), T, 1e-3)
    exact = nil_exact(A, B, C, T)
    assert np.allclose(tr.states[-1].as_array(), exact, rtol=1e-7)
    assert np.allclose(nil_similarity_solution(NilMetric(A, B, C), T).as_array(), exact, rtol=1e-13)


@settings(max_examples=30, deadline=None)
@given(m=nil_data)
def test_nil_first_integrals_conserved(m):
    A, B, C = m
    tr = integrate_nil(NilMetric(A, B, C), 1.0, 1e-3)
    inv = np.array([nil_first_integrals(s) for s in tr.states])
    assert np.abs(inv / inv[0] - 1).max() <= 1e-9


@settings(max_examples=30, deadline=None)
@given(m=nil_data)
def test_nil_curvature_decays(m):
    A, B, C = m
    tr = integrate_nil(NilMetric(A, B, C), 1.0, 1e-2)
    k = [nil_curvature_bound(s) for s in tr.states]
    assert np.all(np.diff(k) <= 0)


# -- warped surfaces -----------------------------------------------------------


def test_warped_validation():
    with pytest.raises(DomainError):
        WarpedSurfaceMetric(np.ones(4), np.ones(5))
    with pytest.raises(DomainError):
        WarpedSurfaceMetric(np.ones(4), -np.ones(4))
    with pytest.raises(DomainError):
        gauss_curvature(WarpedSurfaceMetric(np.ones(8), np.ones(8)))
    m = torus()
    with pytest.raises(DomainError):
        integrate_warped_surface(m, 0.1, dt=10 * stable_dt(m))


def test_curvature_of_warped_torus_converges():
    # K = -f''/f = cos r / (2 + cos r) for dr^2 + (2 + cos r)^2 ds^2
    errs = []
    for n in (64, 128):
        m = torus(n)
        exact = np.cos(m.r) / (2 + np.cos(m.r))
        errs.append(np.abs(gauss_curvature(m) - exact).max())
    assert errs[0] / errs[1] > 3.5


def test_curvature_agrees_with_independent_stencil():
    m = torus(256)
    ref = warped_gauss_curvature(m.a, m.b, m.h)
    assert np.abs(gauss_curvature(m) - ref).max() < 1e-3


def test_flat_torus_is_stationary():
    m = WarpedSurfaceMetric(np.ones(32), np.full(32, 4.0))
    tr = integrate_warped_surface(m, 0.5)
    assert np.array_equal(tr.states[-1].b, m.b)
    assert tr.K_max.max() == 0


def test_r_circumference_of_unit_metric():
    assert torus().r_circumference() == pytest.approx(2 * math.pi)


def test_output_times_validated():
    with pytest.raises(DomainError):
        integrate_warped_surface(torus(), 0.5, times=[0.1, 0.2])


@settings(max_examples=10, deadline=None)
@given(lam=st.floats(0.05, 3.0), amp=st.floats(0.0, 0.8), n_r=st.sampled_from([32, 64]))
def test_gauss_bonnet(lam, amp, n_r):
    m = WarpedSurfaceMetric.from_profile(lambda r: 1 + amp * np.cos(r), lam, n_r)
    tr = integrate_warped_surface(m, 0.2)
    for s in tr.states:
        assert abs(total_curvature(s)) <= 1e-10


@settings(max_examples=10, deadline=None)
@given(lam=st.floats(0.05, 3.0), amp=st.floats(0.0, 0.8))
def test_warped_flow_is_scale_free_in_fiber(lam, amp):
    # scaling b by lam^2 leaves K and hence the a-evolution unchanged
    f = lambda r: 1 + amp * np.cos(r)  # noqa: E731
    a = integrate_warped_surface(WarpedSurfaceMetric.from_profile(f, 1.0, 32), 0.2, dt=1e-3)
    b = integrate_warped_surface(WarpedSurfaceMetric.from_profile(f, lam, 32), 0.2, dt=1e-3)
    assert np.allclose(a.states[-1].a, b.states[-1].a, rtol=1e-10)
    assert np.allclose(a.states[-1].b * lam**2, b.states[-1].b, rtol=1e-10)


# -- bound monitors ------------------------------------------------------------


def test_containment_radius():
    assert containment_radius(0.0) == 1.0
    assert abs(containment_radius(math.log(math.sqrt(2))) - 0.5) <= 1e-15
    with pytest.raises(DomainError):
        containment_radius(-1.0)


def test_bound_params_eta():
    p = BoundParams.from_delta(2.0, 0.1, 1.0)
    assert p.eta == pytest.approx(math.log(1.1) / 4)
    with pytest.raises(DomainError):
        BoundParams.from_delta(0.0, 0.1, 1.0)


def test_trace_validation():
    with pytest.raises(UsageError):
        FlowTrace("x", [0.1], [NilMetric(1, 1, 1)], [0.0], 0.1)
    tr = integrate_nil(NilMetric(1, 1, 1), 1.0, 0.1)
    with pytest.raises(UsageError):
        tr.index_of(0.55)


def test_equivalence_bounds_on_nil():
    tr = integrate_nil(NilMetric(1, 1, 1), 1.0, 1e-2)
    C0 = float(tr.K_max.max())
    rec = check_metric_equivalence_bounds(
        tr, BoundParams.from_delta(C0, 0.1, 1.0), 0.0, 0.5, sampler=nil_box_sampler(6), sources=(0, 100)
    )
    assert rec["passed"] and rec["ratio_ok"] and rec["modulus_ok"] and rec["distance_ok"]
    with pytest.raises(HypothesisError):
        check_metric_equivalence_bounds(tr, BoundParams.from_delta(C0 / 2, 0.1, 1.0), 0.0, 0.5)


def test_equivalence_bounds_detect_wrong_curvature_constant():
    # a trace whose coefficients move faster than its claimed curvature allows
    states = [NilMetric(1, 1, 1), NilMetric(2, 1, 1)]
    tr = FlowTrace("nil", [0.0, 0.1], states, [0.1, 0.1], 0.1)
    rec = check_metric_equivalence_bounds(tr, BoundParams.from_delta(0.1, 0.1, 1.0), 0.0, 0.1)
    assert not rec["ratio_ok"]


def test_ball_containment_on_torus():
    tr = integrate_warped_surface(torus(64), 0.25, times=[0.0, 0.1, 0.25])
    sampler = warped_sampler(64)
    for rho in (0.5, 1.0):
        rec = check_ball_containment(tr, sampler, rho, 0.25, slack=0.1)
        assert rec["passed"]
    big = integrate_warped_surface(torus(64, lam=0.3).scaled(0.25), 0.01, times=[0.0, 0.01])
    with pytest.raises(HypothesisError):
        check_ball_containment(big, sampler, 1.0, 0.01)


def test_lipschitz_and_sweep():
    tr = integrate_warped_surface(torus(64), 0.5)
    lip = check_lipschitz_equivalence(tr)
    assert lip["passed"] and lip["C_prime"] == 2 * lip["C"]
    assert sweep_ratio_bounds(tr, float(tr.K_max.max()))["passed"]
    with pytest.raises(HypothesisError):
        check_lipschitz_equivalence(tr, C=lip["C_measured"] / 2)


def test_modulus_window():
    tr = integrate_warped_surface(torus(64), 0.5, times=np.linspace(0, 0.5, 41))
    C0 = float(tr.K_max.max())
    for delta in (0.05, 0.1):
        rec = check_modulus_window(tr, C0, delta)
        assert rec["passed"] and rec["n_pairs"] > 0
