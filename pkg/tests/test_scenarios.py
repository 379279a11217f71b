import csv
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfcollapse.config import ScenarioConfig
from rfcollapse.flow import NilMetric, WarpedSurfaceMetric, nil_coordinate_metric, nil_similarity_solution
from rfcollapse.scenarios import (
    Report,
    cell_seed,
    coefficient_deviation,
    nil_pullback_coefficients,
    pullback_matrix,
    r_circle_slack,
    run_scenario,
    s_landmark_step,
    sqrt_law_pullback_coefficients,
    torus_vs_circle,
)


def pullback_by_jacobian(g: NilMetric, A_i: float, points: np.ndarray) -> np.ndarray:
    """J^T G(phi(p)) J for phi(x, y, z) = (x/s, y/s, s z), s = A_i^(-1/2)."""
    s = A_i**-0.5
    J = np.diag([1 / s, 1 / s, s])
    mapped = points @ J.T
    G = nil_coordinate_metric(g, mapped)
    return np.einsum("ji,mjk,kl->mil", J, G, J)


@settings(max_examples=40, deadline=None)
@given(
    A=st.floats(0.01, 5.0), B=st.floats(0.1, 5.0), C=st.floats(0.1, 5.0), A_i=st.floats(0.01, 2.0),
    x=st.floats(-2.0, 2.0),
)
def test_pullback_matches_jacobian_route(A, B, C, A_i, x):
    g = NilMetric(A, B, C)
    p = np.array([[x, 0.3, -0.7]])
    assert np.allclose(pullback_matrix(g, A_i, p), pullback_by_jacobian(g, A_i, p), rtol=1e-12, atol=1e-12)


def test_pullback_at_t0_has_unit_fiber():
    m0 = NilMetric(1.0, 1.0, 1.0)
    g = nil_similarity_solution(m0, 100.0)
    c = nil_pullback_coefficients(g, g.A, np.linspace(0, 1, 5))
    assert np.all(c["dz2"] == 1.0)
    # B A and C A are first integrals, so the dy2, dx2 limits are B0 A0, C0 A0
    assert c["dx2"] == pytest.approx(np.ones(5))
    expected = max(np.abs(c["dz2"] - 1).max(), np.abs(c["dydz"]).max(), np.abs(c["dy2"] - 1).max(),
                   np.abs(c["dx2"] - 1).max())
    assert coefficient_deviation(c, 1.0, 1.0) == expected


def test_sqrt_law_pullback_is_a_comparison_row():
    c = sqrt_law_pullback_coefficients(10, 0.0, 1.0, 1.0, 1.0, np.array([0.0, 1.0]))
    assert np.allclose(c["dz2"], 1.0)
    assert c["dydz"][1] == pytest.approx(-2 / math.sqrt(21))


def test_s_landmark_step():
    b = np.full(8, 1.0)  # unit fiber: 2 pi / 64 ~ 0.098 per s-step
    assert s_landmark_step(b, 64, 0.3) == 2
    assert s_landmark_step(b * 1e-4, 64, 0.3) == 64
    assert s_landmark_step(b * 100, 64, 0.3) == 1


def test_cell_seed_is_stable_and_distinct():
    assert cell_seed(0, 1, 2) == cell_seed(0, 1, 2)
    seeds = {cell_seed(0, i, t) for i in range(4) for t in range(5)}
    assert len(seeds) == 20


def test_r_circle_slack_on_unit_metric():
    m = WarpedSurfaceMetric(np.ones(16), np.ones(16))
    assert r_circle_slack(m) == pytest.approx(2 * math.pi / 16)


def test_thin_torus_is_near_its_circle():
    cfg = ScenarioConfig("collapsing_torus", nr=64, ns=16, budget=300)
    thin = WarpedSurfaceMetric.from_profile(lambda r: 2 + np.cos(r), 0.01, 64)
    res = torus_vs_circle(thin, cfg, seed=0)
    # every fiber has length below 2 pi * 0.03, so the projection is close to an isometry
    assert res["gh_lower"] <= res["gh_upper"] <= 0.5
    assert res["c_hat"] == pytest.approx(2 * math.pi)


def test_report_serialization():
    rep = Report("demo", {"seed": 1})
    rep.records.append({"i": 4, "t": 0.0, "gh_lower": 0.1, "gh_upper": 0.2, "K_max": 1.0,
                        "margins": {"x": 0.5}, "pass": True})
    rep.assertions.append({"name": "a", "passed": True, "margin": 0.5})
    rep.assertions.append({"name": "b", "passed": None})
    doc = json.loads(rep.to_json("2020-01-01T00:00:00+00:00"))
    assert doc["passed"] and doc["timestamp"].startswith("2020") and doc["schema_version"] == 1
    rows = list(csv.reader(io.StringIO(rep.series_csv())))
    assert rows[0] == ["scenario", "i", "t", "gh_lower", "gh_upper", "K_max", "margin_x", "pass"]
    assert rows[1][0] == "demo" and rows[1][-1] == "1"
    assert any("[skip] b" in line for line in rep.summary_lines())
    rep.assertions.append({"name": "c", "passed": False})
    assert not rep.passed and [a["name"] for a in rep.failures()] == ["c"]


def test_report_handles_non_finite_values():
    rep = Report("demo", {})
    rep.extras["x"] = math.inf
    assert json.loads(rep.to_json())["extras"]["x"] == "inf"


# -- small end-to-end runs --------------------------------------------------------


def small_torus():
    return ScenarioConfig("collapsing_torus", i_list=[4, 16], t_grid=[0.0, 0.25], nr=64, ns=16,
                          monitor_ns=32, budget=200, containment_times=[0.1], record_points=11)


def test_torus_scenario_structure():
    rep = run_scenario(small_torus())
    names = {a["name"] for a in rep.assertions}
    assert {"metric_ratio_bounds", "ball_containment", "lipschitz_equivalence", "gh_t0_fiber_bound",
            "gh_t0_monotone", "nonstationary_c_hat"} <= names
    assert len(rep.records) == 4
    assert all(r["gh_lower"] <= r["gh_upper"] for r in rep.records)
    # the bound monitors hold at any resolution
    for a in rep.assertions:
        if a["name"] in ("metric_ratio_bounds", "ball_containment", "lipschitz_equivalence", "coefficient_ratio_all_pairs"):
            assert a["passed"], a


def test_flat_profile_gives_stationary_witness():
    cfg = ScenarioConfig("collapsing_torus", f="2", i_list=[4], t_grid=[0.0, 0.25], nr=32, ns=8,
                         monitor_ns=16, budget=100, containment_times=[0.1], record_points=5, landmark_step_r=4)
    rep = run_scenario(cfg)
    a = [a for a in rep.assertions if a["name"] == "stationary_c_hat"]
    assert len(a) == 1 and a[0]["passed"]


def test_nil_scenario_small():
    cfg = ScenarioConfig("nil_scaling", i_list=[10, 1000], box_n=4, fiber_steps=4, budget=200)
    rep = run_scenario(cfg)
    assert rep.passed, rep.failures()
    dev = [r["deviation"] for r in rep.records if r["t"] == 0]
    assert dev[1] < dev[0]
    assert rep.extras["residual_gate"]["oracle"] == "similarity"


def test_family_scenario_small():
    cfg = ScenarioConfig("family_convergence", i_list=[16, 64], t_grid=[0.0, 0.25, 0.5], nr=64, ns=16)
    rep = run_scenario(cfg)
    assert rep.passed, rep.failures()
    eps = rep.extras["eps"]
    assert eps["64"] <= eps["16"]
    assert rep.extras["chain_constants"]["16eps"] == pytest.approx(16 * max(eps.values()))


def test_parallel_cells_match_serial():
    cfg = ScenarioConfig("family_convergence", i_list=[16, 64], t_grid=[0.0, 0.5], nr=32, ns=8)
    assert run_scenario(cfg, jobs=1).to_json() == run_scenario(cfg, jobs=2).to_json()
