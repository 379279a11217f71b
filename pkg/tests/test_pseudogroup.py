import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rfcollapse.errors import ConstructionError, QuotientError, UsageError
from rfcollapse.metric import diagonal_torus_sample, geodesic_distances, sample_circle, sample_interval
from rfcollapse.pseudogroup import (
    LocalIsometry,
    Pseudogroup,
    chart_preimage_ball,
    check_equivalence_relation,
    check_pseudometric,
    dump_pseudogroup,
    grid_translation,
    line_chart,
    load_pseudogroup,
    periodic_cover_chart,
    quotient_distance,
    quotient_with_representatives,
    trivial_group,
    verify_quotient_isometry,
)


def circle_group(steps=36, periods=3, period=2 * math.pi):
    chart = line_chart(period, steps, periods)
    R = float(chart.radial.max())
    g = grid_translation(chart, (steps,), R, 2 * period / steps, "T")
    return chart, Pseudogroup((g, g.inverse()), chart)


def test_line_chart_layout():
    chart = line_chart(2 * math.pi, 360, 3)
    assert chart.n == 1081 and chart.center == 540
    assert chart.projection[chart.center] == 0
    assert chart.radial.max() == pytest.approx(3 * math.pi)
    base = sample_interval(360, 2 * math.pi / 360, periodic=True)
    assert chart.check_projection(base) < 1e-12


def test_translation_domain_respects_balls():
    chart, group = circle_group()
    g = group.generators[0]
    rad = chart.radial
    dom = g.domain
    assert np.all(rad[dom] <= g.radius + 1e-9)
    assert np.all(g(dom) == dom + 36)


def test_local_isometry_validation():
    chart = line_chart(2 * math.pi, 12, 3)
    with pytest.raises(ConstructionError):
        LocalIsometry(chart, np.zeros(3, dtype=int), 1.0, 0.0)
    vm = np.full(chart.n, -1)
    vm[0] = 0  # chart edge lies outside a small domain ball
    with pytest.raises(ConstructionError):
        LocalIsometry(chart, vm, 0.5, 0.0)


def test_inverse_and_compose_are_partial_identities():
    chart, group = circle_group()
    g, gi = group.generators
    both = g.compose(gi)
    dom = both.domain
    assert dom.size > 0 and np.all(both(dom) == dom)


def test_associativity_defect_is_zero():
    _, group = circle_group()
    assert group.associativity_defect() == 0


def test_orbits_have_one_base_point():
    chart, group = circle_group()
    labels = group.orbit_labels()
    for lab in np.unique(labels):
        assert len(np.unique(chart.projection[labels == lab])) == 1


def test_quotient_matches_circle_exactly():
    chart, group = circle_group(steps=36)
    q = quotient_distance(chart, group)
    ref = sample_circle(2 * math.pi, 36)
    assert q.n == 36
    assert np.abs(q.space.dist - ref.dist).max() < 1e-12
    assert check_pseudometric(q)["passed"]


def test_quotient_vs_circle_gh():
    chart, group = circle_group(steps=36)
    q = quotient_distance(chart, group)
    ident = np.arange(36)
    res = verify_quotient_isometry(q, sample_circle(2 * math.pi, 36), slack=0.01, init_fwd=ident, init_bwd=ident)
    assert res["passed"] and res["gh_upper"] == pytest.approx(1e-3)


def test_representatives_recompute_quotient():
    chart, group = circle_group(steps=24)
    q = quotient_distance(chart, group)
    again = quotient_with_representatives(chart, q, q.representatives)
    assert np.allclose(again, q.space.dist)


def test_trivial_group_quotient_is_chart():
    chart = line_chart(1.0, 8, 2)
    q = quotient_distance(chart, trivial_group(chart))
    assert q.n == chart.n
    assert np.allclose(np.sort(q.space.dist.ravel()), np.sort(chart.distances.ravel()))


def test_non_injective_generator_is_caught():
    chart, group = circle_group(steps=36)
    g = group.generators[0]
    vm = np.array(g.vertex_map)
    dom = g.domain
    mid = dom[len(dom) // 2]
    vm[mid] = vm[mid + 1]
    bad = LocalIsometry(chart, vm, g.radius, g.tolerance, "bad")
    ok, witness = check_equivalence_relation(chart, Pseudogroup((bad,), chart))
    assert not ok and witness["property"] == "symmetry"
    with pytest.raises(QuotientError) as e:
        quotient_distance(chart, Pseudogroup((bad,), chart))
    assert e.value.witness["generator"] == "bad"


def test_distorting_generator_is_caught():
    # scaling the line by 2 about the center is not an isometry
    chart = line_chart(1.0, 20, 4)
    vm = np.full(chart.n, -1)
    c = chart.center
    for k in range(-10, 11):
        vm[c + k] = c + 2 * k
    g = LocalIsometry(chart, vm, 0.5, 0.01, "dilate")
    ok, witness = check_equivalence_relation(chart, Pseudogroup((g,), chart))
    assert not ok and witness["distortion"] > 0.01


def test_pseudogroup_needs_one_chart():
    a = line_chart(1.0, 8, 2)
    b = line_chart(1.0, 8, 2)
    ga = grid_translation(a, (1,), 0.5, 0.1)
    gb = grid_translation(b, (1,), 0.5, 0.1)
    with pytest.raises(UsageError):
        Pseudogroup((ga, gb))
    with pytest.raises(UsageError):
        Pseudogroup(())


def test_flat_torus_quotient():
    # the plane modulo the integer lattice, against the flat torus sample
    n = 6
    h = 1.0 / n
    chart = periodic_cover_chart(lambda p: np.broadcast_to(np.eye(2), (len(p), 2, 2)), (n, n), (h, h), (4, 4))
    R = float(chart.radial.max())
    gens = []
    for shift in ((n, 0), (0, n)):
        g = grid_translation(chart, shift, R, 1e-9)
        gens += [g, g.inverse()]
    q = quotient_distance(chart, Pseudogroup(tuple(gens), chart))
    assert q.n == n * n
    # unit-period torus: [0, 2 pi)^2 with both coefficients (1 / 2 pi)^2
    c = np.full(n, (1 / (2 * math.pi)) ** 2)
    torus = geodesic_distances(diagonal_torus_sample(c, c, n, n), 0)
    assert np.abs(q.space.dist - torus.dist).max() < 1e-12


def test_preimage_ball():
    chart = line_chart(2 * math.pi, 36, 3)
    base = sample_circle(2 * math.pi, 36)
    idx = chart_preimage_ball(chart, base, math.pi / 2)
    # each of the 3 periods contributes the 19 base points within a quarter turn
    assert len(np.unique(chart.projection[idx])) == 19
    with pytest.raises(UsageError):
        chart_preimage_ball(chart, sample_circle(1.0, 5), 1.0)


def test_generator_file_round_trip(tmp_path):
    chart, group = circle_group(steps=12)
    path = tmp_path / "gens.json"
    dump_pseudogroup(path, group)
    back = load_pseudogroup(path, chart)
    assert [g.name for g in back.generators] == [g.name for g in group.generators]
    for a, b in zip(back.generators, group.generators):
        assert np.array_equal(a.vertex_map, b.vertex_map)
    with pytest.raises(UsageError):
        load_pseudogroup(path, line_chart(1.0, 5, 2))


@settings(max_examples=15, deadline=None)
@given(steps=st.integers(6, 40), period=st.floats(0.5, 10.0))
def test_line_quotient_is_circle(steps, period):
    chart, group = circle_group(steps=steps, period=period)
    q = quotient_distance(chart, group)
    ref = sample_circle(period, steps)
    assert np.allclose(q.space.dist, ref.dist, atol=1e-12 * period)
    assert q.space.basepoint == 0


@settings(max_examples=15, deadline=None)
@given(steps=st.integers(6, 30), seed=st.integers(0, 1000))
def test_equivalence_relation_holds_for_translations(steps, seed):
    chart, group = circle_group(steps=steps)
    ok, witness = check_equivalence_relation(chart, group, seed=seed)
    assert ok, witness
