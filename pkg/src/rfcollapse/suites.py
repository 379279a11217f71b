"""Self-contained verification suites behind ``rfcollapse verify``."""
from __future__ import annotations

import math

import numpy as np

from .flow import (
    BoundParams,
    NilMetric,
    WarpedSurfaceMetric,
    check_metric_equivalence_bounds,
    containment_radius,
    integrate_nil,
    integrate_warped_surface,
    nil_first_integrals,
    nil_residual_report,
    total_curvature,
)
from .gh import (
    SQRT2,
    default_eps_grid,
    gh_brute_force,
    gh_lower_bound,
    gh_upper_bound,
    grid_step_at,
)
from .metric import random_metric_space, sample_circle
from .pseudogroup import (
    Pseudogroup,
    check_pseudometric,
    grid_translation,
    line_chart,
    quotient_distance,
    verify_quotient_isometry,
)
from .scenarios import Report, _bound, _flag


def verify_gh_axioms(seed: int = 0, n_pairs: int = 20, budget: int = 2000) -> Report:
    """Oracle coherence, symmetry, self-distance and the universal bound on random small spaces."""
    rng = np.random.default_rng(seed)
    grid = default_eps_grid()
    rep = Report("gh-axioms", {"seed": seed, "n_pairs": n_pairs, "budget": budget})
    bad_order = bad_match = bad_sym = bad_univ = 0
    worst_self = 0.0
    for k in range(n_pairs):
        X = random_metric_space(int(rng.integers(1, 5)), rng)
        Y = random_metric_space(int(rng.integers(1, 5)), rng)
        lo = gh_lower_bound(X, Y, grid)
        brute = gh_brute_force(X, Y, grid)
        search = gh_upper_bound(X, Y, budget=budget, seed=k, eps_grid=grid)
        bad_order += lo > brute.upper
        bad_match += brute.upper != search.upper
        bad_sym += gh_brute_force(Y, X, grid).upper != brute.upper
        bad_univ += search.upper > SQRT2 + grid_step_at(grid, SQRT2)
        worst_self = max(worst_self, gh_brute_force(X, X, grid).upper)
    rep.assertions.append(_bound("lower_le_brute", bad_order, 0))
    rep.assertions.append(_bound("search_equals_brute", bad_match, 0))
    rep.assertions.append(_bound("symmetry", bad_sym, 0))
    rep.assertions.append(_bound("universal_bound", bad_univ, 0))
    rep.assertions.append(_bound("self_distance_grid_min", worst_self, float(grid[0])))
    return rep


def verify_flow_bounds(seed: int = 0) -> Report:
    """Nil similarity solution and first integrals, warped Gauss-Bonnet, and the metric-ratio bounds."""
    rep = Report("flow-bounds", {"seed": seed})
    m0 = NilMetric(1.0, math.sqrt(3), math.sqrt(3))
    tr = integrate_nil(m0, 1.0, 1e-3)
    rep.assertions.append(_bound("nil_similarity_A1", abs(tr.states[-1].A - 2 ** (-1 / 3)), 1e-8))
    inv = np.array([nil_first_integrals(s) for s in tr.states])
    rep.assertions.append(_bound("nil_first_integrals", float(np.abs(inv / inv[0] - 1).max()), 1e-9))
    C0 = float(tr.K_max.max())
    rec = check_metric_equivalence_bounds(tr, BoundParams.from_delta(C0, 0.1, 1.0), 0.0, 0.1)
    rep.assertions.append(_flag("nil_coefficient_ratio", rec["ratio_ok"], margin=rec["margin_ratio"]))
    w = integrate_warped_surface(WarpedSurfaceMetric.from_profile(lambda r: 2 + np.cos(r), 1.0, 64), 0.25)
    gb = max(abs(total_curvature(s)) for s in w.states)
    rep.assertions.append(_bound("gauss_bonnet", gb, 1e-4))
    rep.assertions.append(_bound("containment_radius_half", abs(containment_radius(math.log(math.sqrt(2))) - 0.5), 1e-15))
    return rep


def verify_nil_residual(seed: int = 0) -> Report:
    rep = Report("nil-residual", {"seed": seed})
    r = nil_residual_report()
    rep.extras["residuals"] = r
    rep.assertions.append(_flag("exactly_one_closed_form_vanishes", r["exactly_one_vanishes"], oracle=r["oracle"]))
    return rep


def verify_quotient(seed: int = 0) -> Report:
    """Line modulo 2 pi Z against the 360-point circle."""
    rep = Report("quotient", {"seed": seed})
    chart = line_chart()
    R = float(chart.radial.max())
    step = 2 * math.pi / 360
    g = grid_translation(chart, (360,), R, 2 * step, "2pi")
    q = quotient_distance(chart, Pseudogroup((g, g.inverse()), chart))
    pm = check_pseudometric(q)
    rep.assertions.append(_flag("pseudometric_axioms", pm["passed"], detail=pm))
    grid = default_eps_grid()
    ident = np.arange(q.n)
    res = verify_quotient_isometry(q, sample_circle(2 * math.pi, 360), seed=seed,
                                   slack=2 * step + grid_step_at(grid, 2 * step), init_fwd=ident, init_bwd=ident)
    rep.assertions.append(_bound("quotient_vs_circle", res["gh_upper"], res["bound"]))
    return rep


SUITES = {
    "gh-axioms": verify_gh_axioms,
    "flow-bounds": verify_flow_bounds,
    "nil-residual": verify_nil_residual,
    "quotient": verify_quotient,
}
