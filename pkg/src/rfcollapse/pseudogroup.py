"""Local isometry actions on sampled covers and the quotient distances they induce.

A cover chart is a grid sample of (a patch of) a universal cover together with
the projection to the base sample.  Group elements are vertex maps, partial
where the image leaves the chart.  The quotient distance between classes is
the minimum cover distance over sampled class representatives.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConstructionError, QuotientError, SizeCapError, UsageError
from .gh import gh_upper_bound
from .metric import (
    MAX_POINTS,
    FiniteMetricSpace,
    RiemannianSample,
    distances_from,
    grid_sample,
    sample_interval,
)


@dataclass(frozen=True, eq=False)
class CoverChart:
    """Grid sample of a cover patch with its projection to base vertex ids."""

    sample: RiemannianSample
    projection: np.ndarray
    center: int
    n_base: int

    def __post_init__(self):
        proj = np.asarray(self.projection, dtype=int)
        if proj.shape != (self.sample.n,):
            raise ConstructionError("projection needs one base index per cover vertex")
        if proj.min() < 0 or proj.max() >= self.n_base:
            raise ConstructionError("projection indices out of range")
        if not 0 <= self.center < self.sample.n:
            raise ConstructionError("chart center out of range")
        object.__setattr__(self, "projection", proj)

    @property
    def n(self) -> int:
        return self.sample.n

    @cached_property
    def radial(self) -> np.ndarray:
        return distances_from(self.sample, [self.center])[0]

    @cached_property
    def distances(self) -> np.ndarray:
        """All-pairs cover distances (symmetrized)."""
        if self.n > MAX_POINTS:
            raise SizeCapError(f"chart has {self.n} vertices; cap is {MAX_POINTS}")
        d = distances_from(self.sample, np.arange(self.n))
        d = np.minimum(d, d.T)
        np.fill_diagonal(d, 0.0)
        d.setflags(write=False)
        return d

    def space(self) -> FiniteMetricSpace:
        return FiniteMetricSpace(np.array(self.distances), self.center, labels=self.sample.coords)

    def check_projection(self, base: RiemannianSample, tol: float = 1e-12) -> float:
        """Largest length mismatch between cover edges and their projected base edges.

        Raises if a cover edge projects to a non-edge of the base.
        """
        base_len = {}
        for (u, v), ell in zip(base.edges, base.lengths):
            base_len[(min(u, v), max(u, v))] = ell
        worst = 0.0
        for (u, v), ell in zip(self.sample.edges, self.sample.lengths):
            pu, pv = self.projection[u], self.projection[v]
            key = (min(pu, pv), max(pu, pv))
            if key not in base_len:
                raise ConstructionError(f"cover edge ({u}, {v}) projects to non-edge {key}")
            worst = max(worst, abs(base_len[key] - ell))
        if worst > tol:
            raise ConstructionError(f"projection changes edge lengths by up to {worst:.3g}")
        return worst


def line_chart(period: float = 2 * math.pi, steps_per_period: int = 360, periods: int = 3) -> CoverChart:
    """Segment of length ``periods * period`` centred at 0, projecting to ``steps_per_period`` circle nodes."""
    h = period / steps_per_period
    n = steps_per_period * periods + 1
    origin = -period * periods / 2
    sample = sample_interval(n, h, origin=origin)
    center = n // 2
    proj = (np.arange(n) - center) % steps_per_period
    return CoverChart(sample, proj, center, steps_per_period)


def periodic_cover_chart(metric_at, base_shape, spacing, periods, origin=None) -> CoverChart:
    """Non-periodic grid over ``periods[k]`` copies of a periodic base grid.

    ``metric_at`` must be periodic with the base periods.  The chart center is
    the middle vertex; with even ``periods`` it projects to base vertex 0.
    """
    base_shape = tuple(int(s) for s in base_shape)
    shape = tuple(s * p for s, p in zip(base_shape, periods))
    if origin is None:
        origin = [-(s // 2) * h for s, h in zip(shape, spacing)]
    sample = grid_sample(shape, spacing, (False,) * len(shape), metric_at, origin=origin)
    multi = np.stack(np.unravel_index(np.arange(sample.n), shape), axis=1)
    center_multi = tuple(s // 2 for s in shape)
    base_multi = (multi - np.asarray(center_multi)) % np.asarray(base_shape)
    proj = np.ravel_multi_index(tuple(base_multi.T), base_shape)
    center = int(np.ravel_multi_index(center_multi, shape))
    return CoverChart(sample, proj, center, int(np.prod(base_shape)))


@dataclass(frozen=True, eq=False)
class LocalIsometry:
    """Partial vertex map (``-1`` where undefined) acting on a ball about the chart center.

    ``radius`` is the domain radius; images must stay within twice that.
    ``continuous`` is germ metadata only.
    """

    chart: CoverChart
    vertex_map: np.ndarray
    radius: float
    tolerance: float
    name: str = ""
    continuous: bool = True

    def __post_init__(self):
        vm = np.asarray(self.vertex_map, dtype=int)
        if vm.shape != (self.chart.n,):
            raise ConstructionError("vertex map must have one entry per chart vertex")
        if vm.min() < -1 or vm.max() >= self.chart.n:
            raise ConstructionError("vertex map entries out of range")
        vm = vm.copy()
        vm.setflags(write=False)
        object.__setattr__(self, "vertex_map", vm)
        rad = self.chart.radial
        dom = np.flatnonzero(vm >= 0)
        slop = 1e-9 * max(1.0, self.radius)
        if np.any(rad[dom] > self.radius + slop):
            raise ConstructionError(f"{self.name or 'map'} is defined outside its domain ball")
        if np.any(rad[vm[dom]] > 2 * self.radius + slop):
            raise ConstructionError(f"{self.name or 'map'} sends points outside the radius-r ball")

    @property
    def domain(self) -> np.ndarray:
        return np.flatnonzero(self.vertex_map >= 0)

    def __call__(self, x):
        return self.vertex_map[x]

    def compose(self, inner: "LocalIsometry") -> "LocalIsometry":
        """``self o inner`` where both are defined."""
        vm = inner.vertex_map
        out = np.where(vm >= 0, self.vertex_map[np.maximum(vm, 0)], -1)
        # the composite must still live on the inner map's domain ball
        return LocalIsometry(
            self.chart,
            out,
            min(self.radius, inner.radius),
            self.tolerance + inner.tolerance,
            f"{self.name}*{inner.name}",
            self.continuous and inner.continuous,
        )

    def inverse(self) -> "LocalIsometry":
        dom = self.domain
        img = self.vertex_map[dom]
        if len(np.unique(img)) != len(img):
            raise QuotientError(f"{self.name or 'map'} is not injective", {"generator": self.name})
        inv = np.full(self.chart.n, -1)
        inv[img] = dom
        # the inverse lives on the image ball, of twice the domain radius
        return LocalIsometry(self.chart, inv, 2 * self.radius, self.tolerance, f"{self.name}^-1", self.continuous)

    def max_distortion(self, region=None) -> tuple[float, tuple[int, int] | None]:
        """Largest ``|d(fx, fy) - d(x, y)|`` over pairs in ``region`` where defined."""
        idx = self.domain if region is None else np.intersect1d(self.domain, region)
        if len(idx) < 2:
            return 0.0, None
        D = self.chart.distances
        img = self.vertex_map[idx]
        err = np.abs(D[np.ix_(img, img)] - D[np.ix_(idx, idx)])
        k = int(np.argmax(err))
        a, b = divmod(k, len(idx))
        return float(err.flat[k]), (int(idx[a]), int(idx[b]))


def grid_translation(chart: CoverChart, shift, radius: float, tolerance: float, name: str = "") -> LocalIsometry:
    """Translation by a multi-index ``shift``, defined where source and image fit the chart and balls."""
    shape = chart.sample.shape
    multi = np.stack(np.unravel_index(np.arange(chart.n), shape), axis=1)
    tgt = multi + np.asarray(shift, dtype=int)
    ok = np.all((tgt >= 0) & (tgt < np.asarray(shape)), axis=1)
    vm = np.full(chart.n, -1)
    vm[ok] = np.ravel_multi_index(tuple(tgt[ok].T), shape)
    rad = chart.radial
    slop = 1e-9 * max(1.0, radius)
    ok &= rad <= radius + slop
    ok &= rad[vm.clip(0)] <= 2 * radius + slop
    vm[~ok] = -1
    return LocalIsometry(chart, vm, radius, tolerance, name or f"shift{tuple(int(s) for s in shift)}")


@dataclass(frozen=True, eq=False)
class Pseudogroup:
    generators: tuple
    chart: CoverChart = None

    def __post_init__(self):
        gens = tuple(self.generators)
        chart = self.chart
        for g in gens:
            if chart is None:
                chart = g.chart
            if g.chart is not chart:
                raise UsageError("all generators must act on the same chart")
        if chart is None:
            raise UsageError("a pseudogroup without generators needs a chart")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "chart", chart)

    @property
    def tolerance(self) -> float:
        return max((g.tolerance for g in self.generators), default=0.0)

    def identity(self) -> LocalIsometry:
        r = float(self.chart.radial.max())
        return LocalIsometry(self.chart, np.arange(self.chart.n), r, 0.0, "id")

    def compose(self, a: LocalIsometry, b: LocalIsometry) -> LocalIsometry:
        return a.compose(b)

    def inverse(self, a: LocalIsometry) -> LocalIsometry:
        return a.inverse()

    def associativity_defect(self) -> int:
        """Number of points where ``(ab)c`` and ``a(bc)`` are both defined and differ."""
        bad = 0
        for a in self.generators:
            for b in self.generators:
                for c in self.generators:
                    left = a.compose(b).compose(c).vertex_map
                    right = a.compose(b.compose(c)).vertex_map
                    both = (left >= 0) & (right >= 0)
                    bad += int(np.count_nonzero(left[both] != right[both]))
        return bad

    def orbit_labels(self) -> np.ndarray:
        """Connected components of the relation ``x ~ g x`` over all generators."""
        n = self.chart.n
        rows, cols = [np.arange(n)], [np.arange(n)]
        for g in self.generators:
            dom = g.domain
            rows.append(dom)
            cols.append(g.vertex_map[dom])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        adj = coo_matrix((np.ones(len(r)), (r, c)), shape=(n, n))
        _, labels = connected_components(adj, directed=False)
        return labels


def trivial_group(chart: CoverChart) -> Pseudogroup:
    return Pseudogroup((), chart)


def check_equivalence_relation(chart: CoverChart, group: Pseudogroup, radius=None, tol=None, n_triples=256, seed=0):
    """Check that ``x ~ g x`` is an equivalence relation on a ball about the chart center.

    Returns ``(ok, witness)``; the witness names the first failing property.
    ``radius`` defaults to half the smallest generator domain radius.
    """
    if group.chart is not chart:
        raise UsageError("group acts on a different chart")
    if radius is None:
        radius = 0.5 * min((g.radius for g in group.generators), default=float(chart.radial.max()))
    if tol is None:
        tol = group.tolerance
    tol = tol + 1e-9 * max(1.0, radius)
    region = np.flatnonzero(chart.radial <= radius + 1e-9 * max(1.0, radius))

    ident = group.identity()
    if np.any(ident(region) != region):
        return False, {"property": "reflexivity"}

    for k, g in enumerate(group.generators):
        vm = g.vertex_map[region]
        img = vm[vm >= 0]
        if len(np.unique(img)) != len(img):
            vals, counts = np.unique(img, return_counts=True)
            dup = vals[counts > 1][0]
            pair = tuple(int(x) for x in region[vm == dup][:2])
            return False, {"property": "symmetry", "generator": g.name, "index": k, "pair": pair, "reason": "not injective"}
        err, pair = g.max_distortion(region)
        if err > tol:
            return False, {"property": "symmetry", "generator": g.name, "index": k, "pair": pair, "distortion": err}

    rng = np.random.default_rng(seed)
    gens = group.generators
    if gens and len(region) >= 2:
        D = chart.distances
        for _ in range(n_triples):
            a, b = gens[rng.integers(len(gens))], gens[rng.integers(len(gens))]
            x, y = rng.choice(region, size=2, replace=False)
            ab = a.compose(b)
            fx, fy = ab(x), ab(y)
            if fx < 0 or fy < 0:
                continue
            err = abs(D[fx, fy] - D[x, y])
            if err > 2 * tol:
                return False, {
                    "property": "transitivity",
                    "generators": (a.name, b.name),
                    "triple": (int(x), int(b(x)), int(fx)),
                    "distortion": float(err),
                }
    return True, None


@dataclass(frozen=True, eq=False)
class QuotientSpace:
    space: FiniteMetricSpace
    class_map: np.ndarray
    representatives: tuple

    @property
    def n(self) -> int:
        return self.space.n


def quotient_distance(chart: CoverChart, group: Pseudogroup, check: bool = True, radius=None) -> QuotientSpace:
    """Classes of the generated relation with ``d([x],[y]) = min d(gx, g'y)`` over sampled members.

    Classes are ordered by (smallest projected base index, smallest member);
    the basepoint is the class of the chart center.
    """
    if check:
        ok, witness = check_equivalence_relation(chart, group, radius)
        if not ok:
            raise QuotientError(f"not an equivalence relation: {witness['property']}", witness)
    labels = group.orbit_labels()
    D = chart.distances
    n_cls = int(labels.max()) + 1
    members = [np.flatnonzero(labels == c) for c in range(n_cls)]
    keys = [(int(chart.projection[m].min()), int(m.min())) for m in members]
    order = sorted(range(n_cls), key=lambda c: keys[c])
    rank = np.empty(n_cls, dtype=int)
    rank[order] = np.arange(n_cls)
    class_map = rank[labels]
    # sort vertices by class so per-class minima become reduceat segments
    perm = np.argsort(class_map, kind="stable")
    starts = np.searchsorted(class_map[perm], np.arange(n_cls))
    rowmin = np.minimum.reduceat(D[perm], starts, axis=0)  # (n_cls, n)
    dbar = np.minimum.reduceat(rowmin[:, perm], starts, axis=1)
    dbar = np.minimum(dbar, dbar.T)
    np.fill_diagonal(dbar, 0.0)
    reps = tuple(members[c] for c in order)
    space = FiniteMetricSpace(dbar, int(class_map[chart.center]), tol_tri=2 * group.tolerance)
    return QuotientSpace(space, class_map, reps)


def quotient_with_representatives(chart: CoverChart, q: QuotientSpace, reps) -> np.ndarray:
    """Quotient matrix recomputed from the given member subsets (one per class)."""
    D = chart.distances
    k = len(reps)
    out = np.zeros((k, k))
    for a in range(k):
        rows = D[reps[a]]
        for b in range(a + 1, k):
            out[a, b] = out[b, a] = rows[:, reps[b]].min()
    return out


def check_pseudometric(q: QuotientSpace) -> dict:
    """Symmetry, zero self-distance and triangle inequality within the space's tolerance."""
    d = q.space.dist
    tri = q.space.triangle_violation()
    rec = {
        "symmetric": bool(np.array_equal(d, d.T)),
        "zero_diagonal": bool(np.all(np.diag(d) == 0)),
        "triangle_violation": tri,
        "tol_tri": q.space.tol_tri,
    }
    rec["passed"] = rec["symmetric"] and rec["zero_diagonal"] and tri <= q.space.tol_tri + 1e-12 * max(1.0, q.space.diameter())
    return rec


def chart_preimage_ball(chart: CoverChart, base: FiniteMetricSpace, radius: float) -> np.ndarray:
    """Cover vertices whose projection lies in the closed base ball about the base basepoint."""
    if base.n != chart.n_base:
        raise UsageError(f"base space has {base.n} points but the chart projects to {chart.n_base}")
    if radius < 0:
        raise UsageError("radius must be nonnegative")
    inside = base.dist[base.basepoint] <= radius
    return np.flatnonzero(inside[chart.projection])


def verify_quotient_isometry(
    q: QuotientSpace, reference: FiniteMetricSpace, budget: int = 2000, seed: int = 0, slack: float = 0.0,
    init_fwd=None, init_bwd=None, eps_grid=None,
) -> dict:
    """GH upper bound between a quotient and its expected model, asserted against ``slack``."""
    est = gh_upper_bound(q.space, reference, budget=budget, seed=seed, eps_grid=eps_grid, init_fwd=init_fwd, init_bwd=init_bwd)
    return {
        "gh_lower": est.lower,
        "gh_upper": est.upper,
        "bound": slack,
        "margin": slack - est.upper,
        "passed": bool(est.upper <= slack),
        "estimate": est,
    }


# -- generator files ----------------------------------------------------------------------


def dump_pseudogroup(path, group: Pseudogroup) -> None:
    doc = {
        "n_vertices": group.chart.n,
        "generators": [
            {
                "name": g.name,
                "vertex_map": g.vertex_map.tolist(),
                "radius": g.radius,
                "tolerance": g.tolerance,
                "continuous": g.continuous,
            }
            for g in group.generators
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def load_pseudogroup(path, chart: CoverChart) -> Pseudogroup:
    doc = json.loads(Path(path).read_text())
    if doc.get("n_vertices") != chart.n:
        raise UsageError(f"generator file is for {doc.get('n_vertices')} vertices, chart has {chart.n}")
    gens = []
    for k, g in enumerate(doc.get("generators", [])):
        try:
            gens.append(
                LocalIsometry(chart, np.asarray(g["vertex_map"]), float(g["radius"]), float(g["tolerance"]),
                              g.get("name", f"g{k}"), bool(g.get("continuous", True)))
            )
        except KeyError as e:
            raise ConstructionError(f"generator {k} is missing field {e}") from None
    return Pseudogroup(tuple(gens), chart)
