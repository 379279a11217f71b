"""Finite pointed metric spaces and graph-geodesic sampling of Riemannian metrics.

A ``FiniteMetricSpace`` is a dense distance matrix with a basepoint.  Riemannian
metrics on periodic grids are discretized into a ``RiemannianSample`` (a
weighted stencil graph) and turned into finite metric spaces with Dijkstra.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from .errors import ConstructionError, DomainError, SizeCapError, UsageError

MAX_POINTS = 4096

# Worst-case ratio of 8-neighbour path length to Euclidean length
# (attained at 22.5 degrees): cos(pi/8) + (sqrt(2) - 1) sin(pi/8).
ANISOTROPY_8 = math.cos(math.pi / 8) + (math.sqrt(2) - 1) * math.sin(math.pi / 8)

# Floyd-style triangle checks on Dijkstra output can miss by a few ulps
# because path sums are accumulated in a different order.
_ROUNDING = 16 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class FiniteMetricSpace:
    """Pointed finite metric space ``(X, d, x0)``."""

    dist: np.ndarray
    basepoint: int = 0
    labels: np.ndarray | None = None
    tol_tri: float = 0.0

    def __post_init__(self):
        d = np.array(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
            raise ConstructionError(f"distance matrix must be square and nonempty, got {d.shape}")
        n = d.shape[0]
        if n > MAX_POINTS:
            raise SizeCapError(f"{n} points exceeds the cap of {MAX_POINTS}")
        if not np.all(np.isfinite(d)):
            raise ConstructionError("distance matrix has non-finite entries")
        if np.any(d < 0):
            raise ConstructionError("distance matrix has negative entries")
        if np.any(np.diag(d) != 0):
            raise ConstructionError("distance matrix has nonzero diagonal")
        if not np.array_equal(d, d.T):
            raise ConstructionError("distance matrix is not symmetric")
        if not 0 <= int(self.basepoint) < n:
            raise ConstructionError(f"basepoint {self.basepoint} out of range for n={n}")
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)
        object.__setattr__(self, "basepoint", int(self.basepoint))
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if len(labels) != n:
                raise ConstructionError("labels must have one entry per point")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.dist.shape[0]

    def __len__(self):
        return self.n

    @property
    def radial(self) -> np.ndarray:
        """Distances from the basepoint."""
        return self.dist[self.basepoint]

    def diameter(self) -> float:
        return float(self.dist.max())

    def triangle_violation(self) -> float:
        """Largest ``d[i,k] - d[i,j] - d[j,k]`` over all triples (O(n^3))."""
        d = self.dist
        worst = -math.inf
        for j in range(self.n):
            worst = max(worst, float(np.max(d - (d[:, j, None] + d[None, j, :]))))
        return worst

    def check_invariants(self) -> None:
        """Raise ``ConstructionError`` unless the triangle inequality holds within ``tol_tri``."""
        allowed = self.tol_tri + _ROUNDING * max(self.diameter(), 1.0)
        excess = self.triangle_violation()
        if excess > allowed:
            raise ConstructionError(f"triangle inequality violated by {excess:.3e} (allowed {allowed:.3e})")

    def subspace(self, indices, basepoint: int | None = None) -> "FiniteMetricSpace":
        """Restriction to ``indices``; ``basepoint`` is an index into the original space."""
        idx = np.asarray(indices, dtype=int)
        bp = self.basepoint if basepoint is None else basepoint
        where = np.flatnonzero(idx == bp)
        if where.size == 0:
            raise UsageError("subspace must contain the basepoint")
        labels = None if self.labels is None else self.labels[idx]
        return FiniteMetricSpace(self.dist[np.ix_(idx, idx)], int(where[0]), labels, self.tol_tri)

    def scaled(self, factor: float) -> "FiniteMetricSpace":
        return FiniteMetricSpace(self.dist * factor, self.basepoint, self.labels, self.tol_tri * factor)


@dataclass(frozen=True, eq=False)
class RiemannianSample:
    """A metric discretized on a regular grid as a weighted stencil graph.

    Vertices are numbered in C order over ``shape``.  ``edges`` holds vertex
    pairs and ``lengths`` the Riemannian length of each edge, evaluated at the
    edge midpoint.
    """

    shape: tuple[int, ...]
    spacing: tuple[float, ...]
    periodic: tuple[bool, ...]
    coords: np.ndarray
    edges: np.ndarray
    lengths: np.ndarray

    def __post_init__(self):
        lengths = np.asarray(self.lengths, dtype=float)
        if not np.all(np.isfinite(lengths)):
            raise ConstructionError("non-finite edge length")
        if np.any(lengths <= 0):
            raise ConstructionError("edge lengths must be strictly positive")

    @property
    def n(self) -> int:
        return int(np.prod(self.shape))

    @property
    def dim(self) -> int:
        return len(self.shape)

    def index(self, *multi) -> int:
        return int(np.ravel_multi_index(tuple(int(m) for m in multi), self.shape))

    def max_edge(self) -> float:
        return float(self.lengths.max())

    def graph(self):
        n = self.n
        e = self.edges
        g = coo_matrix((self.lengths, (e[:, 0], e[:, 1])), shape=(n, n))
        return g.tocsr()


def stencil_offsets(dim: int) -> list[tuple[int, ...]]:
    """Half-stencil offsets: 2-neighbour (1D), 8-neighbour (2D), 6-neighbour (3D)."""
    if dim == 1:
        return [(1,)]
    if dim == 2:
        return [(1, 0), (0, 1), (1, 1), (1, -1)]
    if dim == 3:
        return [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
    raise DomainError(f"dimension {dim} not supported")


def grid_sample(
    shape: Sequence[int],
    spacing: Sequence[float],
    periodic: Sequence[bool],
    metric_at: Callable[[np.ndarray], np.ndarray],
    origin: Sequence[float] | None = None,
) -> RiemannianSample:
    """Discretize a Riemannian metric on a regular grid.

    ``metric_at`` maps an ``(m, dim)`` array of points to ``(m, dim, dim)``
    metric matrices.  It is called at edge midpoints; for periodic axes the
    midpoint of a wrap-around edge lies just past the last grid line, so
    ``metric_at`` must itself be periodic there.
    """
    shape = tuple(int(s) for s in shape)
    dim = len(shape)
    spacing = np.asarray(spacing, dtype=float)
    origin = np.zeros(dim) if origin is None else np.asarray(origin, dtype=float)
    periodic = tuple(bool(p) for p in periodic)
    if np.any(spacing <= 0):
        raise DomainError("grid spacing must be positive")
    if any(p and s < 3 for p, s in zip(periodic, shape)):
        raise ConstructionError("periodic axes need at least 3 grid lines")
    n = int(np.prod(shape))
    grid_idx = np.stack(np.unravel_index(np.arange(n), shape), axis=1)
    coords = origin + grid_idx * spacing

    edges, lengths = [], []
    for off in stencil_offsets(dim):
        off = np.asarray(off)
        nbr = grid_idx + off
        keep = np.ones(n, dtype=bool)
        for ax in range(dim):
            if periodic[ax]:
                nbr[:, ax] %= shape[ax]
            else:
                keep &= (nbr[:, ax] >= 0) & (nbr[:, ax] < shape[ax])
        src = np.flatnonzero(keep)
        dst = np.ravel_multi_index(tuple(nbr[keep].T), shape)
        step = off * spacing
        mid = coords[src] + 0.5 * step
        G = np.asarray(metric_at(mid), dtype=float)
        sq = np.einsum("i,mij,j->m", step, G, step)
        if np.any(~np.isfinite(sq)):
            raise ConstructionError("metric produced non-finite edge length")
        if np.any(sq <= 0):
            raise ConstructionError("metric is not positive definite along an edge")
        edges.append(np.stack([src, dst], axis=1))
        lengths.append(np.sqrt(sq))
    return RiemannianSample(
        shape=shape,
        spacing=tuple(float(s) for s in spacing),
        periodic=periodic,
        coords=coords,
        edges=np.concatenate(edges),
        lengths=np.concatenate(lengths),
    )


def sample_warped_torus(f, lam: float, n_r: int, n_s: int) -> RiemannianSample:
    """Sample ``dr^2 + lam^2 f(r)^2 ds^2`` on the periodic grid ``[0, 2pi)^2``.

    ``f`` is a callable of ``r`` or an array of its values on the ``n_r`` grid
    nodes (midpoint values are then taken as neighbour averages).
    """
    if lam <= 0:
        raise DomainError("warp scale must be positive")
    if n_r < 8 or n_s < 8:
        raise DomainError("grid sizes must be at least 8")
    h_r = 2 * math.pi / n_r
    if callable(f):
        f_call = f
        if np.any(np.asarray(f(np.arange(2 * n_r) * h_r / 2)) <= 0):
            raise DomainError("warping function must be positive")
    else:
        f_nodes = np.asarray(f, dtype=float)
        if f_nodes.shape != (n_r,):
            raise DomainError("warping values must have one entry per r node")
        if np.any(f_nodes <= 0):
            raise DomainError("warping function must be positive")
        f_call = _periodic_interp(f_nodes, h_r)
    return diagonal_torus_sample(lambda r: np.ones_like(r), lambda r: lam**2 * f_call(r) ** 2, n_r, n_s)


def diagonal_torus_sample(a, b, n_r: int, n_s: int) -> RiemannianSample:
    """Sample ``a(r) dr^2 + b(r) ds^2`` on ``[0, 2pi)^2``; ``a``, ``b`` callables or node arrays."""
    h_r = 2 * math.pi / n_r
    h_s = 2 * math.pi / n_s
    a_call = a if callable(a) else _periodic_interp(np.asarray(a, float), h_r)
    b_call = b if callable(b) else _periodic_interp(np.asarray(b, float), h_r)

    def metric_at(p):
        r = p[:, 0]
        G = np.zeros((len(p), 2, 2))
        G[:, 0, 0] = a_call(r)
        G[:, 1, 1] = b_call(r)
        return G

    return grid_sample((n_r, n_s), (h_r, h_s), (True, True), metric_at)


def _periodic_interp(values: np.ndarray, h: float):
    """Piecewise-linear periodic interpolant of node values (exact at nodes, averages at midpoints)."""
    n = len(values)

    def call(r):
        x = np.asarray(r, dtype=float) / h
        j = np.floor(x).astype(int)
        w = x - j
        return (1 - w) * values[j % n] + w * values[(j + 1) % n]

    return call


def sample_interval(n: int, step: float, periodic: bool = False, coef=None, origin: float = 0.0) -> RiemannianSample:
    """1D sample with ``n`` vertices; ``coef(x)`` is the metric coefficient (default 1)."""

    def metric_at(p):
        c = np.ones(len(p)) if coef is None else np.asarray(coef(p[:, 0]), dtype=float)
        return c[:, None, None]

    return grid_sample((n,), (step,), (periodic,), metric_at, origin=(origin,))


def distances_from(sample: RiemannianSample, sources) -> np.ndarray:
    """Graph-geodesic distances from each source to every vertex, shape ``(len(sources), n)``."""
    src = np.atleast_1d(np.asarray(sources, dtype=int))
    d = dijkstra(sample.graph(), directed=False, indices=src)
    if not np.all(np.isfinite(d)):
        raise ConstructionError("sample graph is disconnected")
    return np.atleast_2d(d)


def geodesic_distances(sample: RiemannianSample, basepoint: int, vertices=None) -> FiniteMetricSpace:
    """All-pairs graph-geodesic distances over ``vertices`` (default: every vertex).

    Distances are computed on the full sample graph and then restricted, so a
    landmark subset keeps the fine-grid geometry.  ``basepoint`` is a vertex
    id and must belong to ``vertices``.
    """
    verts = np.arange(sample.n) if vertices is None else np.asarray(vertices, dtype=int)
    if len(verts) > MAX_POINTS:
        raise SizeCapError(f"{len(verts)} vertices exceeds the cap of {MAX_POINTS}; pass a landmark subset")
    where = np.flatnonzero(verts == basepoint)
    if where.size == 0:
        raise UsageError("basepoint must be one of the requested vertices")
    d = distances_from(sample, verts)[:, verts]
    d = np.minimum(d, d.T)  # Dijkstra is symmetric up to summation order
    np.fill_diagonal(d, 0.0)
    return FiniteMetricSpace(d, int(where[0]), labels=sample.coords[verts])


def metric_ball(X: FiniteMetricSpace, center: int, rho: float) -> FiniteMetricSpace:
    """Open ball ``{q : d(center, q) < rho}`` pointed at ``center``."""
    if not rho > 0:
        raise DomainError("ball radius must be positive")
    if not 0 <= center < X.n:
        raise UsageError(f"center {center} out of range")
    idx = np.flatnonzero(X.dist[center] < rho)
    return X.subspace(idx, basepoint=center)


def rebase(X: FiniteMetricSpace, new_basepoint: int) -> FiniteMetricSpace:
    if not 0 <= new_basepoint < X.n:
        raise UsageError(f"basepoint {new_basepoint} out of range for n={X.n}")
    return FiniteMetricSpace(X.dist, new_basepoint, X.labels, X.tol_tri)


def sample_circle(L: float, n: int) -> FiniteMetricSpace:
    """``n`` equally spaced points on a circle of circumference ``L``."""
    if not L > 0:
        raise DomainError("circumference must be positive")
    if n < 3:
        raise DomainError("need at least 3 points")
    k = np.arange(n)
    steps = np.abs(k[:, None] - k[None, :])
    steps = np.minimum(steps, n - steps)
    return FiniteMetricSpace(steps * (L / n), 0, labels=k * (L / n))


def grid_slack(sample: RiemannianSample, scale: float = 0.0) -> float:
    """Discretization budget for distances up to ``scale`` measured on ``sample``.

    One mesh width (the longest edge) covers vertex mis-registration and
    midpoint quadrature; ``(ANISOTROPY_8 - 1) * scale`` covers the stencil's
    directional bias for off-axis paths.  Axis-aligned measurements use
    ``scale=0``.
    """
    return sample.max_edge() + (ANISOTROPY_8 - 1.0) * scale


def farthest_point_landmarks(X: FiniteMetricSpace, k: int, seed: int = 0) -> np.ndarray:
    """``k`` landmark indices by farthest-point sampling, starting at the basepoint.

    Ties are broken by a seeded permutation so the choice is reproducible.
    """
    if k < 1:
        raise DomainError("need at least one landmark")
    k = min(k, X.n)
    order = np.random.default_rng(seed).permutation(X.n)
    chosen = [X.basepoint]
    mind = X.dist[X.basepoint].copy()
    for _ in range(k - 1):
        best = order[np.argmax(mind[order])]
        chosen.append(int(best))
        mind = np.minimum(mind, X.dist[best])
    return np.asarray(chosen)


def random_metric_space(n: int, rng: np.random.Generator, high: float = 1.0) -> FiniteMetricSpace:
    """Random metric on ``n`` points: uniform entries in ``[0, high]`` closed under shortest paths."""
    if n == 1:
        return FiniteMetricSpace(np.zeros((1, 1)))
    w = rng.uniform(0.0, high, size=(n, n))
    w = np.triu(w, 1)
    w = w + w.T
    # zero-length entries would collapse points; keep them strictly positive
    w[w == 0] = high * 1e-3
    np.fill_diagonal(w, 0.0)
    for k, i, j in itertools.product(range(n), repeat=3):
        if w[i, k] + w[k, j] < w[i, j]:
            w[i, j] = w[i, k] + w[k, j]
    return FiniteMetricSpace(np.minimum(w, w.T), 0)


def write_distance_matrix(path, X: FiniteMetricSpace) -> None:
    """Write ``n <count> basepoint <index>`` followed by rows at 17 significant digits."""
    lines = [f"n {X.n} basepoint {X.basepoint}"]
    lines += [" ".join(f"{v:.17g}" for v in row) for row in X.dist]
    Path(path).write_text("\n".join(lines) + "\n")


def read_distance_matrix(path) -> FiniteMetricSpace:
    text = Path(path).read_text().split("\n")
    head = text[0].split()
    if len(head) != 4 or head[0] != "n" or head[2] != "basepoint":
        raise ConstructionError(f"bad header in {path}: {text[0]!r}")
    n, bp = int(head[1]), int(head[3])
    rows = [line.split() for line in text[1 : n + 1]]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise ConstructionError(f"{path}: expected {n} rows of {n} values")
    return FiniteMetricSpace(np.array(rows, dtype=float), bp)
