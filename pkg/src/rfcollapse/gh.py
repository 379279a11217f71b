"""Pointed Gromov-Hausdorff approximations and distance estimates.

An eps-approximation ``f: (X, x0) -> (Y, y0)`` must (a) eps-cover the target
ball ``B_Y(y0, 1/eps - eps)`` by the image of ``B_X(x0, 1/eps)`` and (b) have
distortion strictly below eps on ``B_X(x0, 1/eps)``.  Both windows move with
eps, so feasibility is tested at every grid value independently.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import HypothesisError, SizeCapError, UsageError
from .metric import FiniteMetricSpace, RiemannianSample, geodesic_distances, grid_slack

BRUTE_FORCE_CAP = 6
SQRT2 = math.sqrt(2.0)


def default_eps_grid(n: int = 64, lo: float = 1e-3, hi: float = 1.5) -> np.ndarray:
    return np.geomspace(lo, hi, n)


def grid_step_at(grid, value: float) -> float:
    """Width of the grid cell that contains ``value`` (last cell width beyond the ends)."""
    g = np.asarray(grid, dtype=float)
    k = int(np.searchsorted(g, value, side="right"))
    k = min(max(k, 1), len(g) - 1)
    return float(g[k] - g[k - 1])


@dataclass(frozen=True, eq=False)
class PointedMap:
    source: FiniteMetricSpace
    target: FiniteMetricSpace
    image: np.ndarray

    def __post_init__(self):
        img = np.asarray(self.image, dtype=int)
        if img.shape != (self.source.n,):
            raise UsageError(f"image has shape {img.shape}, source has {self.source.n} points")
        if img.min() < 0 or img.max() >= self.target.n:
            raise UsageError("image index out of range for the target space")
        if img[self.source.basepoint] != self.target.basepoint:
            raise UsageError("map does not send basepoint to basepoint")
        img.setflags(write=False)
        object.__setattr__(self, "image", img)

    @classmethod
    def identity(cls, X: FiniteMetricSpace) -> "PointedMap":
        return cls(X, X, np.arange(X.n))

    @classmethod
    def constant(cls, X: FiniteMetricSpace, Y: FiniteMetricSpace) -> "PointedMap":
        return cls(X, Y, np.full(X.n, Y.basepoint))


@dataclass
class GhEstimate:
    lower: float
    upper: float
    witness_fwd: PointedMap | None
    witness_bwd: PointedMap | None
    eps_grid: np.ndarray
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "lower": float(self.lower),
            "upper": float(self.upper),
            "eps_grid": [float(e) for e in self.eps_grid],
            "witness_fwd": None if self.witness_fwd is None else self.witness_fwd.image.tolist(),
            "witness_bwd": None if self.witness_bwd is None else self.witness_bwd.image.tolist(),
        }


def check_eps_approximation(f: PointedMap, eps: float) -> bool:
    """Whether ``f`` is an eps-pointed GH approximation (strict inequalities throughout)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    X, Y, img = f.source, f.target, f.image
    ball = np.flatnonzero(X.radial < 1.0 / eps)
    fb = img[ball]
    distortion = np.abs(X.dist[np.ix_(ball, ball)] - Y.dist[np.ix_(fb, fb)])
    if distortion.size and not np.all(distortion < eps):
        return False
    targets = np.flatnonzero(Y.radial < 1.0 / eps - eps)
    if targets.size == 0:
        return True
    near = Y.dist[np.ix_(targets, fb)] < eps
    return bool(np.all(near.any(axis=1)))


# -- exhaustive oracle ------------------------------------------------------


def _feasible_maps_at(X: FiniteMetricSpace, Y: FiniteMetricSpace, eps: float):
    """Lexicographically first eps-approximation X -> Y, or None, by enumeration.

    Only points inside the source ball constrain the map; the others are sent
    to target index 0, which keeps the full image array lexicographically
    smallest.
    """
    ball = np.flatnonzero(X.radial < 1.0 / eps)
    free = ball[ball != X.basepoint]
    m = len(free)
    choices = np.array(list(itertools.product(range(Y.n), repeat=m)), dtype=int).reshape(Y.n**m, m)
    maps = np.empty((len(choices), len(ball)), dtype=int)
    pos_free = np.searchsorted(ball, free)
    maps[:, pos_free] = choices
    maps[:, np.searchsorted(ball, X.basepoint)] = Y.basepoint

    dX = X.dist[np.ix_(ball, ball)]
    ok = np.all(np.abs(dX[None] - Y.dist[maps[:, :, None], maps[:, None, :]]) < eps, axis=(1, 2))
    targets = np.flatnonzero(Y.radial < 1.0 / eps - eps)
    if targets.size:
        near = Y.dist[targets][:, maps] < eps  # (targets, maps, ball)
        ok &= np.all(near.any(axis=2), axis=0)
    hits = np.flatnonzero(ok)
    if hits.size == 0:
        return None
    image = np.zeros(X.n, dtype=int)
    image[X.basepoint] = Y.basepoint
    image[ball] = maps[hits[0]]
    return PointedMap(X, Y, image)


def gh_brute_force(X: FiniteMetricSpace, Y: FiniteMetricSpace, eps_grid=None) -> GhEstimate:
    """Exact grid-restricted pointed GH distance by enumerating all pointed maps."""
    if X.n > BRUTE_FORCE_CAP or Y.n > BRUTE_FORCE_CAP:
        raise SizeCapError(
            f"brute force limited to {BRUTE_FORCE_CAP} points per space "
            f"(got {X.n} and {Y.n}); map count grows as n^n"
        )
    grid = _as_grid(eps_grid)
    for k, eps in enumerate(grid):
        fwd = _feasible_maps_at(X, Y, eps)
        if fwd is None:
            continue
        bwd = _feasible_maps_at(Y, X, eps)
        if bwd is None:
            continue
        lower = float(grid[k - 1]) if k > 0 else 0.0
        return GhEstimate(lower, float(eps), fwd, bwd, grid)
    return GhEstimate(float(grid[-1]), math.inf, None, None, grid)


# -- necessary-condition lower bound ----------------------------------------


def _ecc_below(radial: np.ndarray, R: float) -> float:
    return float(radial[radial < R].max())


def gh_lower_bound(X: FiniteMetricSpace, Y: FiniteMetricSpace, eps_grid=None) -> float:
    """Largest grid eps all of whose predecessors are provably infeasible.

    Any eps-approximation ``X -> Y`` maps ``B_X(x0, 1/eps)`` radially within
    eps, so ``ecc_X(1/eps) - eps < rad_Y`` is necessary (and symmetrically).
    Returns 0 when the first grid value already passes the test.
    """
    return radial_lower_bound(X.radial, Y.radial, eps_grid)


def radial_lower_bound(radial_x, radial_y, eps_grid=None) -> float:
    """``gh_lower_bound`` from the basepoint distance profiles alone."""
    grid = _as_grid(eps_grid)
    rx, ry = np.asarray(radial_x, dtype=float), np.asarray(radial_y, dtype=float)
    rad_x, rad_y = float(rx.max()), float(ry.max())
    for k, eps in enumerate(grid):
        ok = _ecc_below(rx, 1 / eps) - eps < rad_y and _ecc_below(ry, 1 / eps) - eps < rad_x
        if ok:
            return float(grid[k]) if k > 0 else 0.0
    return float(grid[-1])


def window_grid(eps_grid, R: float) -> np.ndarray:
    """Grid values eps with ``1/eps + eps <= R``.

    At such eps an approximation only ever looks at points within ``R`` of
    the basepoints: source balls have radius ``1/eps`` and images of a
    distortion-below-eps map stay within ``1/eps + eps``.  Restricting a space
    to its closed ``R``-ball therefore leaves feasibility at these eps
    unchanged, which lets large samples be searched on a window.
    """
    grid = _as_grid(eps_grid)
    out = grid[1.0 / grid + grid <= R]
    if out.size == 0:
        raise ValueError(f"no grid value fits a window of radius {R}")
    return out


# -- stochastic search ------------------------------------------------------


class _Profile:
    """Evaluates at once, for every grid eps, whether a map is an eps-approximation.

    Sorting both spaces by distance to the basepoint turns every ball into a
    prefix, so prefix maxima/minima give all grid values in O(n_X^2 + n_X n_Y).
    """

    def __init__(self, X: FiniteMetricSpace, Y: FiniteMetricSpace, grid: np.ndarray):
        self.X, self.Y, self.grid = X, Y, grid
        self.ox = np.argsort(X.radial, kind="stable")
        self.oy = np.argsort(Y.radial, kind="stable")
        self.dXo = X.dist[np.ix_(self.ox, self.ox)]
        self.dYcols = Y.dist[:, self.oy]
        rx = X.radial[self.ox]
        ry = Y.radial[self.oy]
        self.kx = np.searchsorted(rx, 1.0 / grid, side="left")  # >= 1: basepoint radius 0
        self.ky = np.searchsorted(ry, 1.0 / grid - grid, side="left")

    def evaluate(self, image: np.ndarray):
        """Return (pass mask over grid, worst violation over grid)."""
        img = image[self.ox]
        delta = np.abs(self.dXo - self.Y.dist[np.ix_(img, img)])
        rowmax = np.max(np.tril(delta), axis=1)
        dist_pref = np.maximum.accumulate(rowmax)[self.kx - 1]
        cov = np.minimum.accumulate(self.dYcols[img], axis=0)
        cov = np.maximum.accumulate(cov, axis=1)
        has_t = self.ky > 0
        cov_pref = np.full(len(self.grid), -np.inf)
        cov_pref[has_t] = cov[self.kx[has_t] - 1, self.ky[has_t] - 1]
        worst = np.maximum(dist_pref, cov_pref)
        return worst < self.grid, worst


def _greedy_profile_map(X: FiniteMetricSpace, Y: FiniteMetricSpace) -> np.ndarray:
    """Send each point to the target point whose basepoint distance matches best."""
    mismatch = np.abs(X.radial[:, None] - Y.radial[None, :])
    img = np.argmin(mismatch, axis=1)
    img[X.basepoint] = Y.basepoint
    return img


def _lex_less(a: np.ndarray, b: np.ndarray) -> bool:
    diff = np.flatnonzero(a != b)
    return bool(diff.size) and a[diff[0]] < b[diff[0]]


class _Chain:
    """Simulated annealing over pointed maps X -> Y with single-point moves."""

    def __init__(self, X, Y, grid, seed, inits, budget, floor_index):
        self.X, self.Y, self.grid = X, Y, grid
        self.profile = _Profile(X, Y, grid)
        self.rng = np.random.default_rng(np.random.SeedSequence([int(seed), X.n, Y.n]))
        self.budget = max(int(budget), 1)
        self.floor = floor_index
        self.cache: dict[bytes, tuple[np.ndarray, float]] = {}
        self.union = np.zeros(len(grid), dtype=bool)
        self.union_size = 0
        self.changed = False
        self.best_maps: dict[int, np.ndarray] = {}
        self.movable = np.array([i for i in range(X.n) if i != X.basepoint], dtype=int)
        self.current = None
        self.energy = math.inf
        for img in inits:
            e = self._visit(np.asarray(img, dtype=int))
            if e < self.energy:
                self.current, self.energy = np.array(img, dtype=int), e
        self.step_count = 0

    def _visit(self, image: np.ndarray) -> float:
        key = image.tobytes()
        hit = self.cache.get(key)
        if hit is not None:
            return hit[1]
        passes, worst = self.profile.evaluate(image)
        idx = np.flatnonzero(passes[self.floor :]) + self.floor
        if idx.size:
            k = int(idx[0])
            prev = k - 1
            frac = 0.0
            if prev >= self.floor:
                frac = min(max((worst[prev] - self.grid[prev]) / self.grid[prev], 0.0), 1.0) * 0.999
            energy = k + frac
        else:
            energy = float(len(self.grid))
        for k in np.flatnonzero(passes):
            k = int(k)
            stored = self.best_maps.get(k)
            if stored is None or _lex_less(image, stored):
                self.best_maps[k] = image.copy()
        self.union |= passes
        self.union_size = int(self.union.sum())
        self.cache[key] = (passes, energy)
        return energy

    def _draws(self):
        # one block of random numbers per budget keeps the per-step cost low
        n = self.budget
        rng = self.rng
        self._who = rng.integers(len(self.movable), size=n) if self.movable.size else None
        self._kind = rng.random(n)
        self._target = rng.integers(self.Y.n, size=n)
        self._refs = rng.integers(self.X.n, size=(n, min(4, self.X.n)))
        self._accept = rng.random(n)

    def step(self):
        if self.movable.size == 0:
            return
        i = self.step_count % self.budget
        if i == 0:
            self._draws()
        self.step_count += 1
        temp = 0.01 ** (self.step_count / self.budget)
        x = int(self.movable[self._who[i]])
        prop = self.current.copy()
        if self._kind[i] < 0.5:
            prop[x] = int(self._target[i])
        else:
            refs = self._refs[i]
            mismatch = np.max(np.abs(self.X.dist[x, refs][None, :] - self.Y.dist[:, prop[refs]]), axis=1)
            prop[x] = int(np.argmin(mismatch))
        before = self.union_size
        e = self._visit(prop)
        self.changed = self.union_size != before
        if e <= self.energy or self._accept[i] < math.exp(-(e - self.energy) / temp):
            self.current, self.energy = prop, e


def gh_upper_bound(
    X: FiniteMetricSpace,
    Y: FiniteMetricSpace,
    budget: int = 2000,
    seed: int = 0,
    eps_grid=None,
    init_fwd=None,
    init_bwd=None,
) -> GhEstimate:
    """Certified upper bound on the grid-restricted pointed GH distance.

    Two annealing chains (X -> Y and Y -> X) each run for at most ``budget``
    steps; every map they visit contributes the set of grid eps it certifies.
    The result is the smallest eps certified in both directions, with the
    lexicographically smallest witnesses found.  The constant maps are always
    evaluated, so any grid eps >= sqrt(2) is certified.  The search stops early
    once it reaches the necessary-condition lower bound.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    grid = _as_grid(eps_grid)
    lower = gh_lower_bound(X, Y, grid)
    floor = int(np.searchsorted(grid, lower, side="left")) if lower > 0 else 0

    def inits(A, B, extra):
        out = [np.full(A.n, B.basepoint), _greedy_profile_map(A, B)]
        if extra is not None:
            img = extra.image if isinstance(extra, PointedMap) else PointedMap(A, B, extra).image
            out.append(np.asarray(img, dtype=int))
        return out

    fwd = _Chain(X, Y, grid, seed, inits(X, Y, init_fwd), budget, floor)
    bwd = _Chain(Y, X, grid, seed, inits(Y, X, init_bwd), budget, floor)

    def joint():
        both = np.flatnonzero(fwd.union & bwd.union)
        return int(both[0]) if both.size else None

    it = 0
    best = joint()
    while it < budget and (best is None or best > floor):
        fwd.step()
        bwd.step()
        it += 1
        if fwd.changed or bwd.changed:
            best = joint()
    if best is None:
        return GhEstimate(lower, math.inf, None, None, grid, it)
    wf = PointedMap(X, Y, fwd.best_maps[best])
    wb = PointedMap(Y, X, bwd.best_maps[best])
    return GhEstimate(min(lower, float(grid[best])), float(grid[best]), wf, wb, grid, it)


def _as_grid(eps_grid) -> np.ndarray:
    grid = default_eps_grid() if eps_grid is None else np.asarray(eps_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("eps grid must be a nonempty 1D sequence")
    if np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ValueError("eps grid must be positive and strictly ascending")
    return grid


# -- checkable bounds --------------------------------------------------


def check_triangle_factor2(X1, X2, X3, eps_grid=None) -> dict:
    """Approximate triangle inequality with factor 2, checked by brute force.

    The bound can be read with the sum or the max of the two distances; the sum reading is
    asserted (it is implied by the max reading) and both margins are recorded.
    """
    grid = _as_grid(eps_grid)
    d12 = gh_brute_force(X1, X2, grid).upper
    d23 = gh_brute_force(X2, X3, grid).upper
    d13 = gh_brute_force(X1, X3, grid).upper
    rec = {"d12": d12, "d23": d23, "d13": d13}
    if not (d12 <= 0.5 and d23 <= 0.5):
        rec.update(status="hypothesis not met", passed=None)
        return rec
    bound_sum = 2 * (d12 + d23)
    bound_max = 2 * max(d12, d23)
    rec.update(
        status="checked",
        bound_sum=bound_sum,
        bound_max=bound_max,
        margin_sum=bound_sum - d13,
        margin_max=bound_max - d13,
        passed=bool(d13 <= bound_sum),
    )
    return rec


def check_associativity(Xs, Xps, eps: float, eps_grid=None, slack: float = 0.0) -> dict:
    """Finite-scale evidence for the 4*eps associativity of convergence.

    The last elements of the two lists stand in for the limits.
    """
    if len(Xs) != len(Xps) or not Xs:
        raise UsageError("need two nonempty lists of equal length")
    grid = _as_grid(eps_grid)
    pair = [gh_brute_force(a, b, grid).upper for a, b in zip(Xs, Xps)]
    rec = {"pair_distances": pair, "eps": eps}
    if not all(d <= eps for d in pair):
        rec.update(status="hypothesis not met", passed=None)
        return rec
    limit = pair[-1]
    bound = 4 * eps + slack
    rec.update(status="checked", limit_distance=limit, bound=bound, margin=bound - limit, passed=bool(limit <= bound))
    return rec


def metrics_close_gh_bound(delta: float) -> float:
    """GH bound for metrics within a factor ``1 + delta`` of each other."""
    return 2 * delta**0.25 * (1 + delta) ** 0.5


def verify_metrics_close_bound(
    sample: RiemannianSample,
    perturbed: RiemannianSample,
    delta: float,
    budget: int = 500,
    seed: int = 0,
    basepoint: int = 0,
    vertices=None,
    slack: float | None = None,
    eps_grid=None,
) -> dict:
    """Check the GH bound for two metrics within ``(1+delta)^{+-1}`` of each other."""
    if sample.shape != perturbed.shape or not np.array_equal(sample.edges, perturbed.edges):
        raise UsageError("samples must share the same grid")
    ratio = perturbed.lengths / sample.lengths
    lo, hi = (1 + delta) ** -0.5, (1 + delta) ** 0.5
    fuzz = 1e-12
    if np.any(ratio < lo * (1 - fuzz)) or np.any(ratio > hi * (1 + fuzz)):
        raise HypothesisError(
            f"edge length ratios in [{ratio.min():.6g}, {ratio.max():.6g}] exceed "
            f"[{lo:.6g}, {hi:.6g}]; the metrics are not (1+delta)-close"
        )
    X = geodesic_distances(sample, basepoint, vertices)
    Y = geodesic_distances(perturbed, basepoint, vertices)
    ident = np.arange(X.n)
    est = gh_upper_bound(X, Y, budget=budget, seed=seed, eps_grid=eps_grid, init_fwd=ident, init_bwd=ident)
    # one mesh budget for each of the two sampled metrics
    s = 2 * grid_slack(sample) if slack is None else slack
    bound = metrics_close_gh_bound(delta) + s
    return {
        "delta": delta,
        "gh_lower": est.lower,
        "gh_upper": est.upper,
        "bound": bound,
        "slack": s,
        "margin": bound - est.upper,
        "passed": bool(est.upper <= bound),
        "estimate": est,
    }
