"""Ricci flow on left-invariant Nil metrics and on diagonal torus metrics, plus bound monitors.

Nil metrics ``A (dz - x dy)^2 + B dy^2 + C dx^2`` on the Heisenberg group are
diagonal in the left-invariant coframe ``(dx, dy, dz - x dy)``.  With the
orthonormal frame ``E1 = e1/sqrt(C)``, ``E2 = e2/sqrt(B)``, ``E3 = e3/sqrt(A)``
the only bracket is ``[E1, E2] = mu E3`` with ``mu^2 = A / (B C)``.  Milnor's
formulas then give

    Rc(E1, E1) = Rc(E2, E2) = -mu^2 / 2,   Rc(E3, E3) = mu^2 / 2,
    K(E1, E2) = -3 mu^2 / 4,   K(E1, E3) = K(E2, E3) = mu^2 / 4,

and ``dg/dt = -2 Rc`` becomes

    dA/dt = -A^2 / (B C),   dB/dt = A / C,   dC/dt = A / B.

Surfaces ``a(r) dr^2 + b(r) ds^2`` on ``[0, 2pi)^2`` have Gauss curvature
``K = -(1 / (2 sqrt(ab))) d/dr (b' / sqrt(ab))`` and flow by
``da/dt = -2 K a``, ``db/dt = -2 K b``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, HypothesisError, IntegrationError, UsageError
from .metric import RiemannianSample, diagonal_torus_sample, distances_from, grid_sample

TWO_PI = 2 * math.pi


# -- Nil ---------------------------------------------------------------------


@dataclass(frozen=True)
class NilMetric:
    A: float
    B: float
    C: float

    def __post_init__(self):
        for name in ("A", "B", "C"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"Nil coefficient {name}={v} must be positive and finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.A, self.B, self.C])


def nil_ricci_derivative(m: NilMetric) -> tuple[float, float, float]:
    A, B, C = m.A, m.B, m.C
    return (-A * A / (B * C), A / C, A / B)


def nil_sectional_curvatures(m: NilMetric) -> tuple[float, float, float]:
    """Sectional curvatures ``K(E1,E2), K(E1,E3), K(E2,E3)`` in the Milnor frame."""
    mu2 = m.A / (m.B * m.C)
    return (-0.75 * mu2, 0.25 * mu2, 0.25 * mu2)


def nil_curvature_bound(m: NilMetric) -> float:
    """Largest sectional curvature magnitude, ``3 A / (4 B C)``.

    It also dominates the Ricci eigenvalues ``+-A/(2BC)``.
    """
    return max(abs(k) for k in nil_sectional_curvatures(m))


def nil_first_integrals(m: NilMetric) -> tuple[float, float, float]:
    """``A*B``, ``A*C`` and ``B/C``, all constant along the flow."""
    return (m.A * m.B, m.A * m.C, m.B / m.C)


def nil_similarity_solution(m0: NilMetric, t: float) -> NilMetric:
    """Exact solution ``A0 u^{-1/3}, B0 u^{1/3}, C0 u^{1/3}`` with ``u = 1 + 3 A0 t / (B0 C0)``."""
    u = 1.0 + 3.0 * m0.A * t / (m0.B * m0.C)
    if u <= 0:
        raise DomainError("similarity solution undefined for this time")
    c = u ** (1.0 / 3.0)
    return NilMetric(m0.A / c, m0.B * c, m0.C * c)


def nil_similarity_derivative(m0: NilMetric, t: float) -> tuple[float, float, float]:
    k = 3.0 * m0.A / (m0.B * m0.C)
    u = 1.0 + k * t
    return (
        -m0.A * k / 3.0 * u ** (-4.0 / 3.0),
        m0.B * k / 3.0 * u ** (-2.0 / 3.0),
        m0.C * k / 3.0 * u ** (-2.0 / 3.0),
    )


def sqrt_law_closed_form(C1: float, C2: float, C3: float, t: float) -> NilMetric:
    """``A = (2t+C1)^{-1/2}``, ``B = C2 (2t+C1)^{1/2}``, ``C = C3 (2t+C1)^{1/2}``."""
    s = 2.0 * t + C1
    if s <= 0:
        raise DomainError(f"2t + C1 = {s} must be positive")
    return NilMetric(s**-0.5, C2 * s**0.5, C3 * s**0.5)


def sqrt_law_derivative(C1, C2, C3, t) -> tuple[float, float, float]:
    s = 2.0 * t + C1
    return (-(s**-1.5), C2 * s**-0.5, C3 * s**-0.5)


def nil_initial_from_constants(C1: float, C2: float, C3: float) -> NilMetric:
    """Initial data shared by both closed forms: the square-root law at ``t = 0``."""
    return sqrt_law_closed_form(C1, C2, C3, 0.0)


def closed_form_residual(metric_fn, derivative_fn, t_grid) -> float:
    """Max over ``t_grid`` of ``|d/dt g - F(g)| / |F(g)|`` (sup norms) for a candidate solution."""
    worst = 0.0
    for t in t_grid:
        lhs = np.asarray(derivative_fn(t))
        rhs = np.asarray(nil_ricci_derivative(metric_fn(t)))
        worst = max(worst, float(np.max(np.abs(lhs - rhs)) / np.max(np.abs(rhs))))
    return worst


def nil_residual_report(C1=1.0, C2=1.0, C3=1.0, t_grid=None) -> dict:
    """Residuals of the two closed forms under the implemented ODE.

    Exactly one form is expected to vanish; it is returned as ``oracle``.
    """
    ts = np.linspace(0.0, 2.0, 41) if t_grid is None else np.asarray(t_grid)
    m0 = nil_initial_from_constants(C1, C2, C3)
    sqrt_law = closed_form_residual(
        lambda t: sqrt_law_closed_form(C1, C2, C3, t),
        lambda t: sqrt_law_derivative(C1, C2, C3, t),
        ts,
    )
    similarity = closed_form_residual(
        lambda t: nil_similarity_solution(m0, t),
        lambda t: nil_similarity_derivative(m0, t),
        ts,
    )
    tol = 1e-10
    vanishing = [name for name, r in (("sqrt_law", sqrt_law), ("similarity", similarity)) if r < tol]
    return {
        "constants": [C1, C2, C3],
        "t_range": [float(ts[0]), float(ts[-1])],
        "residual_sqrt_law": sqrt_law,
        "residual_similarity": similarity,
        "tolerance": tol,
        "oracle": vanishing[0] if len(vanishing) == 1 else None,
        "exactly_one_vanishes": len(vanishing) == 1,
    }


# -- traces ------------------------------------------------------------------


@dataclass
class FlowTrace:
    """Recorded states of a flow.

    ``K_max[k]`` is the curvature sup-norm over the step endpoints in
    ``[t_{k-1}, t_k]`` (``K_max[0]`` is the initial value), so monitors see
    the whole integrated path, not only the recorded instants.
    """

    kind: str
    times: np.ndarray
    states: list
    K_max: np.ndarray
    dt: float
    C0: float | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.K_max = np.asarray(self.K_max, dtype=float)
        if self.times[0] != 0:
            raise UsageError("trace must start at t = 0")
        if len(self.states) != len(self.times) or len(self.K_max) != len(self.times):
            raise UsageError("times, states and K_max must have equal length")

    def index_of(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise UsageError(f"time {t} is not recorded in the trace")
        return k

    def coefficients(self, k: int) -> np.ndarray:
        """Metric coefficients in a frame that diagonalizes every state."""
        s = self.states[k]
        if isinstance(s, NilMetric):
            return s.as_array()
        return np.concatenate([s.a, s.b])

    def curvature_bound(self, t0: float, t1: float) -> float:
        lo, hi = sorted((t0, t1))
        i0, i1 = self.index_of(lo), self.index_of(hi)
        return float(self.K_max[i0 : i1 + 1].max())

    def curvature_violations(self) -> np.ndarray:
        if self.C0 is None:
            return np.zeros(0, dtype=int)
        return np.flatnonzero(self.K_max > self.C0)


def _rk4(rhs, y, h):
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate_nil(m0: NilMetric, T: float, dt: float, record_every: int = 1) -> FlowTrace:
    """Classical RK4 with ``ceil(T/dt)`` equal steps."""
    if T < 0:
        raise DomainError("horizon must be nonnegative")
    if dt <= 0:
        raise DomainError("time step must be positive")
    nsteps = int(math.ceil(T / dt - 1e-9)) if T > 0 else 0
    h = T / nsteps if nsteps else dt

    def rhs(y):
        A, B, C = y
        return np.array([-A * A / (B * C), A / C, A / B])

    y = m0.as_array()
    times, states, kmax = [0.0], [m0], [nil_curvature_bound(m0)]
    running = kmax[0]
    for n in range(1, nsteps + 1):
        y = _rk4(rhs, y, h)
        if not (np.all(np.isfinite(y)) and np.all(y > 0)):
            raise IntegrationError(f"Nil state left positivity at t={n * h:.6g}: {y}")
        m = NilMetric(*map(float, y))
        k = nil_curvature_bound(m)
        running = max(running, k)
        if n % record_every == 0 or n == nsteps:
            times.append(n * h if n < nsteps else float(T))
            states.append(m)
            kmax.append(running)
            running = k
    return FlowTrace("nil", np.array(times), states, np.array(kmax), h)


# -- warped surfaces ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WarpedSurfaceMetric:
    """``a(r) dr^2 + b(r) ds^2`` on ``[0, 2pi)^2`` with coefficients at ``n_r`` nodes."""

    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = np.array(self.a, dtype=float)
        b = np.array(self.b, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise DomainError("a and b must be 1D arrays of equal length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise DomainError("metric coefficients must be finite")
        if np.any(a <= 0) or np.any(b <= 0):
            raise DomainError("metric coefficients must be positive")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n_r(self) -> int:
        return len(self.a)

    @property
    def h(self) -> float:
        return TWO_PI / self.n_r

    @property
    def r(self) -> np.ndarray:
        return np.arange(self.n_r) * self.h

    @classmethod
    def from_profile(cls, f: Callable, lam: float, n_r: int) -> "WarpedSurfaceMetric":
        """Initial metric ``dr^2 + lam^2 f(r)^2 ds^2``."""
        if lam <= 0:
            raise DomainError("warp scale must be positive")
        r = np.arange(n_r) * TWO_PI / n_r
        fr = np.asarray(f(r), dtype=float) * np.ones(n_r)
        if np.any(fr <= 0):
            raise DomainError("warping function must be positive")
        return cls(np.ones(n_r), lam**2 * fr**2)

    def scaled(self, c2: float) -> "WarpedSurfaceMetric":
        return WarpedSurfaceMetric(self.a * c2, self.b * c2)

    def area_element(self) -> np.ndarray:
        return np.sqrt(self.a * self.b)

    def r_circumference(self) -> float:
        """Length of an ``r``-circle at fixed ``s`` (midpoint rule, as on sampled r-edges)."""
        a_mid = 0.5 * (self.a + np.roll(self.a, -1))
        return float(np.sum(np.sqrt(a_mid)) * self.h)


def _gauss_curvature_arrays(a: np.ndarray, b: np.ndarray, h: float) -> np.ndarray:
    nxt = np.roll(np.arange(len(a)), -1)
    return _curvature_indexed(a, b, h, nxt, np.argsort(nxt))


def _curvature_indexed(a, b, h, nxt, prv):
    # flux through the midpoint j+1/2, with midpoint coefficients averaged
    a_mid = 0.5 * (a + a[nxt])
    b_mid = 0.5 * (b + b[nxt])
    flux = (b[nxt] - b) / (h * np.sqrt(a_mid * b_mid))
    return -(flux - flux[prv]) / (2.0 * h * np.sqrt(a * b))


def gauss_curvature(m: WarpedSurfaceMetric) -> np.ndarray:
    """Gauss curvature on the r-grid; the flux form makes ``sum K dA`` telescope to zero."""
    if m.n_r < 16:
        raise DomainError("need at least 16 r-grid points")
    return _gauss_curvature_arrays(m.a, m.b, m.h)


def total_curvature(m: WarpedSurfaceMetric) -> float:
    """``sum K dA`` over the torus (``s`` contributes a factor ``2 pi``)."""
    return float(np.sum(gauss_curvature(m) * m.area_element()) * m.h * TWO_PI)


def stable_dt(m: WarpedSurfaceMetric) -> float:
    """Parabolic step budget ``h^2 / (8 max(1, K_max))``."""
    kmax = float(np.max(np.abs(gauss_curvature(m))))
    return m.h**2 / (8.0 * max(1.0, kmax))


def integrate_warped_surface(m0: WarpedSurfaceMetric, T: float, dt: float | None = None, times=None) -> FlowTrace:
    """RK4 for ``(a, b)' = -2 K (a, b)``, recording at ``times`` (default 11 points on ``[0, T]``)."""
    if T < 0:
        raise DomainError("horizon must be nonnegative")
    if m0.n_r < 16:
        raise DomainError("need at least 16 r-grid points")
    h = m0.h
    budget0 = stable_dt(m0)
    if dt is None:
        dt = budget0
    if dt <= 0:
        raise DomainError("time step must be positive")
    if dt > budget0 * (1 + 1e-12):
        raise DomainError(f"dt={dt:.3g} exceeds the stability budget {budget0:.3g}")
    out = np.linspace(0.0, T, 11) if times is None else np.asarray(times, dtype=float)
    if out[0] != 0 or np.any(np.diff(out) <= 0) or out[-1] > T * (1 + 1e-12):
        raise DomainError("output times must start at 0, ascend, and stay within [0, T]")

    nxt = np.roll(np.arange(m0.n_r), -1)
    prv = np.roll(np.arange(m0.n_r), 1)

    def curv(y):
        return _curvature_indexed(y[0], y[1], h, nxt, prv)

    y = np.stack([m0.a, m0.b])
    K = curv(y)
    t = 0.0
    states, kmax = [m0], [float(np.abs(K).max())]
    used_dt = 0.0
    for t_next in out[1:]:
        span = t_next - t
        nsub = max(1, int(math.ceil(span / dt - 1e-9)))
        step = span / nsub
        used_dt = max(used_dt, step)
        running = float(np.abs(K).max())
        for n in range(nsub):
            # classical RK4, reusing the curvature at the current state for the first stage
            k1 = -2.0 * K * y
            k2 = -2.0 * curv(y + 0.5 * step * k1) * (y + 0.5 * step * k1)
            y2 = y + 0.5 * step * k2
            k3 = -2.0 * curv(y2) * y2
            y3 = y + step * k3
            k4 = -2.0 * curv(y3) * y3
            y = y + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not (np.all(np.isfinite(y)) and np.all(y > 0)):
                raise IntegrationError(f"warped metric left positivity near t={t + (n + 1) * step:.6g}")
            K = curv(y)
            k = float(np.abs(K).max())
            if step > h * h / (8.0 * max(1.0, k)) * (1 + 1e-12):
                raise IntegrationError(
                    f"curvature grew to {k:.4g} at t={t + (n + 1) * step:.6g}; step {step:.3g} is no longer stable"
                )
            running = max(running, k)
        t = float(t_next)
        states.append(WarpedSurfaceMetric(y[0].copy(), y[1].copy()))
        kmax.append(running)
    return FlowTrace("warped", out, states, np.array(kmax), used_dt or dt)


def warped_sampler(n_s: int):
    """Sampler turning a warped state into an ``n_r x n_s`` torus grid."""

    def build(m: WarpedSurfaceMetric) -> RiemannianSample:
        return diagonal_torus_sample(m.a, m.b, m.n_r, n_s)

    return build


def nil_coordinate_metric(m: NilMetric, points: np.ndarray) -> np.ndarray:
    """Matrices of ``A (dz - x dy)^2 + B dy^2 + C dx^2`` in ``(x, y, z)`` coordinates."""
    x = points[:, 0]
    G = np.zeros((len(points), 3, 3))
    G[:, 0, 0] = m.C
    G[:, 1, 1] = m.A * x * x + m.B
    G[:, 1, 2] = G[:, 2, 1] = -m.A * x
    G[:, 2, 2] = m.A
    return G


def nil_box_sampler(n: int = 8, extent: float = 1.0):
    """Sampler on the box ``[0, extent]^3`` with ``n`` points per axis (6-neighbour stencil)."""
    step = extent / (n - 1)

    def build(m: NilMetric) -> RiemannianSample:
        return grid_sample((n, n, n), (step,) * 3, (False,) * 3, lambda p: nil_coordinate_metric(m, p))

    return build


# -- bound monitors -------------------------------------------------------------


def containment_radius(t: float) -> float:
    """``r(t) = 1 / (1 + (e^{2t} - 1)^{1/2})``."""
    if t < 0:
        raise DomainError("time must be nonnegative")
    return 1.0 / (1.0 + math.sqrt(math.expm1(2.0 * t)))


@dataclass(frozen=True)
class BoundParams:
    """Curvature bound ``C0``, closeness ``delta``, time window ``eta`` and horizon ``T``."""

    C0: float
    delta: float
    eta: float
    T: float

    @classmethod
    def from_delta(cls, C0: float, delta: float, T: float) -> "BoundParams":
        if C0 <= 0 or delta <= 0:
            raise DomainError("C0 and delta must be positive")
        return cls(C0, delta, math.log1p(delta) / (2.0 * C0), T)

    @staticmethod
    def r_of_t(t: float) -> float:
        return containment_radius(t)


def check_metric_equivalence_bounds(
    trace: FlowTrace,
    params: BoundParams,
    t0: float,
    t: float,
    sampler=None,
    sources: Sequence[int] = (0,),
    slack: float = 0.0,
    rtol: float = 1e-3,
) -> dict:
    """Coefficient-ratio, additive-modulus and distance bounds between two times."""
    span = abs(t - t0)
    k_seen = trace.curvature_bound(t0, t)
    if k_seen > params.C0:
        raise HypothesisError(f"curvature {k_seen:.6g} exceeds C0={params.C0:.6g} on [{t0}, {t}]")
    g0 = trace.coefficients(trace.index_of(t0))
    g1 = trace.coefficients(trace.index_of(t))
    ratio = g1 / g0
    hi = math.exp(2.0 * params.C0 * span)
    lo = 1.0 / hi
    ratio_ok = bool(np.all(ratio >= lo * (1 - rtol)) and np.all(ratio <= hi * (1 + rtol)))
    delta_t = math.expm1(2.0 * params.C0 * span)
    rel_change = np.abs(ratio - 1.0)
    modulus_ok = bool(np.all(rel_change <= delta_t * (1 + rtol) + 1e-15))
    rec = {
        "t0": t0,
        "t": t,
        "C0": params.C0,
        "ratio_min": float(ratio.min()),
        "ratio_max": float(ratio.max()),
        "bound_lo": lo,
        "bound_hi": hi,
        "margin_ratio": float(min(math.log(hi) - math.log(ratio.max()), math.log(ratio.min()) - math.log(lo))),
        "delta_t": delta_t,
        "margin_modulus": float(delta_t - rel_change.max()),
        "ratio_ok": ratio_ok,
        "modulus_ok": modulus_ok,
    }
    if span < params.eta:
        # inside the modulus window the declared delta must also work
        rec["modulus_declared_delta"] = bool(np.all(rel_change <= params.delta))
    passed = ratio_ok and modulus_ok and rec.get("modulus_declared_delta", True)
    if sampler is not None:
        s0 = sampler(trace.states[trace.index_of(t0)])
        s1 = sampler(trace.states[trace.index_of(t)])
        d0 = distances_from(s0, sources)
        d1 = distances_from(s1, sources)
        allowed = math.sqrt(delta_t) * d0 + slack
        excess = np.abs(d1 - d0) - allowed
        rec["distance_ok"] = bool(np.all(excess <= 0))
        rec["margin_distance"] = float(-excess.max())
        rec["slack"] = slack
        passed = passed and rec["distance_ok"]
    rec["passed"] = passed
    return rec


def check_ball_containment(
    trace: FlowTrace, sampler, rho: float, t: float, basepoint: int = 0, slack: float = 0.0
) -> dict:
    """Both ball inclusions with radius ``r(t) rho`` (inner radius shrunk by ``slack``)."""
    if rho <= 0:
        raise DomainError("radius must be positive")
    k_seen = trace.curvature_bound(0.0, t)
    if k_seen > 1.0:
        raise HypothesisError(f"curvature {k_seen:.6g} exceeds 1 on [0, {t}]")
    r = containment_radius(t)
    inner = r * rho - slack
    d0 = distances_from(sampler(trace.states[0]), [basepoint])[0]
    dt_ = distances_from(sampler(trace.states[trace.index_of(t)]), [basepoint])[0]
    rec = {"t": t, "rho": rho, "r_t": r, "inner_radius": inner, "slack": slack}
    if inner <= 0:
        rec.update(margin_forward=math.inf, margin_backward=math.inf, passed=True, vacuous=True)
        return rec
    fwd_pts = dt_ < inner  # B_{g(t)}(0, r rho) inside B_{g(0)}(0, rho)
    bwd_pts = d0 < inner  # B_{g(0)}(0, r rho) inside B_{g(t)}(0, rho)
    m_fwd = rho - float(d0[fwd_pts].max())
    m_bwd = rho - float(dt_[bwd_pts].max())
    rec.update(
        margin_forward=m_fwd,
        margin_backward=m_bwd,
        n_inner_forward=int(fwd_pts.sum()),
        n_inner_backward=int(bwd_pts.sum()),
        passed=bool(m_fwd > 0 and m_bwd > 0),
        vacuous=False,
    )
    return rec


def check_lipschitz_equivalence(trace: FlowTrace, C: float | None = None) -> dict:
    """Two-sided bound ``e^{-C' t} g(0) <= g(t) <= e^{C' t} g(0)`` with ``C' = 2C``.

    The hypothesis ``|dg/dt [V,V]| <= C g[V,V]`` is checked on the recorded
    states through log-coefficient difference quotients.
    """
    logs = np.log(np.stack([trace.coefficients(k) for k in range(len(trace.times))]))
    dt = np.diff(trace.times)
    measured = float(np.max(np.abs(np.diff(logs, axis=0)) / dt[:, None])) if len(dt) else 0.0
    if C is not None and measured > C * (1 + 1e-9):
        raise HypothesisError(f"measured log-derivative {measured:.6g} exceeds C={C:.6g}")
    C_use = measured if C is None else C
    Cp = 2.0 * C_use
    dev = np.abs(logs - logs[0])
    allowed = Cp * trace.times[:, None]
    margin = float(np.min(allowed - dev)) if len(trace.times) > 1 else math.inf
    return {
        "C": C_use,
        "C_measured": measured,
        "C_prime": Cp,
        "margin": margin,
        "passed": bool(np.all(dev <= allowed + 1e-15)),
    }


def sweep_ratio_bounds(trace: FlowTrace, C0: float, rtol: float = 1e-3) -> dict:
    """Coefficient-ratio bounds over every pair of recorded times."""
    if float(trace.K_max.max()) > C0:
        raise HypothesisError(f"curvature {trace.K_max.max():.6g} exceeds C0={C0:.6g}")
    logs = np.log(np.stack([trace.coefficients(k) for k in range(len(trace.times))]))
    slack = math.log1p(rtol)
    worst = math.inf
    worst_pair = None
    for k in range(len(trace.times) - 1):
        dev = np.abs(logs[k + 1 :] - logs[k]).max(axis=1)
        allowed = 2.0 * C0 * (trace.times[k + 1 :] - trace.times[k]) + slack
        m = allowed - dev
        j = int(np.argmin(m))
        if m[j] < worst:
            worst, worst_pair = float(m[j]), (float(trace.times[k]), float(trace.times[k + 1 + j]))
    return {"C0": C0, "n_pairs": len(trace.times) * (len(trace.times) - 1) // 2,
            "margin": worst, "worst_pair": worst_pair, "passed": bool(worst >= 0) if worst_pair else True}


def check_modulus_window(trace: FlowTrace, C0: float, delta: float) -> dict:
    """Every pair closer than ``eta = log(1+delta)/(2 C0)`` satisfies ``|g(t)/g(t0) - 1| <= delta``."""
    params = BoundParams.from_delta(C0, delta, float(trace.times[-1]))
    coeffs = np.stack([trace.coefficients(k) for k in range(len(trace.times))])
    worst = 0.0
    n_pairs = 0
    for k in range(len(trace.times)):
        close = np.flatnonzero((trace.times > trace.times[k]) & (trace.times - trace.times[k] < params.eta))
        if close.size:
            n_pairs += close.size
            worst = max(worst, float(np.abs(coeffs[close] / coeffs[k] - 1.0).max()))
    return {"delta": delta, "C0": C0, "eta": params.eta, "n_pairs": n_pairs,
            "max_change": worst, "margin": delta - worst, "passed": bool(worst <= delta)}
