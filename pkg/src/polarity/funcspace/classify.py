"""Heuristic class membership checks (Cvx0, S1, S2, ray behaviour).

None of these properties is decidable from finitely many samples; every
verdict here is advisory and the diagnostics say so.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import NotDifferentiable, OutOfBox
from .catalog import AnalyticConvexFunction
from .grid import GridFunction, midpoint_convexity_violation


@dataclass
class ClassReport:
    in_cvx0: bool
    in_S1: bool
    in_S2: bool
    ray_linearity_rays: list = field(default_factory=list)
    nonlinear_at_infinity: bool = False
    diagnostics: str = ""
    zero_set_rays: list = field(default_factory=list)


@dataclass
class SampleSpec:
    """Where the analytic checks look: points drawn from [-radius, radius]^n.

    ``ray_reach`` is the largest ray parameter probed by the
    nonlinearity-at-infinity test (grid inputs stop at the box instead).
    """

    dim: int = 1
    radius: float = 2.0
    n_points: int = 200
    n_directions: int = 16
    ray_reach: float = 1e4
    seed: int = 0


def ray_directions(dim: int, n: int = 16) -> np.ndarray:
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        th = 2 * np.pi * np.arange(n) / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    # Fibonacci sphere plus the coordinate axes
    k = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * k / n)
    th = np.pi * (1 + 5 ** 0.5) * k
    pts = np.stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)], axis=1)
    return np.vstack([np.eye(3), -np.eye(3), pts])


def _ray_values(f, d, ts):
    X = ts[:, None] * d[None, :]
    if isinstance(f, GridFunction):
        inside = f.contains(X)
        X, ts = X[inside], ts[inside]
        return ts, f.evaluate(X) if len(X) else np.array([])
    return ts, np.asarray(f.evaluate(X), dtype=float)


def _ray_extent(f, d, reach):
    if isinstance(f, GridFunction):
        ext = math.inf
        for di, (lo, hi) in zip(d, f.box):
            if di > 0:
                ext = min(ext, hi / di)
            elif di < 0:
                ext = min(ext, lo / di)
        return ext
    return reach


def ray_profile(f, d, reach, scale_zero):
    """Classify f along the ray t -> t d.

    Returns ``(kind, detail)`` with kind one of ``"zero"`` (f vanishes on an
    initial segment), ``"linear"`` (f(td)/t constant on an initial segment),
    ``"infinite"`` (+inf somewhere on the ray) or ``"curved"``.
    """
    ext = _ray_extent(f, d, reach)
    t0 = min(1.0, ext) / 4 if not isinstance(f, GridFunction) else ext / 4
    if isinstance(f, GridFunction):
        t0 = max(t0, 3 * float(np.max(f.cell)))
        t0 = min(t0, ext)
    ts = np.array([t0 / 4, t0 / 2, t0])
    _, v = _ray_values(f, d, ts)
    if len(v) < 3 or np.isinf(v).any():
        return "infinite", None
    if np.all(v <= scale_zero):
        return "zero", None
    r = v / ts
    tol_lin = 1e-9 * max(1.0, abs(r).max()) if not isinstance(f, GridFunction) else 1e-6 * max(1.0, abs(r).max())
    if np.ptp(r) <= tol_lin and r[0] > scale_zero:
        return "linear", float(r[0])
    return "curved", None


def nonlinear_on_ray(f, d, reach) -> bool | None:
    """True when f(td) leaves every band [a t - b, a t] as t grows.

    Secants over the geometric sequence t_k = t_0 2^k give slopes s_k and
    intercept gaps s_k t_k - f(t_k). For a function sandwiched in a band
    the gaps stay bounded; superlinear or log-deficient growth makes them
    increase without bound. None means +inf was met (domain is not R+).
    """
    ext = _ray_extent(f, d, reach)
    ts = ext * 2.0 ** -np.arange(12, -1, -1)
    ts, v = _ray_values(f, d, ts)
    if len(v) < 4 or np.isinf(v).any():
        return None
    slopes = np.diff(v) / np.diff(ts)
    gaps = slopes * ts[1:] - v[1:]
    tail = gaps[-4:]
    scale = max(1.0, abs(v).max())
    growth = np.diff(tail)
    return bool(np.all(growth > 1e-7 * scale) and tail[-1] > 1e-6 * scale)


def _strict_midpoints(f, X, Y) -> float:
    """Smallest normalized convexity gap (f(x)+f(y))/2 - f(mid) over pairs."""
    fx, fy, fm = f.evaluate(X), f.evaluate(Y), f.evaluate((X + Y) / 2)
    ok = np.isfinite(fx) & np.isfinite(fy)
    if not ok.any():
        return math.inf
    gap = (fx + fy) / 2 - fm
    return float(np.min((gap / (1.0 + np.abs(fx) + np.abs(fy)))[ok]))


def classify(f, spec: SampleSpec | None = None) -> ClassReport:
    """Advisory membership report for an analytic or grid function."""
    notes = ["verdicts are heuristic (finite samples)"]
    if isinstance(f, GridFunction):
        dim = f.dim
        spec = spec or SampleSpec(dim=dim)
        rng = np.random.default_rng(spec.seed)
        lo = np.array([b[0] for b in f.box])
        hi = np.array([b[1] for b in f.box])
        X = rng.uniform(lo, hi, size=(spec.n_points, dim))
        Y = rng.uniform(lo, hi, size=(spec.n_points, dim))
        vals = f.values
        finite_vals = vals[np.isfinite(vals)]
        cvx_violation = midpoint_convexity_violation(f)
        tol_convex = 1e-9 * max(1.0, f.max_finite())
        in_cvx0 = bool(finite_vals.min() >= 0 and vals[f.origin_index] == 0 and cvx_violation <= tol_convex)
        all_finite = bool(np.isfinite(vals).all())
        scale_zero = f.eps_zero()
        curvature_floor = 1e-9
    else:
        spec = spec or SampleSpec()
        dim = spec.dim
        rng = np.random.default_rng(spec.seed)
        X = rng.uniform(-spec.radius, spec.radius, size=(spec.n_points, dim))
        Y = rng.uniform(-spec.radius, spec.radius, size=(spec.n_points, dim))
        Z = rng.uniform(-spec.radius, spec.radius, size=(spec.n_points, dim))
        fx = np.asarray(f.evaluate(X), dtype=float)
        f0 = f.evaluate(np.zeros(dim))
        mid_gap = _strict_midpoints(f, Z, Y)
        in_cvx0 = bool(f0 == 0 and np.all(fx >= 0) and mid_gap >= -1e-12)
        all_finite = bool(np.isfinite(fx).all())
        scale_zero = 1e-12
        curvature_floor = 1e-12

    dirs = ray_directions(dim, spec.n_directions)
    linear_rays, zero_rays, nonlinear = [], [], True
    for d in dirs:
        kind, _ = ray_profile(f, d, spec.ray_reach, scale_zero)
        if kind == "linear":
            linear_rays.append(d.tolist())
        elif kind == "zero":
            zero_rays.append(d.tolist())
        verdict = nonlinear_on_ray(f, d, spec.ray_reach)
        if verdict is not True:
            nonlinear = False
    if zero_rays:
        notes.append(f"f vanishes on an initial segment of {len(zero_rays)} probed rays (zero set beyond the origin)")

    # strict convexity: random pairs plus pairs on probe rays (catches ray-linearity)
    in_S1 = in_cvx0 and all_finite and not linear_rays and not zero_rays
    if in_S1:
        if isinstance(f, GridFunction):
            # pairs inside one cell see the piecewise-linear interpolant, not f
            far = np.linalg.norm(X - Y, axis=1) > 8 * float(np.max(f.cell))
            gap = _strict_midpoints(f, X[far], Y[far]) if far.any() else math.inf
        else:
            gap = _strict_midpoints(f, X, Y)
        ray_pairs = np.vstack([0.3 * dirs, 0.9 * dirs])
        ray_ends = np.vstack([0.9 * dirs, 1.5 * dirs])
        if isinstance(f, GridFunction):
            inside = f.contains(ray_pairs) & f.contains(ray_ends)
            ray_pairs, ray_ends = ray_pairs[inside], ray_ends[inside]
        if len(ray_pairs):
            gap = min(gap, _strict_midpoints(f, ray_pairs, ray_ends))
        floor = curvature_floor if not isinstance(f, GridFunction) else 1e-6
        if gap <= floor:
            in_S1 = False
            notes.append("graph contains (nearly) flat segments")
    if in_S1:
        for x in X[:20]:
            if not np.any(x):
                continue
            try:
                f.gradient(x)
            except (NotDifferentiable, OutOfBox):
                in_S1 = False
                notes.append(f"not differentiable at {np.round(x, 4).tolist()}")
                break
    in_S2 = False
    if in_S1:
        in_S2 = True
        for x in X[:20]:
            try:
                ev = np.linalg.eigvalsh(f.hessian(x))
            except (NotDifferentiable, OutOfBox):
                continue
            if ev.min() <= 0:
                in_S2 = False
                notes.append(f"hessian not positive definite at {np.round(x, 4).tolist()}")
                break
    if isinstance(f, GridFunction):
        notes.append("grid verdicts only see the box; behaviour at infinity is extrapolated from the box edge")
    return ClassReport(
        in_cvx0=in_cvx0,
        in_S1=in_S1,
        in_S2=in_S2,
        ray_linearity_rays=linear_rays,
        nonlinear_at_infinity=nonlinear,
        diagnostics="; ".join(notes),
        zero_set_rays=zero_rays,
    )
