"""Closed-form polar Hamilton-Jacobi and Monge-Ampère paths, plus residual checks.

Every path here is built from dual formulas (polarize, combine linearly in
the dual, polarize back); nothing is time-stepped. The residual functions
plug the frames back into the PDEs with finite differences.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .calculus import _stencil
from .errors import (
    AdvisoryFailure,
    AdvisoryWarning,
    BeyondMaximalTime,
    FrameOutOfRange,
    NotDifferentiable,
    TimesOutOfRange,
)
from .funcspace.classify import classify
from .funcspace.grid import GridFunction, lattice_points, midpoint_convexity_violation, sample
from .ginfconv import ginf_dual
from .transforms import legendre_maximizer, polar, polar_maximizer, wide_dual_lattice

POLICIES = ("warn", "abort", "waive")


@dataclass
class TimePath:
    """Frames u(t, .) on a common lattice, one per entry of ``times``.

    ``sources`` keeps the live inputs (not serialized) that the residual
    checks need, e.g. the Hamiltonian g of an HJ path.
    """

    times: np.ndarray
    frames: list
    provenance: dict
    per_frame_diagnostics: list
    sources: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.frames) != len(self.times):
            raise ValueError("one frame per time is required")

    def index(self, t: float) -> int:
        hit = np.flatnonzero(np.isclose(self.times, t, rtol=0, atol=1e-12))
        if not hit.size:
            raise FrameOutOfRange(f"t = {t} is not one of the path's times")
        return int(hit[0])

    def frame(self, t: float) -> GridFunction:
        return self.frames[self.index(t)]


@dataclass
class CauchyData:
    u0: GridFunction
    du0: object
    v: "SignedGrid"
    T_est: float
    capped: bool = False


# -- helpers -----------------------------------------------------------------------

def check_hypotheses(f, label: str, policy: str = "warn", *, require_s2: bool = True) -> dict:
    """Sampled S2 / nonlinear-at-infinity check with a warn, abort or waive policy."""
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    if policy == "waive":
        return {"input": label, "checked": False}
    rep = classify(f)
    ok = rep.in_cvx0 and ((rep.in_S2 and rep.nonlinear_at_infinity) if require_s2 else True)
    record = {"input": label, "checked": True, "passed": bool(ok), "in_cvx0": rep.in_cvx0,
              "in_S2": rep.in_S2, "nonlinear_at_infinity": rep.nonlinear_at_infinity}
    if not ok:
        msg = f"{label} failed the sampled hypothesis check ({rep.diagnostics})"
        if policy == "abort":
            raise AdvisoryFailure(msg)
        warnings.warn(msg, AdvisoryWarning, stacklevel=3)
    return record


def _on_lattice(g, box, shape) -> GridFunction:
    if isinstance(g, GridFunction):
        if g.shape == tuple(shape) and np.allclose(g.box, box):
            return g
        return GridFunction(box, shape, g.evaluate(lattice_points(box, shape)).reshape(shape))
    return sample(g, box, shape)


def _combine(terms, template: GridFunction) -> GridFunction:
    """Nodewise sum of c * values over (c, grid) terms; 0 * inf counts as 0."""
    out = np.zeros(template.shape)
    for c, grid in terms:
        if c == 0:
            continue
        out = out + c * grid.values
    out[np.isnan(out)] = math.inf
    return template.with_values(out)


def _diagnostics(t, res) -> dict:
    frame = res.output
    return {
        "t": float(t),
        "boundary_fraction": res.boundary_attainment_fraction,
        "midpoint_violation": midpoint_convexity_violation(frame),
        "convex": bool(midpoint_convexity_violation(frame) <= 1e-9 * max(1.0, frame.max_finite())),
    }


def _times(times, t_max=math.inf) -> np.ndarray:
    ts = np.asarray(times, dtype=float).ravel()
    if ts.size == 0:
        raise TimesOutOfRange("no times requested")
    if np.any(np.diff(ts) <= 0):
        raise TimesOutOfRange("times must be strictly increasing")
    if ts[0] < 0 or ts[-1] > t_max * (1 + 1e-12):
        raise TimesOutOfRange(f"times must lie in [0, {t_max}]")
    return ts


def _dual(f: GridFunction, dual_box, dual_shape):
    if dual_box is None:
        return wide_dual_lattice(f)
    return dual_box, dual_shape


def _interior_stencil(path: TimePath, t: float):
    k = path.index(t)
    if not 0 < k < len(path.times) - 1:
        raise FrameOutOfRange("residuals need a frame on each side of t")
    return _stencil(path, t)


def _jets(st, x):
    vals, grads = [], []
    for fr in st.frames:
        v, g, _ = fr.jet(x)
        vals.append(v)
        grads.append(g)
    return np.array(vals), grads


# -- Hamilton-Jacobi -----------------------------------------------------------------

def solve_polar_hj(f: GridFunction, g, times, *, dual_box=None, dual_shape=None,
                   policy: str = "warn", refine: bool = True) -> TimePath:
    """Frames u(t) = (Pf + t g)° for the polar Hamilton-Jacobi equation.

    g is the Hamiltonian on the dual side (a catalog function, sampled on
    the dual lattice, or a grid on it). f gets the S2 / nonlinear-at-infinity
    check under ``policy``; g only has to be geometric convex, norms allowed.
    """
    ts = _times(times)
    box, shape = _dual(f, dual_box, dual_shape)
    advisory = [check_hypotheses(f, "f", policy)]
    gd = _on_lattice(g, box, shape)
    if policy != "waive":
        advisory.append(check_hypotheses(gd, "g", policy, require_s2=False))
    wf = polar(f, box, shape, refine=refine).output
    frames, diags = [], []
    for t in ts:
        res = polar(_combine([(1.0, wf), (t, gd)], wf), f.box, f.shape, refine=refine)
        frames.append(res.output)
        diags.append(_diagnostics(t, res))
    prov = {"kind": "HJ", "dual_box": [list(b) for b in box], "dual_shape": list(shape), "advisory": advisory}
    return TimePath(ts, frames, prov, diags, sources={"f": f, "g": g})


def hj_residual(path: TimePath, t: float, x) -> float:
    """|(1/u) du/dt + u*(grad u) g(grad u / u*(grad u))| at an interior frame.

    u* is the Legendre transform of the frame at time t, evaluated at the
    spatial gradient through the refined discrete sup.
    """
    g = path.sources["g"]
    st = _interior_stencil(path, t)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    us, grads = _jets(st, x)
    u = us[st.center]
    p = grads[st.center]
    ustar = float(legendre_maximizer(st.frames[st.center], p[None, :])[0][0])
    gval = float(np.atleast_1d(g.evaluate(p / ustar))[0])
    return abs(st.first(us) / u + ustar * gval)


# -- Monge-Ampère: Dirichlet -----------------------------------------------------------

def _scaled(u: GridFunction, c: float) -> GridFunction:
    return u.with_values(c * u.values)


def solve_ma_dirichlet(u0: GridFunction, u1: GridFunction, T: float, times, *, route: str = "dual",
                       dual_box=None, dual_shape=None, policy: str = "warn", refine: bool = True) -> TimePath:
    """Frames ((1 - t/T) Pu0 + (t/T) Pu1)° interpolating u0 and u1.

    ``route="ginf"`` builds the interior frames as (T u0/(T-t)) ⊡ (T u1/t)
    instead, with every polar taken numerically; it serves as a cross-check.
    """
    if not u0.same_lattice(u1):
        raise ValueError("u0 and u1 must share a lattice")
    if not T > 0:
        raise TimesOutOfRange("T must be positive")
    ts = _times(times, T)
    if route not in ("dual", "ginf"):
        raise ValueError("route must be 'dual' or 'ginf'")
    box, shape = _dual(u0, dual_box, dual_shape)
    advisory = [check_hypotheses(u0, "u0", policy), check_hypotheses(u1, "u1", policy)]
    w0 = polar(u0, box, shape, refine=refine).output
    w1 = polar(u1, box, shape, refine=refine).output
    frames, diags = [], []
    for t in ts:
        s = t / T
        if route == "ginf" and 0 < s < 1:
            out = ginf_dual(_scaled(u0, 1 / (1 - s)), _scaled(u1, 1 / s),
                            dual_box=box, dual_shape=shape, refine=refine).output
            diags.append({"t": float(t), "boundary_fraction": math.nan,
                          "midpoint_violation": midpoint_convexity_violation(out),
                          "convex": bool(midpoint_convexity_violation(out) <= 1e-9 * max(1.0, out.max_finite()))})
        else:
            res = polar(_combine([(1 - s, w0), (s, w1)], w0), u0.box, u0.shape, refine=refine)
            out = res.output
            diags.append(_diagnostics(t, res))
        frames.append(out)
    prov = {"kind": "MADirichlet", "T": float(T), "route": route, "dual_box": [list(b) for b in box],
            "dual_shape": list(shape), "advisory": advisory}
    return TimePath(ts, frames, prov, diags, sources={"u0": u0, "u1": u1})


def ma_residual(path: TimePath, t: float, x) -> float:
    """|(1/u)'' + <grad(u'/u), (hess u)^-1 grad(u'/u)>| at an interior frame.

    Time derivatives come from the (possibly nonuniform) three-frame
    stencil, spatial ones from the local quadratic model of each frame.
    """
    st = _interior_stencil(path, t)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    us, grads = _jets(st, x)
    H = st.frames[st.center].jet(x)[2]
    grad_rate = st.first_vec([gk / uk for gk, uk in zip(grads, us)])
    return abs(st.second(1.0 / us) + float(grad_rate @ np.linalg.solve(H, grad_rate)))


# -- Monge-Ampère: Cauchy --------------------------------------------------------------

def _smooth_values(g, X) -> np.ndarray:
    """g at the rows of X; grids go through their local quadratic model where it exists."""
    if not isinstance(g, GridFunction):
        return np.asarray(g.evaluate(X), dtype=float)
    out = np.asarray(g.evaluate(X), dtype=float)
    for k, x in enumerate(X):
        try:
            out[k] = g.jet(x)[0]
        except NotDifferentiable:
            pass
    return out


def _velocity(u0: GridFunction, du0, box, shape, refine: bool):
    w0 = polar(u0, box, shape, refine=refine).output
    Y = w0.points()
    w, X = polar_maximizer(u0, Y)
    v = np.zeros(len(Y))
    ok = np.all(np.isfinite(X), axis=1) & np.isfinite(w) & (w > 0) & np.any(Y != 0, axis=1)
    # u at the maximiser as the polar value saw it, so that v = 1 scales w0 exactly
    u = (np.einsum("ij,ij->i", X[ok], Y[ok]) - 1.0) / w[ok]
    du = _smooth_values(du0, X[ok])
    v[ok] = np.where(u > u0.eps_zero(), du / np.where(u > 0, u, 1.0), 0.0)
    return w0, SignedGrid(tuple(box), tuple(shape), v.reshape(shape))


@dataclass(frozen=True)
class SignedGrid:
    """Lattice samples without the Cvx0 constraints (the Cauchy velocity v may be negative)."""

    box: tuple
    shape: tuple
    values: np.ndarray

    def points(self) -> np.ndarray:
        return lattice_points(self.box, self.shape)


def _cauchy_dual(w0: GridFunction, v, t: float) -> np.ndarray:
    vals = w0.values * (1.0 - t * v.values)
    vals[np.isinf(w0.values)] = math.inf
    return vals


def _dual_ok(w0: GridFunction, vals, base: float) -> bool:
    """Strictly positive off the origin and midpoint convex up to w0's own violation ``base``."""
    finite = np.isfinite(vals)
    nonzero = w0.values > w0.eps_zero()
    check = finite & nonzero
    if check.any() and vals[check].min() <= w0.eps_zero():
        return False
    trial = w0.with_values(np.where(finite, np.maximum(vals, 0.0), math.inf))
    return midpoint_convexity_violation(trial) <= base + 1e-7 * max(1.0, w0.max_finite())


def solve_ma_cauchy(u0: GridFunction, du0, times, *, dual_box=None, dual_shape=None,
                    policy: str = "warn", refine: bool = True) -> tuple[TimePath, CauchyData]:
    """Frames (Pu0 (1 - t v))° with v(y) = du0/u0 at the polar maximiser of y.

    T_est is the last requested time before the dual frame stops being
    strictly positive off the origin or midpoint convex. Requested times
    past it raise BeyondMaximalTime carrying the frames up to T_est.
    """
    ts = _times(times)
    if abs(float(np.atleast_1d(du0.evaluate(np.zeros(u0.dim)))[0])) > u0.eps_zero():
        raise ValueError("du0 must vanish at the origin")
    box, shape = _dual(u0, dual_box, dual_shape)
    advisory = [check_hypotheses(u0, "u0", policy)]
    w0, v = _velocity(u0, du0, box, shape, refine)
    frames, diags, T_est = [], [], None
    base = midpoint_convexity_violation(w0)
    for t in ts:
        vals = _cauchy_dual(w0, v, t)
        if not _dual_ok(w0, vals, base):
            break
        res = polar(w0.with_values(vals), u0.box, u0.shape, refine=refine)
        frames.append(res.output)
        diags.append(_diagnostics(t, res))
        T_est = float(t)
    done = len(frames)
    prov = {"kind": "MACauchy", "T_est": T_est, "dual_box": [list(b) for b in box],
            "dual_shape": list(shape), "advisory": advisory}
    data = CauchyData(u0=u0, du0=du0, v=v, T_est=T_est if T_est is not None else 0.0, capped=done == len(ts))
    path = TimePath(ts[:done], frames, prov, diags, sources={"cauchy": data})
    if done < len(ts):
        raise BeyondMaximalTime(
            f"frames past t = {T_est} refused: the dual frame leaves the admissible class at t = {ts[done]}",
            t_max=T_est, path=path)
    return path, data


def initial_velocity_check(u0: GridFunction, du0, h: float = 1e-3, *, dual_box=None, dual_shape=None,
                           window: float = 0.5, refine: bool = True) -> dict:
    """Central difference (u(h) - u(-h)) / 2h against du0 on the central part of the box.

    ``window`` is the fraction of each half-axis kept. Returns the max
    absolute deviation and the number of nodes compared.
    """
    box, shape = _dual(u0, dual_box, dual_shape)
    w0, v = _velocity(u0, du0, box, shape, refine)
    fwd = polar(w0.with_values(_cauchy_dual(w0, v, h)), u0.box, u0.shape, refine=refine).output
    bwd = polar(w0.with_values(_cauchy_dual(w0, v, -h)), u0.box, u0.shape, refine=refine).output
    X = u0.points()
    lo = np.array([b[0] for b in u0.box]) * window
    hi = np.array([b[1] for b in u0.box]) * window
    mask = np.all((X >= lo) & (X <= hi), axis=1)
    est = (fwd.flat_values - bwd.flat_values) / (2 * h)
    target = np.asarray(du0.evaluate(X[mask]), dtype=float)
    dev = np.abs(est[mask] - target)
    return {"max_deviation": float(dev.max()), "n_nodes": int(mask.sum()), "h": h}
