"""Polar gradients, Hessian transfer and variation-formula residuals.

Two evaluation paths share every formula here:

* analytic: catalog functions with exact spatial derivatives; polars come
  from the closed-form rules when they apply and otherwise from a
  maximization of the defining ratio polished by Newton steps;
* grid: sampled functions with finite-difference derivatives and discrete
  sups (``transforms.polar_at`` / ``legendre_at``).

Families of functions ``t -> u_t`` are either an :class:`AnalyticFamily`
or any object with ``times`` and ``frames`` on a common lattice (such as
``pde.TimePath``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.optimize import brentq, minimize

from .errors import (
    EmptyPolarGradient,
    FrameOutOfRange,
    NotDifferentiable,
    OutOfBox,
    RayLinearAtY,
    SingularHessian,
    TruncationError,
    Unsupported,
)
from .funcspace.catalog import AnalyticConvexFunction
from .funcspace.grid import GridFunction
from .transforms import j_at, legendre_at, legendre_maximizer, polar, polar_analytic, polar_at, polar_maximizer

ANALYTIC_EPS = 1e-12


class Kind(str, Enum):
    EMPTY = "Empty"
    POINT = "Point"
    INTERVAL = "Interval1D"


class Reason(str, Enum):
    INTERIOR_ZERO_SET = "InteriorZeroSet"
    NORM_LIKE = "NormLikeNoAttainment"
    BOUNDARY_ZERO_SET = "BoundaryZeroSet"
    REGULAR = "Regular"


@dataclass
class PolarGradientResult:
    kind: Kind
    y: np.ndarray | None = None
    polar_value: float | None = None
    interval: tuple | None = None
    reason: Reason = Reason.REGULAR

    @property
    def is_point(self) -> bool:
        return self.kind is Kind.POINT


@dataclass
class HessianTransfer:
    """Hessians linked by polarity at x and y = polar gradient of f at x.

    ``hess_polar`` comes from the transfer formula, ``hess_polar_direct``
    from differentiating Pf itself (closed form or finite differences), and
    ``det_residual`` tests the determinant identity with the direct one.
    """

    x: np.ndarray
    y: np.ndarray
    f_value: float
    polar_value: float
    hess_f: np.ndarray
    hess_polar: np.ndarray
    hess_polar_direct: np.ndarray
    hess_j: np.ndarray
    det_residual: float
    transfer_residual: float


def _eps(f) -> float:
    return f.eps_zero() if isinstance(f, GridFunction) else ANALYTIC_EPS


def _point(x) -> np.ndarray:
    return np.atleast_1d(np.asarray(x, dtype=float))


# -- polar gradient -------------------------------------------------------------

def _zero_set_interior(f, x, eps) -> bool:
    n = x.size
    if isinstance(f, GridFunction):
        steps = f.cell
    else:
        steps = np.full(n, 1e-6 * max(1.0, float(np.abs(x).max())))
    probes = [x + s * e for s, e in zip(steps, np.eye(n))] + [x - s * e for s, e in zip(steps, np.eye(n))]
    try:
        vals = np.asarray(f.evaluate(np.array(probes)), dtype=float)
    except OutOfBox:
        return False
    return bool(np.all(vals <= eps))


def polar_gradient(f, x, *, dual_box=None, dual_shape=None) -> PolarGradientResult:
    """Polar gradient y = grad f / s with s = <x, grad f> - f, and Pf(y) = 1/s.

    For 1D grid functions at a kink the polar subdifferential is scanned
    instead (see :func:`polar_subdifferential_1d`).
    """
    x = _point(x)
    eps = _eps(f)
    fx = float(f.evaluate(x))
    if math.isinf(fx):
        raise NotDifferentiable("x is outside the domain")
    if fx <= eps:
        reason = Reason.INTERIOR_ZERO_SET if np.any(x) and _zero_set_interior(f, x, eps) else Reason.BOUNDARY_ZERO_SET
        return PolarGradientResult(Kind.EMPTY, reason=reason)
    try:
        g = np.asarray(f.gradient(x), dtype=float)
    except NotDifferentiable:
        if isinstance(f, GridFunction) and f.dim == 1:
            return polar_subdifferential_1d(f, x, dual_box=dual_box, dual_shape=dual_shape)
        raise
    if isinstance(f, GridFunction):
        fx, g = _grid_jet(f, x, fx, g)
    s = float(x @ g) - fx
    scale = max(1.0, fx, float(np.abs(x).max() * np.abs(g).max()))
    tol = (1e-6 if isinstance(f, GridFunction) else 1e-12) * scale
    if s <= tol:
        return PolarGradientResult(Kind.EMPTY, reason=Reason.NORM_LIKE)
    return PolarGradientResult(Kind.POINT, y=g / s, polar_value=1.0 / s)


def _grid_jet(f: GridFunction, x, fx, g):
    """Swap interpolated value and slope for the local quadratic model when it is usable."""
    try:
        v, grad, _ = f.jet(x)
    except NotDifferentiable:
        return fx, g
    return v, grad


def _default_dual_1d(f: GridFunction):
    lo, hi = f.box[0]
    return [(2 * lo, 2 * hi)], (2 * f.shape[0] - 1,)


def polar_subdifferential_1d(f: GridFunction, x, *, dual_box=None, dual_shape=None,
                             rtol=1e-6) -> PolarGradientResult:
    """Brute-force scan of dual nodes y with Pf(y) f(x) = x y - 1.

    The contact test uses the tolerance ``rtol * f(x) * dual cell`` (plus
    rounding slack). The answer is an interval [y_lo, y_hi] whose nodes all
    pass the test; ``y`` is the node closest to its midpoint. The dual
    lattice defaults to twice the input box with 2N-1 nodes.
    """
    if f.dim != 1:
        raise ValueError("the subdifferential scan is one-dimensional")
    x = float(_point(x)[0])
    fx = float(f.evaluate([x]))
    if dual_box is None:
        dual_box, dual_shape = _default_dual_1d(f)
    Pf = polar(f, dual_box, dual_shape).output
    ys = Pf.axes[0]
    pv = Pf.values
    cell = float(Pf.cell[0])
    finite = np.isfinite(pv)
    gap = np.full(ys.shape, math.inf)
    gap[finite] = np.abs(pv[finite] * fx - (x * ys[finite] - 1.0))
    tol = rtol * max(fx, ANALYTIC_EPS) * cell + 1e-12 * (1.0 + abs(x) * np.abs(ys))
    hit = np.flatnonzero(gap <= tol)
    if fx <= f.eps_zero():
        hit = np.array([], dtype=int)  # contact needs f(x) Pf(y) = xy - 1 with Pf finite: only boundary cases
    if hit.size == 0:
        reason = Reason.NORM_LIKE if fx > f.eps_zero() else Reason.BOUNDARY_ZERO_SET
        return PolarGradientResult(Kind.EMPTY, reason=reason)
    lo, hi = float(ys[hit[0]]), float(ys[hit[-1]])
    mid = hit[np.argmin(np.abs(ys[hit] - 0.5 * (lo + hi)))]
    return PolarGradientResult(Kind.INTERVAL, y=np.array([ys[mid]]), polar_value=float(pv[mid]), interval=(lo, hi))


def polar_gradient_of_sum(f, g, x) -> dict:
    """Convex-combination rule for the polar gradient of f + g.

    Weights are Pg(y_g) and Pf(y_f) normalised to sum one, on y_f and y_g
    respectively. Returns the combination together with the direct polar
    gradient of the sum (analytic inputs) for cross-checking.
    """
    x = _point(x)
    pf, pg = polar_gradient(f, x), polar_gradient(g, x)
    for name, r in (("f", pf), ("g", pg)):
        if not r.is_point:
            raise EmptyPolarGradient(f"polar gradient of {name} is {r.kind.value} ({r.reason.value})", r)
    a, b = pf.polar_value, pg.polar_value
    combo = (b * pf.y + a * pg.y) / (a + b)
    out = {"y": combo, "weights": (b / (a + b), a / (a + b)), "y_f": pf.y, "y_g": pg.y, "direct": None}
    if isinstance(f, AnalyticConvexFunction) and isinstance(g, AnalyticConvexFunction):
        direct = polar_gradient(f + g, x)
        if direct.is_point:
            out["direct"] = direct.y
            out["deviation"] = float(np.abs(direct.y - combo).max())
    return out


# -- pointwise transforms of analytic functions --------------------------------

def _polish_polar(g: AnalyticConvexFunction, y, x, iters=30):
    """Newton on G(x) = s(x) y - grad g(x) = 0, whose Jacobian is y (H x)^T - H."""
    for _ in range(iters):
        gr = g.gradient(x)
        H = g.hessian(x)
        s = float(x @ gr) - g.evaluate(x)
        G = s * y - gr
        if np.abs(G).max() <= 1e-15 * max(1.0, np.abs(gr).max()):
            break
        J = np.outer(y, H @ x) - H
        try:
            step = np.linalg.solve(J, G)
        except np.linalg.LinAlgError:
            break
        x = x - step
        if np.abs(step).max() <= 1e-15 * max(1.0, np.abs(x).max()):
            break
    return x


def analytic_polar_point(g: AnalyticConvexFunction, y) -> tuple[float, np.ndarray | None]:
    """(Pg(y), maximizer x) for an analytic g; x is None when the sup is not attained."""
    y = _point(y)
    if not np.any(y):
        return 0.0, None
    try:
        pa = polar_analytic(g)
    except Unsupported:
        pa = None
    if pa is not None:
        w = float(pa.evaluate(y))
        if not math.isfinite(w) or w <= 0:
            return w, None
        r = polar_gradient(pa, y)
        return w, (r.y if r.is_point else None)
    ny = float(y @ y)

    def neg_ratio(x):
        gx = g.evaluate(x)
        return -(float(x @ y) - 1.0) / gx if gx > 0 else math.inf

    cands = [t * y / ny for t in np.geomspace(1.01, 1e3, 60)]
    x0 = min(cands, key=neg_ratio)
    res = minimize(neg_ratio, x0, method="Nelder-Mead" if y.size == 1 else "BFGS",
                   options={"xatol": 1e-12, "fatol": 1e-15} if y.size == 1 else {"gtol": 1e-12})
    x = _polish_polar(g, y, np.atleast_1d(res.x))
    gx = g.evaluate(x)
    w = max(0.0, (float(x @ y) - 1.0) / gx)
    return w, x


def analytic_legendre_point(g: AnalyticConvexFunction, y) -> tuple[float, np.ndarray]:
    """(g*(y), (grad g)^-1(y)) by minimization plus Newton polish."""
    y = _point(y)
    res = minimize(lambda x: g.evaluate(x) - float(x @ y), np.zeros_like(y),
                   jac=lambda x: g.gradient(x) - y, method="BFGS", options={"gtol": 1e-13})
    x = np.atleast_1d(res.x)
    for _ in range(30):
        G = g.gradient(x) - y
        if np.abs(G).max() <= 1e-15 * max(1.0, np.abs(y).max()):
            break
        x = x - np.linalg.solve(g.hessian(x), G)
    return float(x @ y) - g.evaluate(x), x


def analytic_j_point(g: AnalyticConvexFunction, z) -> float:
    """J g(z) = inf{s > 0 : s g(z/s) <= 1}; the perspective is nonincreasing in s."""
    z = _point(z)
    if not np.any(z):
        return 0.0

    def h(s):
        v = s * g.evaluate(z / s)
        return (v if math.isfinite(v) else 1e300) - 1.0

    lo, hi = 1e-12, 1.0
    if h(lo) <= 0:
        return 0.0
    while h(hi) > 0:
        hi *= 2.0
        if hi > 1e15:
            return math.inf
    return brentq(h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


# -- Hessian transfer ----------------------------------------------------------------

def _fd_hessian(fun, y, step, richardson=False):
    if richardson:
        # (4 H(h/2) - H(h)) / 3 cancels the O(h^2) term
        return (4 * _fd_hessian(fun, y, step / 2) - _fd_hessian(fun, y, step)) / 3
    n = y.size
    E = np.eye(n) * step
    f0 = fun(y)
    H = np.empty((n, n))
    for i in range(n):
        H[i, i] = (fun(y + E[i]) - 2 * f0 + fun(y - E[i])) / step ** 2
        for j in range(i + 1, n):
            H[i, j] = H[j, i] = (fun(y + E[i] + E[j]) - fun(y + E[i] - E[j])
                                 - fun(y - E[i] + E[j]) + fun(y - E[i] - E[j])) / (4 * step ** 2)
    return H


def transfer_matrix(x, y, f_value, polar_value, hess_f) -> np.ndarray:
    """f Pf (I - x y^T)^T H (I - x y^T), the inverse of the Hessian of Pf at y.

    x enters as a column and y as a row of the outer product.
    """
    n = x.size
    M = np.eye(n) - np.outer(x, y)
    return f_value * polar_value * M.T @ hess_f @ M


def hessian_of_polar(f, x, *, polar_step=None, refine=True) -> HessianTransfer:
    """Transfer the Hessian of f at x to Pf at y = polar gradient of f at x.

    The direct Hessian of Pf uses the closed-form polar when there is one,
    otherwise second differences of pointwise polars with step
    ``polar_step`` (default: 1e-3 |y| analytic with one Richardson level,
    0.1 |y| for grids). Grid polars use the sub-cell refinement unless
    ``refine`` is False; without it the O(cell^2) error of the discrete sup
    swamps any small step.
    """
    x = _point(x)
    pg = polar_gradient(f, x)
    if not pg.is_point:
        raise EmptyPolarGradient(f"no polar gradient at {x.tolist()} ({pg.reason.value})", pg)
    y, pv = pg.y, pg.polar_value
    if isinstance(f, GridFunction):
        fx, _, H = f.jet(x)
    else:
        fx = float(f.evaluate(x))
        H = np.asarray(f.hessian(x), dtype=float)
    n = x.size
    ev = np.linalg.eigvalsh(0.5 * (H + H.T))
    if ev.min() <= 1e-12 * max(1.0, abs(ev).max()):
        raise SingularHessian(f"hessian of f at {x.tolist()} is not positive definite (eigenvalues {ev})")
    A = transfer_matrix(x, y, fx, pv, H)
    hess_polar = np.linalg.inv(A)
    hess_polar = 0.5 * (hess_polar + hess_polar.T)
    if isinstance(f, GridFunction):
        step = polar_step or 0.1 * max(1.0, float(np.abs(y).max()))
        direct = _fd_hessian(lambda q: polar_at(f, q[None, :], refine=refine)[0][0], y, step)
    else:
        try:
            direct = np.asarray(polar_analytic(f).hessian(y), dtype=float)
        except (Unsupported, NotDifferentiable):
            step = polar_step or 1e-3 * max(1.0, float(np.abs(y).max()))
            direct = _fd_hessian(lambda q: analytic_polar_point(f, q)[0], y, step, richardson=True)
    det = np.linalg.det(H) * np.linalg.det(direct) * (fx * pv) ** (n + 2)
    rel = float(np.abs(direct - hess_polar).max() / max(np.abs(hess_polar).max(), 1e-300))
    return HessianTransfer(
        x=x, y=y, f_value=fx, polar_value=pv, hess_f=H, hess_polar=hess_polar,
        hess_polar_direct=direct, hess_j=A, det_residual=float(abs(det - 1.0)), transfer_residual=rel,
    )


# -- families -------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalyticFamily:
    """t -> u_t with exact spatial derivatives; time derivatives by central differences.

    ``richardson`` switches the 3-point stencils to the extrapolated
    5-point ones, which removes the O(dt^2) bias.
    """

    builder: Callable[[float], AnalyticConvexFunction]
    dt: float = 1e-3
    t_min: float = -math.inf
    t_max: float = math.inf
    richardson: bool = False

    def __call__(self, t: float) -> AnalyticConvexFunction:
        if not self.t_min <= t <= self.t_max:
            raise FrameOutOfRange(f"t = {t} outside [{self.t_min}, {self.t_max}]")
        return self.builder(t)


@dataclass(frozen=True)
class _Stencil:
    frames: list
    d1: np.ndarray
    d2: np.ndarray
    center: int

    def first(self, vals) -> float:
        return float(np.tensordot(self.d1, np.asarray(vals, dtype=float), axes=1))

    def second(self, vals) -> float:
        return float(np.tensordot(self.d2, np.asarray(vals, dtype=float), axes=1))

    def first_vec(self, vecs) -> np.ndarray:
        return np.tensordot(self.d1, np.asarray(vecs, dtype=float), axes=1)


def _stencil(family, t) -> _Stencil:
    if isinstance(family, AnalyticFamily):
        h = family.dt
        if family.richardson:
            offs = np.array([-2, -1, 0, 1, 2]) * h
            d1 = np.array([1, -8, 0, 8, -1]) / (12 * h)
            d2 = np.array([-1, 16, -30, 16, -1]) / (12 * h * h)
            center = 2
        else:
            offs = np.array([-1, 0, 1]) * h
            d1 = np.array([-1, 0, 1]) / (2 * h)
            d2 = np.array([1, -2, 1]) / (h * h)
            center = 1
        return _Stencil([family(t + o) for o in offs], d1, d2, center)
    times = np.asarray(family.times, dtype=float)
    i = int(np.argmin(np.abs(times - t)))
    if abs(times[i] - t) > 1e-9 * max(1.0, abs(t)):
        raise FrameOutOfRange(f"t = {t} is not a frame time")
    if i == 0 or i == len(times) - 1:
        raise FrameOutOfRange(f"t = {t} needs a frame on both sides")
    h1, h2 = times[i] - times[i - 1], times[i + 1] - times[i]
    d1 = np.array([-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2))])
    d2 = 2 * np.array([1 / (h1 * (h1 + h2)), -1 / (h1 * h2), 1 / (h2 * (h1 + h2))])
    return _Stencil(list(family.frames[i - 1:i + 2]), d1, d2, 1)


def _polar_point(u, y):
    """(w, x) with w = Pu(y) and x its maximizer, on either path."""
    if isinstance(u, GridFunction):
        _, a = polar_at(u, y[None, :])
        if a[0] < 0:
            v, _ = polar_at(u, y[None, :])
            return float(v[0]), None
        if u.boundary_mask().ravel()[a[0]]:
            raise TruncationError(f"polar sup at y = {y.tolist()} sits on the box boundary")
        v, pts = polar_maximizer(u, y[None, :])
        return float(v[0]), pts[0]
    return analytic_polar_point(u, y)


def _legendre_point(u, y):
    if isinstance(u, GridFunction):
        _, a = legendre_at(u, y[None, :])
        if u.boundary_mask().ravel()[a[0]]:
            raise TruncationError(f"legendre sup at y = {y.tolist()} sits on the box boundary")
        v, pts = legendre_maximizer(u, y[None, :])
        return float(v[0]), pts[0]
    return analytic_legendre_point(u, y)


def _polar_values(st: _Stencil, y) -> list:
    return [_polar_point(u, y)[0] for u in st.frames]


def _linked_point(st: _Stencil, y):
    w, x = _polar_point(st.frames[st.center], y)
    if x is None or not (0 < w < math.inf):
        raise RayLinearAtY(f"the polar sup at y = {y.tolist()} is not attained (w = {w})")
    return w, x


def _u_values(st: _Stencil, x):
    return [u.jet(x)[0] if isinstance(u, GridFunction) else float(u.evaluate(x)) for u in st.frames]


# -- first variation -----------------------------------------------------------------

def legendre_first_variation_residual(family, t, y) -> float:
    """|dw/dt(t,y) + du/dt(t, (grad u_t)^-1(y))| with w_t the Legendre transform of u_t."""
    y = _point(y)
    st = _stencil(family, t)
    _, x = _legendre_point(st.frames[st.center], y)
    dw = st.first([_legendre_point(u, y)[0] for u in st.frames])
    du = st.first(_u_values(st, x))
    return abs(dw + du)


def polar_first_variation_residual(family, t, y) -> float:
    """|d/dt log w(t,y) + d/dt log u(t, x)| with w_t = P u_t and x the polar gradient of w_t at y."""
    y = _point(y)
    st = _stencil(family, t)
    _, x = _linked_point(st, y)
    dlogw = st.first(np.log(_polar_values(st, y)))
    dlogu = st.first(np.log(_u_values(st, x)))
    return abs(dlogw + dlogu)


# -- second variation ----------------------------------------------------------------

@dataclass
class SecondVariation:
    legendre_residual: float
    polar_residual: float
    matrix_form_residual: float
    symmetric_form_residual: float
    details: dict = field(default_factory=dict)

    def as_tuple(self):
        return (self.legendre_residual, self.polar_residual, self.matrix_form_residual, self.symmetric_form_residual)


def _grad(u, x):
    if isinstance(u, GridFunction):
        return u.jet(x)[1]
    return np.asarray(u.gradient(x), dtype=float)


def _hess(u, x):
    if isinstance(u, GridFunction):
        return u.jet(x)[2]
    return np.asarray(u.hessian(x), dtype=float)


def _spatial_step(st: _Stencil, y, dy):
    if dy is not None:
        return dy
    u = st.frames[st.center]
    if isinstance(u, GridFunction):
        # grid polars are refined to the local quadratic model, so a modest step is safe
        return max(4 * float(np.max(u.cell)), 0.05 * max(1.0, float(np.abs(y).max())))
    return 1e-4 * max(1.0, float(np.abs(y).max()))


def bordered_matrix(u_val, d2_inv_u, grad_phi_dot, hess_u) -> np.ndarray:
    """(n+1)x(n+1) block matrix [[-u^2 (1/u)'', u grad(u'/u)], [(u grad(u'/u))^T, hess u]]."""
    n = hess_u.shape[0]
    B = np.empty((n + 1, n + 1))
    B[0, 0] = -u_val ** 2 * d2_inv_u
    B[0, 1:] = B[1:, 0] = u_val * grad_phi_dot
    B[1:, 1:] = hess_u
    return B


def second_variation_residuals(family, t, y, *, dy=None) -> SecondVariation:
    """Residuals of the second-variation identities at (t, y).

    * legendre: w'' = -u'' + <grad u', (hess u)^-1 grad u'> at (grad u_t)^-1(y);
    * polar: (log w)'' = -(log u)'' + u <grad (log u)', (hess u)^-1 grad (log u)'>;
    * matrix form: w''/w = -(1/u) det(B) / det(hess u), B the bordered matrix;
    * symmetric form: the last polar term rewritten as
      -u w <grad (log u)', (I - grad w grad u^T)^-1 grad_y (log w)'>.

    Polar-side quantities are evaluated at x = polar gradient of w_t at y.
    ``dy`` is the finite-difference step in y used for grad w and
    grad_y (log w)'.
    """
    y = _point(y)
    st = _stencil(family, t)
    uc = st.frames[st.center]
    n = y.size

    # Legendre side
    _, xl = _legendre_point(uc, y)
    lw = [_legendre_point(u, y)[0] for u in st.frames]
    ul = _u_values(st, xl)
    grad_udot = st.first_vec([_grad(u, xl) for u in st.frames])
    Hl = _hess(uc, xl)
    leg_rhs = -st.second(ul) + float(grad_udot @ np.linalg.solve(Hl, grad_udot))
    leg_res = abs(st.second(lw) - leg_rhs)

    # polar side
    w_c, x = _linked_point(st, y)
    ws = np.array(_polar_values(st, y))
    us = np.array(_u_values(st, x))
    u = us[st.center]
    H = _hess(uc, x)
    grads = [_grad(fr, x) for fr in st.frames]
    grad_phi_dot = st.first_vec([g / v for g, v in zip(grads, us)])
    Hinv_g = np.linalg.solve(H, grad_phi_dot)
    q = float(grad_phi_dot @ Hinv_g)
    d2_log_w = st.second(np.log(ws))
    d2_log_u = st.second(np.log(us))
    polar_res = abs(d2_log_w - (-d2_log_u + u * q))

    B = bordered_matrix(u, st.second(1.0 / us), grad_phi_dot, H)
    matrix_rhs = -np.linalg.det(B) / (u * np.linalg.det(H))
    matrix_res = abs(st.second(ws) / w_c - matrix_rhs)

    # symmetric form: grad w and grad_y (log w)' by central differences in y
    h = _spatial_step(st, y, dy)
    grad_w = np.empty(n)
    grad_rate = np.empty(n)
    for i, e in enumerate(np.eye(n) * h):
        wp, wm = np.array(_polar_values(st, y + e)), np.array(_polar_values(st, y - e))
        grad_w[i] = (wp[st.center] - wm[st.center]) / (2 * h)
        grad_rate[i] = (st.first(np.log(wp)) - st.first(np.log(wm))) / (2 * h)
    grad_u = grads[st.center]
    K = np.eye(n) - np.outer(grad_w, grad_u)
    sym_term = -u * w_c * float(grad_phi_dot @ np.linalg.solve(K, grad_rate))
    sym_res = abs(d2_log_w - (-d2_log_u + sym_term))

    details = {"x_legendre": xl, "x_polar": x, "last_term": u * q, "last_term_symmetric": sym_term}
    return SecondVariation(leg_res, polar_res, matrix_res, sym_res, details)


def j_variation_residual(family, t, x) -> float:
    """|dw/dt(t, x/u_t(x)) - u'(t,x) / (u_t(x) u_t*(grad u_t(x)))| with w_t = J u_t."""
    x = _point(x)
    st = _stencil(family, t)
    uc = st.frames[st.center]
    us = _u_values(st, x)
    u = us[st.center]
    if u <= (uc.eps_zero() if isinstance(uc, GridFunction) else ANALYTIC_EPS):
        raise RayLinearAtY("u_t(x) vanishes; x/u_t(x) is undefined")
    z = x / u
    if isinstance(uc, GridFunction):
        Js = [float(j_at(fr, z[None, :])[0]) for fr in st.frames]
        g = _grad(uc, x)
        conj = float(legendre_maximizer(uc, g[None, :])[0][0])
    else:
        Js = [analytic_j_point(fr, z) for fr in st.frames]
        g = _grad(uc, x)
        conj = float(x @ g) - u
    return abs(st.first(Js) - st.first(us) / (u * conj))
