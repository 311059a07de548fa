"""Legendre, polarity and J transforms on grids, plus closed-form polars.

Grid transforms are brute-force discrete sups over the input lattice
(compiled kernels in ``_kernels``). Every result carries the argmax of the
defining sup and the fraction of output nodes whose sup sat on the input
box boundary, which is where truncation of the true sup over R^n shows up.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from ._kernels import legendre_scan, polar_scan, support_scan
from .errors import DegenerateEpigraph, EmptyDomain, TruncationError, Unsupported
from .funcspace.catalog import (
    AnalyticConvexFunction,
    IndicatorOfBall,
    IndicatorOfPolytope,
    MaxOfAffinePlus,
    PowerOfPNorm,
    PrecomposeLinear,
    Quadratic,
    Scale,
    Sum,
    conjugate_exponent,
    is_zero_function,
    origin_indicator,
    simplify,
    zero_function,
)
from .funcspace.grid import GridFunction, _check_lattice, lattice_points


@dataclass(frozen=True, eq=False)
class TransformResult:
    """Output grid plus the argmax bookkeeping of the sup.

    ``argmax_map`` holds flat input-lattice indices (``-1`` where the output
    value was not produced by a sup, e.g. +inf nodes or the origin of a
    polar). ``boundary_hits`` flags nodes whose argmax is on the input box
    boundary; ``boundary_attainment_fraction`` is their share among nodes
    with an argmax.
    """

    output: GridFunction
    argmax_map: np.ndarray
    argmax_points: np.ndarray
    boundary_hits: np.ndarray
    boundary_attainment_fraction: float

    def boundary_fraction(self, mask=None) -> float:
        """Boundary-attainment share restricted to the output nodes in ``mask``."""
        has = self.argmax_map >= 0
        if mask is not None:
            has = has & np.asarray(mask, dtype=bool).reshape(has.shape)
        n = int(has.sum())
        return float(self.boundary_hits[has].sum() / n) if n else 0.0


def _dual_lattice(f: GridFunction, dual_box, dual_shape):
    box = f.box if dual_box is None else dual_box
    shape = f.shape if dual_shape is None else dual_shape
    return _check_lattice(box, shape)


def wide_dual_lattice(f: GridFunction, factor: float = 8.0):
    """A dual lattice ``factor`` times the input box with 2N - 1 nodes per axis.

    Polarizing back onto f's lattice from a dual box of the same size
    truncates the sup near the origin, where the maximiser grad/s runs off
    to infinity; a wider dual box pushes that region inwards.
    """
    box = [(factor * lo, factor * hi) for lo, hi in f.box]
    return box, tuple(2 * n - 1 for n in f.shape)


def _finalize(f, box, shape, values, arg, strict, what):
    arg = np.asarray(arg, dtype=np.int64).reshape(shape)
    src_pts = f.points()
    on_edge = f.boundary_mask().ravel()
    has = arg >= 0
    hits = np.zeros(shape, dtype=bool)
    hits[has] = on_edge[arg[has]]
    pts = np.full((arg.size, f.dim), np.nan)
    flat = arg.ravel()
    pts[flat >= 0] = src_pts[flat[flat >= 0]]
    frac = float(hits.sum() / has.sum()) if has.any() else 0.0
    if strict and hits.any():
        raise TruncationError(
            f"{what}: sup attained on the input box boundary at {int(hits.sum())} output nodes "
            f"(fraction {frac:.3f}); enlarge the input box or shrink the dual box"
        )
    out = GridFunction(box, shape, values.reshape(shape), argmax_map=arg)
    return TransformResult(out, arg, pts.reshape(*shape, f.dim), hits, frac)


# -- Legendre ------------------------------------------------------------------

def legendre_at(f: GridFunction, Y) -> tuple[np.ndarray, np.ndarray]:
    """Discrete conjugate max_x <x,y> - f(x) at arbitrary points (rows of Y)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float)).reshape(-1, f.dim)
    v = f.flat_values
    keep = np.flatnonzero(np.isfinite(v))
    if not keep.size:
        raise EmptyDomain("every node is +inf")
    out, arg = legendre_scan(f.points()[keep], v[keep], Y)
    return out, keep[arg]


def legendre(f: GridFunction, dual_box=None, dual_shape=None, strict=False) -> TransformResult:
    """Brute-force Legendre transform onto a dual lattice (default: f's own lattice)."""
    box, shape = _dual_lattice(f, dual_box, dual_shape)
    out, arg = legendre_at(f, lattice_points(box, shape))
    # f(0) = 0 and f >= 0 make the conjugate vanish at 0 and stay >= 0
    out = np.maximum(out, 0.0)
    return _finalize(f, box, shape, out, arg, strict, "legendre")


# -- polarity ------------------------------------------------------------------

def _zero_set_points(f: GridFunction) -> np.ndarray:
    v = f.flat_values
    Z = f.points()[v <= f.eps_zero()]
    if f.dim >= 2 and len(Z) > f.dim + 1:
        try:
            Z = Z[ConvexHull(Z).vertices]
        except QhullError:
            pass  # degenerate (flat) zero set: keep every point
    return Z


def zero_set_support(f: GridFunction, Y) -> np.ndarray:
    """Support function of the sampled zero set {f <= eps_zero} at the rows of Y."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float)).reshape(-1, f.dim)
    return support_scan(_zero_set_points(f), Y)


def _quadratic_fit(f: GridFunction, idx):
    """Least-squares quadratic model of f on the 3^n neighbourhood of each node in idx."""
    n = f.dim
    offsets = np.array(list(np.ndindex(*(3,) * n))) - 1
    nb = idx[:, None, :] + offsets[None, :, :]
    V = f.values[tuple(nb[..., d] for d in range(n))]
    axes = f.axes
    X0 = np.stack([axes[d][idx[:, d]] for d in range(n)], axis=1)
    D = np.stack([axes[d][nb[..., d]] for d in range(n)], axis=2) - X0[:, None, :]
    good = np.all(np.isfinite(V), axis=1) & np.all(V > f.eps_zero(), axis=1)
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    cols = [np.ones(D.shape[:2])] + [D[..., i] for i in range(n)]
    cols += [D[..., i] * D[..., j] * (0.5 if i == j else 1.0) for i, j in pairs]
    A = np.stack(cols, axis=2)
    AtA = np.einsum("kmp,kmq->kpq", A, A)
    Atv = np.einsum("kmp,km->kp", A, np.where(good[:, None], V, 0.0))
    c = np.linalg.solve(AtA, Atv[..., None])[..., 0]
    Q = np.zeros((len(idx), n, n))
    for k, (i, j) in enumerate(pairs):
        Q[:, i, j] = Q[:, j, i] = c[:, 1 + n + k]
    return good, X0, c[:, 0], c[:, 1:1 + n], Q


def _model_ratio_max(y, X0, c0, g0, Q, x, iters):
    """Newton on s(x) y - grad q(x) = 0 for the quadratic models; returns x."""
    for _ in range(iters):
        d = x - X0
        grad = g0 + np.einsum("kij,kj->ki", Q, d)
        q = c0 + np.einsum("ki,ki->k", g0, d) + 0.5 * np.einsum("ki,kij,kj->k", d, Q, d)
        s_ = np.einsum("ki,ki->k", x, grad) - q
        G = s_[:, None] * y - grad
        J = y[:, :, None] * np.einsum("kij,kj->ki", Q, x)[:, None, :] - Q
        with np.errstate(all="ignore"):
            det = np.linalg.det(J)
            safe = np.abs(det) > 1e-300
            step = np.zeros_like(x)
            if safe.any():
                step[safe] = np.linalg.solve(J[safe], G[safe][..., None])[..., 0]
        x = x - np.where(np.isfinite(step), step, 0.0)
    return x


def _model_affine_max(y, X0, c0, g0, Q, x, iters):
    """Stationary point of <x,y> - q(x) for the quadratic models."""
    with np.errstate(all="ignore"):
        det = np.linalg.det(Q)
        out = x.copy()
        safe = np.abs(det) > 1e-300
        if safe.any():
            out[safe] = X0[safe] + np.linalg.solve(Q[safe], (y - g0)[safe][..., None])[..., 0]
    return out


def _model_value(X0, c0, g0, Q, x):
    d = x - X0
    return c0 + np.einsum("ki,ki->k", g0, d) + 0.5 * np.einsum("ki,kij,kj->k", d, Q, d)


def _refine(f: GridFunction, Y, vals, arg, kind, rounds=3, iters=8):
    """Sub-cell refinement of attained polar or Legendre sups.

    A quadratic model of f is fitted (least squares) on the 3^n lattice
    neighbourhood of the argmax and the objective is maximised on it by
    Newton steps. When the maximiser drifts more than half a cell the model
    is re-centred on the nearest node and refitted. The refined value is
    kept only if the final maximiser is within one cell of its model's
    centre, the model is positive (polar) or convex (Legendre) there.

    Returns the refined values and maximisers; rows left alone keep the
    lattice value and node (NaN when the sup was not attained).
    """
    n = f.dim
    pts = np.full((len(Y), n), np.nan)
    ok = arg >= 0
    if not ok.any():
        return vals, pts
    pts[ok] = f.points()[arg[ok]]
    hi_idx = np.array(f.shape) - 2
    idx = np.array(np.unravel_index(arg[ok], f.shape)).T
    inner = np.all((idx >= 1) & (idx <= hi_idx), axis=1)
    rows = np.flatnonzero(ok)[inner]
    idx = idx[inner]
    if not rows.size:
        return vals, pts
    step = _model_ratio_max if kind == "polar" else _model_affine_max
    y = Y[rows]
    axes = f.axes
    cell = f.cell
    x = np.stack([axes[d][idx[:, d]] for d in range(n)], axis=1)
    for _ in range(rounds):
        good, X0, c0, g0, Q = _quadratic_fit(f, idx)
        x = step(y, X0, c0, g0, Q, x, iters)
        if not np.any(np.abs(x - X0) / cell > 0.5):
            break
        near = np.stack([np.clip(np.searchsorted(axes[d], x[:, d]), 1, hi_idx[d]) for d in range(n)], axis=1)
        # searchsorted gives the right neighbour; step back when the left one is closer
        for d in range(n):
            left = np.clip(near[:, d] - 1, 1, hi_idx[d])
            closer = np.abs(axes[d][left] - x[:, d]) < np.abs(axes[d][near[:, d]] - x[:, d])
            near[:, d] = np.where(closer, left, near[:, d])
        idx = np.where(np.isfinite(x).all(axis=1)[:, None], near, idx)
    q = _model_value(X0, c0, g0, Q, x)
    with np.errstate(all="ignore"):
        if kind == "polar":
            r = (np.einsum("ki,ki->k", x, y) - 1.0) / q
            shape_ok = q > 0
        else:
            r = np.einsum("ki,ki->k", x, y) - q
            shape_ok = np.all(np.linalg.eigvalsh(Q) > 0, axis=1)
    valid = good & shape_ok & np.all(np.abs(x - X0) <= cell, axis=1) & np.isfinite(r)
    out = vals.copy()
    out[rows[valid]] = np.maximum(r[valid], 0.0) if kind == "polar" else r[valid]
    pts[rows[valid]] = x[valid]
    return out, pts


def legendre_maximizer(f: GridFunction, Y) -> tuple[np.ndarray, np.ndarray]:
    """Refined Legendre values and maximisers at the rows of Y."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float)).reshape(-1, f.dim)
    out, arg = legendre_at(f, Y)
    return _refine(f, Y, out, arg, "legendre")


def polar_maximizer(f: GridFunction, Y) -> tuple[np.ndarray, np.ndarray]:
    """Refined polar values and maximisers (NaN rows where the sup is not attained)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float)).reshape(-1, f.dim)
    out, arg = polar_at(f, Y)
    return _refine(f, Y, out, arg, "polar")


def polar_at(f: GridFunction, Y, refine=False) -> tuple[np.ndarray, np.ndarray]:
    """Discrete polar at arbitrary points; returns (values, flat argmax or -1).

    ``refine`` replaces attained lattice sups by the sup over a local
    quadratic model of f (see ``_refine``).
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float)).reshape(-1, f.dim)
    v = f.flat_values
    pos = np.flatnonzero((v > f.eps_zero()) & np.isfinite(v))
    if pos.size:
        out, arg = polar_scan(f.points()[pos], 1.0 / v[pos], Y)
        arg = pos[arg]
    else:
        out, arg = np.full(len(Y), -np.inf), np.full(len(Y), -1, dtype=np.int64)
    out = np.maximum(out, 0.0)
    h = zero_set_support(f, Y)
    blocked = h > 1.0 + 1e-12
    out[blocked] = math.inf
    arg = np.where(blocked, -1, arg)
    at_origin = ~np.any(Y, axis=1)
    out[at_origin] = 0.0
    arg = np.where(at_origin, -1, arg)
    if refine:
        out = _refine(f, Y, out, arg, "polar")[0]
    return out, arg


def polar(f: GridFunction, dual_box=None, dual_shape=None, strict=False, refine=False) -> TransformResult:
    """Discrete polarity transform onto a dual lattice (default: f's own lattice).

    For f identically 0 on the grid the result is the indicator of the origin.
    ``refine`` swaps attained lattice sups for the local quadratic-model sup.
    """
    box, shape = _dual_lattice(f, dual_box, dual_shape)
    if np.all(f.values <= f.eps_zero()):
        vals = np.full(shape, math.inf)
        vals[tuple(s // 2 for s in shape)] = 0.0
        arg = np.full(shape, -1, dtype=np.int64)
        return _finalize(f, box, shape, vals, arg, strict, "polar")
    out, arg = polar_at(f, lattice_points(box, shape), refine=refine)
    return _finalize(f, box, shape, out, arg, strict, "polar")


def geometric_envelope(f: GridFunction, dual_box=None, dual_shape=None) -> GridFunction:
    """Greatest geometric convex minorant, as the double polar back on f's lattice.

    The dual lattice defaults to ``wide_dual_lattice``: with a dual box as
    small as f's own, every |x| < 1 / max|y| would collapse to 0. In 1D
    the dual cell matches f's cell, which the sup near the box ends needs.
    """
    if dual_box is None:
        dual_box, dual_shape = wide_dual_lattice(f)
        if f.dim == 1:
            dual_shape = (8 * (f.shape[0] - 1) + 1,)
    inner = polar(f, dual_box, dual_shape).output
    back = polar(inner, f.box, f.shape).output
    return GridFunction(f.box, f.shape, back.values, convexified=True)


# -- closed-form polars -------------------------------------------------------------

def _power_constant(q: float) -> float:
    # sup_r (r - 1) / r^q, attained at r = q / (q - 1); equals 1 for q = 1 (not attained)
    if q == 1:
        return 1.0
    return (q - 1) ** (q - 1) / q ** q


def _polytope_polar(f: IndicatorOfPolytope) -> AnalyticConvexFunction:
    A, b = f.A, f.b
    n = A.shape[1]
    if n == 1:
        # K = [lo, hi], K polar = [1/lo, 1/hi] with 1/0 read as infinite
        lo, hi = -math.inf, math.inf
        for (a,), bi in zip(A, b):
            if a > 0:
                hi = min(hi, bi / a)
            elif a < 0:
                lo = max(lo, bi / a)
        if hi == math.inf and lo == -math.inf:
            return origin_indicator()
        rows = [[e] for e in (hi, lo) if math.isfinite(e) and e != 0]
        if not rows:
            return zero_function()  # K = {0}
        return IndicatorOfPolytope(np.array(rows), np.ones(len(rows)))
    if np.any(b <= 0):
        raise Unsupported("polytope polar in n >= 2 needs every b_i > 0")
    V = A / b[:, None]
    try:
        hull = ConvexHull(V)
    except QhullError as exc:
        raise Unsupported(f"polytope is unbounded or degenerate: {exc}") from None
    normals, offsets = hull.equations[:, :-1], hull.equations[:, -1]
    if np.any(offsets >= 0):
        raise Unsupported("polytope is unbounded (origin not interior to the dual hull)")
    return IndicatorOfPolytope(normals, -offsets)


def polar_analytic(f: AnalyticConvexFunction) -> AnalyticConvexFunction:
    """Exact polar for the closed-form sub-catalog; raises Unsupported otherwise.

    Rules: p-ball indicators go to dual balls of reciprocal radius,
    s*||.||_p^q to c(q)/s*||.||_p'^q with c(q) = (q-1)^(q-1)/q^q,
    P(t f) = P(f)/t, P(f o M) = P(f) o M^-T, quadratics to the inverse
    quadratic, polytope indicators to the polar polytope, and in 1D the
    ray l_c to max(0, y)/c and back.
    """
    g = simplify(f)
    if isinstance(g, IndicatorOfBall):
        if g.radius == 0:
            return zero_function()
        if math.isinf(g.radius):
            return origin_indicator(g.p)
        return IndicatorOfBall(conjugate_exponent(g.p), 1.0 / g.radius)
    if isinstance(g, PowerOfPNorm):
        return PowerOfPNorm(conjugate_exponent(g.p), g.q, _power_constant(g.q) / g.scale)
    if isinstance(g, Quadratic):
        ev = np.linalg.eigvalsh(g.A)
        if ev.min() <= 1e-14 * max(1.0, ev.max()):
            raise Unsupported("singular quadratic: its polar takes the value +inf off a subspace")
        return Quadratic(np.linalg.inv(g.A))
    if isinstance(g, Scale):
        return Scale(1.0 / g.t, polar_analytic(g.child))
    if isinstance(g, PrecomposeLinear):
        return PrecomposeLinear(np.linalg.inv(g.M).T, polar_analytic(g.child))
    if isinstance(g, IndicatorOfPolytope):
        return _polytope_polar(g)
    ray_c = _ray_slope(g)
    if ray_c is not None:
        return MaxOfAffinePlus(np.array([[1.0 / ray_c]]), np.array([0.0]))
    if isinstance(g, MaxOfAffinePlus) and g.a.shape == (1, 1) and g.b[0] == 0 and g.a[0, 0] != 0:
        a = g.a[0, 0]
        # max(0, a y) = |a| * l_1 on the side sign(a)
        return Sum((PowerOfPNorm(2.0, 1.0, 1.0 / abs(a)), IndicatorOfPolytope([[-np.sign(a)]], [0.0])))
    raise Unsupported(f"no closed-form polar rule for {type(g).__name__}")


def _ray_slope(g) -> float | None:
    """c when g is the 1D ray function c*|t| + indicator of a half-line starting at 0."""
    if not isinstance(g, Sum) or len(g.children) != 2:
        return None
    power = next((c for c in g.children if isinstance(c, PowerOfPNorm)), None)
    half = next((c for c in g.children if isinstance(c, IndicatorOfPolytope)), None)
    if power is None or half is None or power.q != 1 or half.A.shape != (1, 1):
        return None
    if half.b[0] != 0 or half.A[0, 0] >= 0:
        return None  # only the t >= 0 orientation is produced by ``ray``
    return power.scale


# -- J transform ----------------------------------------------------------------

def _fmap_cloud(f: GridFunction, out_box) -> np.ndarray:
    """Images (x/t, 1/t) of the epigraph's lower boundary, plus the rays of the zero set."""
    X = f.points()
    v = f.flat_values
    eps = f.eps_zero()
    pos = np.isfinite(v) & (v > eps)
    pts = [np.hstack([X[pos] / v[pos, None], 1.0 / v[pos, None]])]
    zero = (v <= eps) & np.any(X != 0, axis=1)
    if zero.any():
        # (x, t) with t -> 0 maps to the ray s (x, 1); cap s where s x leaves the output box
        reach = np.array([max(-lo, hi) for lo, hi in out_box])
        Z = X[zero]
        with np.errstate(divide="ignore"):
            s = np.min(np.where(Z != 0, reach / np.abs(Z), np.inf), axis=1) * 2.0
        pts.append(np.hstack([Z * s[:, None], s[:, None]]))
    pts.append(np.zeros((1, f.dim + 1)))
    return np.vstack(pts)


def _lower_hull_1d(P: np.ndarray, zs: np.ndarray) -> np.ndarray:
    order = np.lexsort((P[:, 1], P[:, 0]))
    P = P[order]
    hull: list = []
    for p in P:
        if hull and hull[-1][0] == p[0]:
            continue  # same abscissa: the lower point came first
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (p[1] - y1) - (y2 - y1) * (p[0] - x1) <= 0:
                hull.pop()
            else:
                break
        hull.append(p)
    H = np.array(hull)
    out = np.interp(zs, H[:, 0], H[:, 1])
    out[(zs < H[0, 0]) | (zs > H[-1, 0])] = math.inf
    return out


def _lower_hull_2d(P: np.ndarray, Z: np.ndarray) -> np.ndarray:
    try:
        hull = ConvexHull(P)
        shadow = ConvexHull(P[:, :2])
    except QhullError as exc:
        raise DegenerateEpigraph(f"F-map image is flat: {exc}") from None
    eq = hull.equations
    lower = eq[eq[:, 2] < -1e-12]
    # plane a.z + c s + d = 0 with c < 0  ->  s = -(a.z + d) / c
    vals = -(Z @ lower[:, :2].T + lower[:, 3]) / lower[:, 2]
    out = vals.max(axis=1)
    scale = max(1.0, float(np.abs(P[:, :2]).max()))
    inside = np.all(Z @ shadow.equations[:, :2].T + shadow.equations[:, 2] <= 1e-9 * scale, axis=1)
    return np.where(inside, np.maximum(out, 0.0), math.inf)


def j_at(f: GridFunction, Z, reach=None) -> np.ndarray:
    """J f at arbitrary points through the F-map hull (1D and 2D).

    ``reach`` bounds where the rays of the zero set are capped; it defaults
    to twice the largest |coordinate| of Z.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float)).reshape(-1, f.dim)
    if f.dim == 3:
        raise ValueError("pointwise J is available in 1D and 2D only")
    r = reach if reach is not None else 2.0 * max(1.0, float(np.abs(Z).max()))
    P = _fmap_cloud(f, [(-r, r)] * f.dim)
    vals = _lower_hull_1d(P, Z[:, 0]) if f.dim == 1 else _lower_hull_2d(P, Z)
    vals[~np.any(Z, axis=1)] = 0.0
    return vals


def _composition_lattice(f, box, shape, mid_shape):
    """Intermediate lattice for L(P f): wide enough for the slopes of J f on the output box.

    The slopes are read off the F-map hull when it is available (1D/2D),
    otherwise the output box is reused.
    """
    mid_shape = mid_shape or tuple(2 * s - 1 for s in shape)
    if f.dim == 3:
        return box, mid_shape
    Jf = j_transform(f, box, shape, route="fmap")
    v = Jf.values
    slopes = [0.0]
    for d, ax in enumerate(Jf.axes):
        dv = np.diff(v, axis=d) / np.expand_dims(np.diff(ax), tuple(i for i in range(f.dim) if i != d))
        slopes.append(float(np.max(np.abs(dv[np.isfinite(dv)]), initial=0.0)))
    Y = max(1.0, 2.0 * max(slopes))
    return tuple((-Y, Y) for _ in range(f.dim)), mid_shape


def j_transform(f: GridFunction, out_box=None, out_shape=None, route="fmap",
                mid_box=None, mid_shape=None) -> GridFunction:
    """J f = L(P f), computed either through the fractional-linear map on the
    epigraph (``route="fmap"``) or as the composition (``route="composition"``).

    The F-map route takes the lower convex hull of the image cloud; 3D
    inputs always use the composition route.
    """
    box, shape = _dual_lattice(f, out_box, out_shape)
    finite = f.values[np.isfinite(f.values)]
    if finite.size == 0:
        raise DegenerateEpigraph("no finite values")
    if route == "composition" or f.dim == 3:
        if mid_box is None:
            mid_box, mid_shape = _composition_lattice(f, box, shape, mid_shape)
        inner = polar(f, mid_box, mid_shape).output
        return legendre(inner, box, shape).output
    if route != "fmap":
        raise ValueError(f"unknown route {route!r}")
    P = _fmap_cloud(f, box)
    Z = lattice_points(box, shape)
    vals = _lower_hull_1d(P, Z[:, 0]) if f.dim == 1 else _lower_hull_2d(P, Z)
    vals = vals.reshape(shape)
    vals[tuple(s // 2 for s in shape)] = 0.0
    return GridFunction(box, shape, vals, convexified=True)


# -- set-level checks -------------------------------------------------------------

def _radial_exit(g: GridFunction, u: np.ndarray, test, ext: float, n_steps: int) -> float:
    ts = np.linspace(0.0, ext, n_steps)
    vals = g.evaluate(ts[:, None] * u[None, :])
    bad = np.flatnonzero(test(vals))
    return float(ts[bad[0]]) if bad.size else ext


def _extent(box, u) -> float:
    ext = math.inf
    for di, (lo, hi) in zip(u, box):
        if di > 0:
            ext = min(ext, hi / di)
        elif di < 0:
            ext = min(ext, lo / di)
    return ext


def domain_duality_check(f: GridFunction, dual_box=None, dual_shape=None, n_directions=64) -> dict:
    """Compare dom(Pf) with the polar of f's zero set, and Pf's zero set with
    the polar of dom f, by radial marching along sampled directions.

    Radii are capped at the dual box. Deviations are absolute radius
    differences; ``cell`` is the dual spacing for scale.
    """
    from .funcspace.classify import ray_directions

    res = polar(f, dual_box, dual_shape).output
    dirs = ray_directions(f.dim, n_directions)
    zero_pts = _zero_set_points(f)
    v = f.flat_values
    dom_pts = f.points()[np.isfinite(v)]
    h_zero = support_scan(zero_pts, dirs)
    h_dom = support_scan(dom_pts, dirs)
    n_steps = 8 * max(res.shape) + 1
    eps = res.eps_zero()
    dev_dom, dev_zero = 0.0, 0.0
    rows = []
    for u, hz, hd in zip(dirs, h_zero, h_dom):
        ext = _extent(res.box, u)
        pred_dom = min(1.0 / hz if hz > 0 else math.inf, ext)
        pred_zero = min(1.0 / hd if hd > 0 else math.inf, ext)
        got_dom = _radial_exit(res, u, np.isinf, ext, n_steps)
        got_zero = _radial_exit(res, u, lambda w: w > eps, ext, n_steps)
        dev_dom = max(dev_dom, abs(got_dom - pred_dom))
        dev_zero = max(dev_zero, abs(got_zero - pred_zero))
        rows.append((u.tolist(), pred_dom, got_dom, pred_zero, got_zero))
    return {
        "domain_deviation": dev_dom,
        "zero_set_deviation": dev_zero,
        "cell": float(np.max(res.cell)),
        "n_directions": len(dirs),
        "rows": rows,
    }


def epigraph_polar_check(f: GridFunction, n_directions=64, dual_box=None, dual_shape=None, seed=0) -> dict:
    """Set-level polarity check in R^(n+1).

    For random directions w = (u, u_s) with u_s < 0 the boundary point of
    the polar of epi f along w is w / h(w), with h the support function of
    the sampled graph. Reflecting its last coordinate must land on the
    graph of Pf; the signed gap to the grid polar is recorded.
    """
    if f.dim > 2:
        raise ValueError("epigraph check supports 1D and 2D inputs")
    Pf = polar(f, dual_box, dual_shape).output
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n_directions, f.dim + 1))
    W[:, -1] = -np.abs(W[:, -1]) - 1e-3
    X = f.points()
    v = f.flat_values
    fin = np.isfinite(v)
    G = np.hstack([X[fin], v[fin, None]])
    h = support_scan(G, W)
    worst, used = 0.0, 0
    for w, hw in zip(W, h):
        if hw <= 1e-12:
            continue  # polar contains the whole ray along w
        y, c = w[:-1] / hw, -w[-1] / hw
        if not Pf.contains(y[None, :])[0]:
            continue
        dev = c - Pf.evaluate(y)
        if math.isinf(dev):
            dev = -math.inf if dev < 0 else math.inf
        used += 1
        if abs(dev) > abs(worst):
            worst = dev
    return {"max_deviation": float(worst), "directions_used": used, "directions": n_directions}
