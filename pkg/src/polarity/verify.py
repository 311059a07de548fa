"""Verification suites: measured residuals against fixed bounds.

Each check compares a measured number with a bound through ``<=`` or ``>=``
and records whether it passed. The built-in catalog runs at desk scale
(about a minute for everything on one core); user inputs can be fed to the
involution, jdual and hessian suites.
"""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .calculus import (
    AnalyticFamily,
    Kind,
    hessian_of_polar,
    j_variation_residual,
    legendre_first_variation_residual,
    polar_first_variation_residual,
    polar_gradient,
    polar_gradient_of_sum,
    polar_subdifferential_1d,
    second_variation_residuals,
)
from .errors import AdvisoryWarning, BeyondMaximalTime, EmptyPolarGradient, PolarityError
from .funcspace.catalog import (
    AnalyticConvexFunction,
    PowerOfPNorm,
    Quadratic,
    Scale,
    Sum,
    natural_dim,
    ray,
    zero_function,
)
from .funcspace.grid import GridFunction, sample
from .ginfconv import ginf_analytic, ginf_direct_grid, ginf_dual
from .pde import (
    hj_residual,
    initial_velocity_check,
    ma_residual,
    solve_ma_cauchy,
    solve_ma_dirichlet,
    solve_polar_hj,
)
from .transforms import j_at, j_transform, polar, polar_analytic, polar_at

SUITES = ("involution", "jdual", "hessian", "variation", "ginf", "pde", "all")


@dataclass
class Check:
    suite: str
    name: str
    measured: float
    bound: float
    relation: str = "<="
    passed: bool = False
    detail: str = ""

    def row(self) -> dict:
        return asdict(self)


def _check(suite, name, measured, bound, relation="<=", detail="") -> Check:
    measured = float(measured)
    ok = measured <= bound if relation == "<=" else measured >= bound
    return Check(suite, name, measured, float(bound), relation, bool(ok and not math.isnan(measured)), detail)


def _central(X, box, frac=0.5) -> np.ndarray:
    lo = np.array([b[0] for b in box]) * frac
    hi = np.array([b[1] for b in box]) * frac
    return np.all((X >= lo - 1e-12) & (X <= hi + 1e-12), axis=1)


# -- involution and dual norms ----------------------------------------------------------

def involution_error(f: GridFunction, dual_box, dual_shape) -> float:
    """max |P(P f) - f| over the central half of f's box, the outer polar taken pointwise."""
    X = f.points()
    mask = _central(X, f.box)
    pf = polar(f, dual_box, dual_shape).output
    back, _ = polar_at(pf, X[mask])
    return float(np.abs(back - f.flat_values[mask]).max())


# (N, dual half-width, dual nodes) per resolution. The dual box grows with N since
# the truncation floor near the origin scales like 1/D^2, and the dual cell must
# shrink as well or its O(cell^2) error floors the refinement.
INVOLUTION_1D = ((257, 32.0, 1025), (513, 64.0, 4097))
INVOLUTION_2D = ((65, 6.0, 97), (129, 12.0, 193))


def criterion_involution() -> list:
    s = "involution"
    rows = []
    t0 = time.perf_counter()
    cases = [
        ("x^2", PowerOfPNorm(2, 2, 1), 1, INVOLUTION_1D),
        ("l1_norm_squared", PowerOfPNorm(1, 2, 1), 2, INVOLUTION_2D),
        ("quadratic_2d", Quadratic(np.array([[2.0, 0.5], [0.5, 1.0]])), 2, INVOLUTION_2D),
    ]
    for name, fn, dim, schedule in cases:
        errs = []
        for n, d, m in schedule:
            f = sample(fn, [(-2.0, 2.0)] * dim, (n,) * dim)
            errs.append(involution_error(f, [(-d, d)] * dim, (m,) * dim))
        rows.append(_check(s, f"{name}: P(Pf)-f at N={schedule[-1][0]}", errs[-1], 5e-2))
        rows.append(_check(s, f"{name}: error ratio N={schedule[0][0]}->{schedule[1][0]}", errs[0] / errs[1], 1.5, ">="))
    rows.append(_check(s, "involution runtime [s]", time.perf_counter() - t0, 10.0))
    return rows


def criterion_dual_norms() -> list:
    s = "involution"
    l1 = PowerOfPNorm(1, 1, 1)
    f = sample(l1, [(-200.0, 200.0)] * 2, (101, 101))
    out = polar(f, [(-1.0, 1.0)] * 2, (21, 21)).output
    Y = out.points()
    interior = ~out.boundary_mask().ravel()
    grid_err = np.abs(out.flat_values - np.abs(Y).max(axis=1))[interior].max()
    exact = polar_analytic(l1)
    Z = np.random.default_rng(7).uniform(-3, 3, size=(50, 2))
    analytic_err = np.abs(exact.evaluate(Z) - np.abs(Z).max(axis=1)).max()
    same_form = isinstance(exact, PowerOfPNorm) and math.isinf(exact.p) and exact.q == 1 and exact.scale == 1
    return [
        _check(s, "P(l1 norm) vs sup norm, grid interior", grid_err, 1e-2),
        _check(s, "P(l1 norm) vs sup norm, closed form", analytic_err if same_form else math.inf, 0.0),
    ]


def involution_input(f: GridFunction) -> list:
    box, shape = [(8 * lo, 8 * hi) for lo, hi in f.box], tuple(2 * n - 1 for n in f.shape)
    return [_check("involution", "P(Pf)-f over the central half", involution_error(f, box, shape), 5e-2)]


# -- J identity ------------------------------------------------------------------------

def j_identity(f: GridFunction, fn, xs) -> list:
    """|f(x) Jf(x/f(x)) - 1| on both routes and the route disagreement, at the rows of xs."""
    fx = np.asarray(fn.evaluate(xs), dtype=float)
    zs = xs / fx[:, None]
    Z = 1.2 * max(1.0, float(np.abs(zs).max()))
    m = 2 * f.shape[0] - 1 if f.dim == 1 else f.shape[0]
    fmap = j_at(f, zs)
    comp = j_transform(f, [(-Z, Z)] * f.dim, (m,) * f.dim, route="composition").evaluate(zs)
    return [float(np.abs(fx * fmap - 1).max()), float(np.abs(fx * comp - 1).max()), float(np.abs(fmap - comp).max())]


def criterion_jdual() -> list:
    s = "jdual"
    rows = []
    xs = np.linspace(0.6, 1.6, 20)[:, None]
    for p in (2, 3, 4):
        fn = PowerOfPNorm(2, p, 1)
        f = sample(fn, [(-4.0, 4.0)], (801,))
        e_fmap, e_comp, gap = j_identity(f, fn, xs)
        rows.append(_check(s, f"|t|^{p}: F-map route identity", e_fmap, 1e-3))
        rows.append(_check(s, f"|t|^{p}: composition route identity", e_comp, 1e-3))
        rows.append(_check(s, f"|t|^{p}: route agreement", gap, 2e-3))
    return rows


def jdual_input(f: GridFunction) -> list:
    s = "jdual"
    if f.dim != 1:
        raise ValueError("the jdual suite takes 1D inputs")
    hi = f.box[0][1]
    xs = np.linspace(0.3 * hi, 0.8 * hi, 20)[:, None]
    e_fmap, e_comp, gap = j_identity(f, f, xs)
    return [_check(s, "F-map route identity", e_fmap, 1e-3), _check(s, "composition route identity", e_comp, 1e-3),
            _check(s, "route agreement", gap, 2e-3)]


# -- Hessian determinant, polar gradients ------------------------------------------------

def _sample_points(rng, n, dim, lo=0.3, hi=1.5):
    """n random points with lo <= |x| <= hi (Euclidean)."""
    d = rng.normal(size=(n, dim))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.uniform(lo, hi, size=(n, 1))


def det_residuals(f, X) -> float:
    return max(hessian_of_polar(f, x).det_residual for x in X)


def criterion_hessian() -> list:
    s = "hessian"
    rng = np.random.default_rng(11)
    A2 = np.array([[2.0, 0.5], [0.5, 1.0]])
    rows = [
        _check(s, "det identity, analytic 1D quadratic", det_residuals(Quadratic(np.array([[3.0]])), _sample_points(rng, 20, 1)), 1e-8),
        _check(s, "det identity, analytic 2D quadratic", det_residuals(Quadratic(A2), _sample_points(rng, 20, 2)), 1e-8),
        _check(s, "det identity, grid 1D quadratic", det_residuals(sample(Quadratic(np.array([[3.0]])), [(-3.0, 3.0)], (1201,)), _sample_points(rng, 20, 1)), 1e-3),
        _check(s, "det identity, grid 2D quadratic", det_residuals(sample(Quadratic(A2), [(-3.0, 3.0)] * 2, (201, 201)), _sample_points(rng, 20, 2)), 1e-3),
    ]
    return rows


def criterion_polar_gradient() -> list:
    s = "hessian"
    sq = PowerOfPNorm(2, 2, 1)
    pg = polar_gradient(sq, [1.0])
    grid = sample(sq, [(-4.0, 4.0)], (801,))
    scan = polar_subdifferential_1d(grid, [1.0])
    cell = 2 * 8.0 / (2 * 801 - 2)
    lo, hi = scan.interval
    rows = [
        _check(s, "polar gradient of x^2 at 1: |y - 2|", abs(pg.y[0] - 2.0), 1e-12),
        _check(s, "polar gradient of x^2 at 1: |Pf - 1|", abs(pg.polar_value - 1.0), 1e-12),
        _check(s, "scan vs formula, distance to the scanned interval [cells]",
               max(lo - pg.y[0], pg.y[0] - hi, 0.0) / cell, 1.0),
        _check(s, "scan vs formula, |y_scan - y| [cells]", abs(scan.y[0] - pg.y[0]) / cell, 1.0),
    ]
    norm = PowerOfPNorm(2, 1, 1)
    empty = [polar_gradient(norm, [1.0]).kind, polar_gradient(sample(norm, [(-4.0, 4.0)], (801,)), [1.0]).kind]
    rows.append(_check(s, "norm input gives Empty (analytic and grid)", sum(k != Kind.EMPTY for k in empty), 0))
    return rows


def criterion_sum_rule() -> list:
    s = "hessian"
    rng = np.random.default_rng(5)
    worst = 0.0
    for dim in (1, 2):
        f, g = PowerOfPNorm(2, 2, 1), PowerOfPNorm(2, 4, 1)
        for x in _sample_points(rng, 10, dim, 0.2, 2.0):
            worst = max(worst, polar_gradient_of_sum(f, g, x)["deviation"])
    return [_check(s, "polar gradient of a sum: combination vs direct (x^2, x^4)", worst, 1e-6)]


def hessian_input(f) -> list:
    rng = np.random.default_rng(11)
    if isinstance(f, GridFunction):
        half = min(hi for _, hi in f.box) / 2
        X = _sample_points(rng, 20, f.dim, 0.2 * half, half)
        bound = 1e-3
    else:
        X = _sample_points(rng, 20, natural_dim(f) or 1)
        bound = 1e-8
    worst, used = 0.0, 0
    for x in X:
        try:
            worst = max(worst, hessian_of_polar(f, x).det_residual)
            used += 1
        except EmptyPolarGradient:
            continue
    if not used:
        return [_check("hessian", "det_residual over 20 random points", math.inf, bound,
                       detail="no sample point has a polar gradient")]
    return [_check("hessian", "det_residual over 20 random points", worst, bound, detail=f"{used} points")]


# -- variation identities ---------------------------------------------------------------

class GridPath:
    """Frames of a family on a common lattice, one per time."""

    def __init__(self, builder, times, box, shape):
        self.times = np.asarray(times, dtype=float)
        self.frames = [sample(builder(t), box, shape) for t in self.times]


def _variation_rows(label, family, t, ys, xs, bound) -> list:
    s = "variation"
    first_l = max(legendre_first_variation_residual(family, t, y) for y in ys)
    first_p = max(polar_first_variation_residual(family, t, y) for y in ys)
    second = np.max([second_variation_residuals(family, t, y).as_tuple() for y in ys], axis=0)
    jvar = max(j_variation_residual(family, t, x) for x in xs)
    names = ("first variation, Legendre", "first variation, polar", "second variation, Legendre",
             "second variation, polar", "second variation, bordered determinant", "second variation, symmetric form",
             "J variation")
    vals = (first_l, first_p, *second, jvar)
    return [_check(s, f"{label}: {n}", v, bound) for n, v in zip(names, vals)]


def criterion_variation() -> list:
    sq = PowerOfPNorm(2, 2, 1)
    A2 = np.array([[2.0, 0.5], [0.5, 1.0]])
    rows = []
    fam = AnalyticFamily(lambda t: Scale(1 + t, sq), t_min=-0.5)
    rows += _variation_rows("analytic 1D scaling", fam, 0.5, [np.array([1.3]), np.array([-0.7])], [np.array([0.9])], 1e-3)
    fam2 = AnalyticFamily(lambda t: Scale(1 + t, Quadratic(A2)), t_min=-0.5)
    rows += _variation_rows("analytic 2D scaling", fam2, 0.5, [np.array([0.8, 0.3])], [np.array([0.7, -0.4])], 1e-3)
    ts = np.linspace(0.0, 1.0, 11)
    g1 = GridPath(lambda t: Scale(1 + t, sq), ts, [(-3.0, 3.0)], (401,))
    rows += _variation_rows("grid 1D scaling", g1, 0.5, [np.array([1.3]), np.array([-1.1])], [np.array([0.9])], 1e-2)
    g2 = GridPath(lambda t: Scale(1 + t, Quadratic(A2)), ts, [(-3.0, 3.0)] * 2, (101, 101))
    rows += _variation_rows("grid 2D scaling", g2, 0.5, [np.array([0.8, 0.3])], [np.array([0.7, -0.4])], 1e-2)
    return rows


# -- geometric inf-convolution ------------------------------------------------------------

def criterion_ginf() -> list:
    s = "ginf"
    sq = PowerOfPNorm(2, 2, 1)
    f = sample(sq, [(-2.0, 2.0)], (401,))
    xs = f.axes[0]
    mid = np.abs(xs) <= 1.0
    dual = ginf_dual(f, f).output
    direct = ginf_direct_grid(f, f)
    rows = [
        _check(s, "x^2 ⊡ x^2: dual route vs direct scan (N=401)", np.abs(dual.values - direct.output.values)[mid].max(), 1e-2),
        _check(s, "x^2 ⊡ x^2: dual route vs x^2/2", np.abs(dual.values - xs ** 2 / 2)[mid].max(), 1e-2),
    ]
    l1 = sample(ray(1.0), [(-2.0, 2.0)], (401,))
    out = ginf_dual(l1, l1, dual_box=[(-1000.0, 1000.0)], dual_shape=(4001,)).output
    right = (xs >= 0) & (xs <= 1.0)
    rows.append(_check(s, "l1 ⊡ l1 vs l_1/2 on [0, 1] (grid)", np.abs(out.values - xs / 2)[right].max(), 1e-3))
    rows.append(_check(s, "l1 ⊡ l1 is +inf on the negative axis", int(np.sum(np.isfinite(out.values[xs < 0]))), 0))
    closed = ginf_analytic(ray(1.0), ray(1.0))
    T = np.linspace(-2, 2, 41)[:, None]
    a, b = ray(0.5).evaluate(T), closed.evaluate(T)
    with np.errstate(invalid="ignore"):
        diff = np.where(np.isinf(a) & np.isinf(b), 0.0, np.abs(a - b))
    rows.append(_check(s, "l1 ⊡ l1 vs l_1/2 (closed form)", float(np.nan_to_num(diff, nan=np.inf).max()), 0.0))
    return rows


def ginf_inputs(f: GridFunction, g: GridFunction) -> list:
    xs = f.axes[0]
    mid = np.abs(xs) <= 0.5 * f.box[0][1]
    dual = ginf_dual(f, g).output
    direct = ginf_direct_grid(f, g).output
    return [_check("ginf", "dual route vs direct scan (central half)", np.abs(dual.values - direct.values)[mid].max(), 1e-2)]


# -- PDE ---------------------------------------------------------------------------------

def _grid_times(dt, t_end=1.0):
    return np.round(np.arange(0.0, t_end + dt / 2, dt), 12)


def criterion_hj() -> list:
    s = "pde"
    sq = PowerOfPNorm(2, 2, 1)
    g = Scale(0.5, sq)
    rows = []
    levels = ((129, 0.05), (257, 0.025), (513, 0.0125))
    residuals = []
    for n, dt in levels:
        f = sample(sq, [(-2.0, 2.0)], (n,))
        path = solve_polar_hj(f, g, _grid_times(dt))
        if n == 257:
            xs = f.axes[0]
            mid = np.abs(xs) <= 1.0
            for t in (0.25, 0.5, 1.0):
                err = np.abs(path.frame(t).values - xs ** 2 / (1 + 2 * t))[mid].max()
                rows.append(_check(s, f"HJ quadratic Hamiltonian vs x^2/(1+2t) at t={t}", err, 2e-2))
        residuals.append(max(hj_residual(path, 0.5, [x]) for x in (0.5, 0.8, -0.7)))
    slopes = [math.log(a / b, 2) for a, b in zip(residuals, residuals[1:])]
    rows.append(_check(s, "HJ residual refinement slope (h, dt halved)", min(slopes), 0.8, ">=",
                       detail="residuals " + ", ".join(f"{r:.3e}" for r in residuals)))
    return rows


def criterion_ma_dirichlet() -> list:
    s = "pde"
    sq = PowerOfPNorm(2, 2, 1)
    rows = []
    def closed(t, xs):
        return xs ** 2 / (4 * ((1 - t) / 4 + t / 16))
    for n, dt in ((257, 0.01), (513, 0.005)):
        u0, u1 = sample(sq, [(-2.0, 2.0)], (n,)), sample(Scale(4, sq), [(-2.0, 2.0)], (n,))
        path = solve_ma_dirichlet(u0, u1, 1.0, _grid_times(dt))
        xs = u0.axes[0]
        mid = np.abs(xs) <= 1.0
        if n == 257:
            err = max(np.abs(path.frame(t).values - closed(t, xs))[mid].max() for t in (0.2, 0.5, 0.8))
            rows.append(_check(s, "MA Dirichlet x^2 -> 4x^2 vs closed form", err, 2e-2))
        res = max(ma_residual(path, t, [x]) for t in (0.2, 0.5, 0.8) for x in (0.5, 0.8, -0.7))
        rows.append(_check(s, f"MA Dirichlet residual at N={n}, dt={dt}", res, 5e-2))
    res = []
    for n, dt in ((129, 0.02), (257, 0.01), (513, 0.005)):
        u0, u1 = sample(sq, [(-2.0, 2.0)], (n,)), sample(Sum((sq, PowerOfPNorm(2, 4, 1))), [(-2.0, 2.0)], (n,))
        path = solve_ma_dirichlet(u0, u1, 1.0, _grid_times(dt))
        res.append(max(ma_residual(path, t, [x]) for t in (0.2, 0.5, 0.8) for x in (0.5, 0.8, -0.7)))
    rows.append(_check(s, "MA residual x^2 -> x^2+x^4 decreases under refinement", res[-1] / res[0], 1.0,
                       detail="residuals " + ", ".join(f"{r:.3e}" for r in res)))
    return rows


def criterion_ma_cauchy() -> list:
    s = "pde"
    sq = PowerOfPNorm(2, 2, 1)
    u0 = sample(sq, [(-2.0, 2.0)], (257,))
    try:
        _, data = solve_ma_cauchy(u0, u0, _grid_times(0.05, 2.0))
        t_est = data.T_est
    except BeyondMaximalTime as exc:
        t_est = exc.t_max
    rows = [
        _check(s, "MA Cauchy v=1: T_est >= 0.95", t_est, 0.95, ">="),
        _check(s, "MA Cauchy v=1: T_est <= 1", t_est, 1.0),
        _check(s, "MA Cauchy initial velocity (central difference at t=0)", initial_velocity_check(u0, u0)["max_deviation"], 5e-2),
    ]
    zero = sample(zero_function(), [(-2.0, 2.0)], (257,))
    path, data = solve_ma_cauchy(u0, zero, [0.0, 0.5, 1.0, 2.0])
    drift = max(np.abs(fr.values - path.frames[0].values).max() for fr in path.frames)
    rows.append(_check(s, "MA Cauchy zero velocity keeps u0", drift, 1e-12))
    return rows


# -- driver ------------------------------------------------------------------------------

_BUILTIN = {
    "involution": (criterion_involution, criterion_dual_norms),
    "jdual": (criterion_jdual,),
    "hessian": (criterion_hessian, criterion_polar_gradient, criterion_sum_rule),
    "variation": (criterion_variation,),
    "ginf": (criterion_ginf,),
    "pde": (criterion_hj, criterion_ma_dirichlet, criterion_ma_cauchy),
}

_WITH_INPUT = {"involution": involution_input, "jdual": jdual_input, "hessian": hessian_input}


def run_suite(suite: str, inputs=None) -> list:
    """Run a suite on the built-in catalog or on ``inputs`` (loaded functions)."""
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdvisoryWarning)
        if inputs:
            if suite == "ginf":
                if len(inputs) != 2:
                    raise ValueError("the ginf suite takes two inputs")
                return ginf_inputs(*inputs)
            if suite not in _WITH_INPUT:
                raise ValueError(f"suite {suite!r} only runs on the built-in catalog")
            rows = []
            for f in inputs:
                rows += _WITH_INPUT[suite](f)
            return rows
        names = [n for n in SUITES if n != "all"] if suite == "all" else [suite]
        rows = []
        for name in names:
            for fn in _BUILTIN[name]:
                try:
                    rows += fn()
                except PolarityError as exc:
                    rows.append(Check(name, fn.__name__, math.nan, math.nan, "<=", False, f"raised {exc!r}"))
        return rows
