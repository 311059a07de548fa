"""Geometric inf-convolution f ⊡ g = (f° + g°)°.

Three independent views are provided: the dual route (add the polars and
polarize back), a brute-force scan over pairs in 1D using the harmonic-sum
representation, and a set-level check through the cone bodies
K_φ = {(x, y): y > 0, y φ(x/y) <= 1}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NoFeasiblePair
from .funcspace.catalog import AnalyticConvexFunction, Sum, simplify
from .funcspace.grid import GridFunction
from .transforms import polar, polar_analytic, wide_dual_lattice


class Route(str, Enum):
    DUAL_SPACE = "DualSpace"
    DIRECT_1D = "Direct1D"


@dataclass(frozen=True, eq=False)
class GinfResult:
    output: GridFunction
    route: Route
    witness_pairs: list | None = None


def _extended_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    out = a + b
    out[np.isinf(a) | np.isinf(b)] = math.inf
    return out


def ginf_dual(f: GridFunction, g: GridFunction, *, dual_box=None, dual_shape=None, refine=False) -> GinfResult:
    """(Pf + Pg)° on the common lattice of f and g.

    The polars live on ``dual_box``/``dual_shape`` (default:
    ``wide_dual_lattice``) and the result is polarized back onto the input
    lattice. Norm-like inputs need a much wider dual box since their polars
    only reach the asymptotic slope far out. ``refine`` is passed on to
    every polar.
    """
    if not f.same_lattice(g):
        raise ValueError("f and g must share a lattice")
    if dual_box is None:
        dual_box, dual_shape = wide_dual_lattice(f)
    pf = polar(f, dual_box, dual_shape, refine=refine).output
    pg = polar(g, dual_box, dual_shape, refine=refine).output
    dual = pf.with_values(_extended_sum(pf.values, pg.values))
    out = polar(dual, f.box, f.shape, refine=refine).output
    return GinfResult(GridFunction(f.box, f.shape, out.values, convexified=True), Route.DUAL_SPACE)


def ginf_analytic(f: AnalyticConvexFunction, g: AnalyticConvexFunction) -> AnalyticConvexFunction:
    """Closed form of f ⊡ g when both polars and the polar of their sum have one."""
    return polar_analytic(simplify(Sum((polar_analytic(f), polar_analytic(g)))))


def _direct_1d(f: GridFunction, g: GridFunction, x: float, band: float):
    ys, fy = f.axes[0], f.values
    zs, gz = g.axes[0], g.values
    if x == 0:
        return 0.0, (0.0, 0.0)
    okf = np.isfinite(fy) & (fy > f.eps_zero())
    okg = np.isfinite(gz) & (gz > g.eps_zero())
    ys, fy = ys[okf], fy[okf]
    zs, gz = zs[okg], gz[okg]
    F, G = fy[:, None], gz[None, :]
    # cleared constraint (x - y) g(z) = (z - x) f(y)
    lhs = (x - ys[:, None]) * G
    rhs = (zs[None, :] - x) * F
    cell = max(float(f.cell[0]), float(g.cell[0]))
    feasible = np.abs(lhs - rhs) <= band * cell * (F + G)
    if not feasible.any():
        raise NoFeasiblePair(f"no lattice pair satisfies the constraint at x = {x}")
    harmonic = np.where(feasible, F * G / (F + G), math.inf)
    k = int(np.argmin(harmonic))
    i, j = divmod(k, harmonic.shape[1])
    return float(harmonic[i, j]), (float(ys[i]), float(zs[j]))


def ginf_direct_1d(f: GridFunction, g: GridFunction, x, band: float = 0.5):
    """Harmonic-sum infimum over lattice pairs (y, z) tied to x by the constraint.

    Minimises f(y) g(z) / (f(y) + g(z)) over node pairs with
    |(x - y) g(z) - (z - x) f(y)| <= band * cell * (f(y) + g(z)).
    Returns (value, (y, z)). Needs strictly convex samples that are
    positive away from 0.
    """
    if f.dim != 1 or g.dim != 1:
        raise ValueError("the direct scan is one-dimensional")
    return _direct_1d(f, g, float(np.atleast_1d(x)[0]), band)


def ginf_direct_grid(f: GridFunction, g: GridFunction, band: float = 0.5) -> GinfResult:
    """The direct scan at every node of f's lattice; infeasible nodes become +inf."""
    if f.dim != 1:
        raise ValueError("the direct scan is one-dimensional")
    xs = f.axes[0]
    vals = np.empty(len(xs))
    pairs = []
    for k, x in enumerate(xs):
        try:
            vals[k], pair = _direct_1d(f, g, float(x), band)
        except NoFeasiblePair:
            vals[k], pair = math.inf, None
        pairs.append(pair)
    return GinfResult(GridFunction(f.box, f.shape, vals), Route.DIRECT_1D, pairs)


def witness_point(f: GridFunction, g: GridFunction, y: float, z: float) -> float:
    """The convex combination (g(z) y + f(y) z) / (f(y) + g(z)) recovered from a witness pair."""
    fy, gz = float(f.evaluate([y])), float(g.evaluate([z]))
    return (gz * y + fy * z) / (fy + gz)


def _cone_samples(phi: GridFunction, n: int, rng) -> np.ndarray:
    """Points λ (u, 1) / φ(u) of K_φ with u drawn from φ's box and λ in (0, 1]."""
    lo = np.array([b[0] for b in phi.box])
    hi = np.array([b[1] for b in phi.box])
    U = rng.uniform(lo, hi, size=(4 * n, phi.dim))
    v = phi.evaluate(U)
    keep = np.isfinite(v) & (v > phi.eps_zero())
    U, v = U[keep][:n], v[keep][:n]
    lam = rng.uniform(0.0, 1.0, size=len(U))
    lam[: len(U) // 2] = 1.0  # half of them on the boundary
    return np.hstack([U / v[:, None], 1.0 / v[:, None]]) * lam[:, None]


def cone_body_check(f: GridFunction, g: GridFunction, n_samples: int = 400, *, h: GridFunction | None = None,
                    seed: int = 0, **dual) -> dict:
    """Test that K_f + K_g lies in K_h for h = f ⊡ g (dual route unless given).

    Sums p + q are mapped back to (x, y); a sum is inside K_h when
    y h(x/y) <= 1. ``max_deviation`` is the largest excess over 1. Half of
    the samples sit on the boundaries of K_f and K_g, so sums probe the
    boundary of K_h too. The reverse inclusion is what the 1D direct scan
    checks: its witnesses are boundary points of K_f and K_g summing to
    a boundary point of K_h.
    """
    if f.dim > 2:
        raise ValueError("cone body sampling is limited to 1D and 2D")
    if h is None:
        h = ginf_dual(f, g, **dual).output
    rng = np.random.default_rng(seed)
    P = _cone_samples(f, n_samples, rng)
    Q = _cone_samples(g, n_samples, rng)
    m = min(len(P), len(Q))
    S = P[:m] + Q[rng.permutation(len(Q))[:m]]
    X, Y = S[:, :-1], S[:, -1]
    U = X / Y[:, None]
    inside_box = h.contains(U)
    hv = h.evaluate(U[inside_box])
    excess = Y[inside_box] * hv - 1.0
    max_dev = float(max(0.0, excess.max())) if excess.size else 0.0

    return {"max_deviation": max_dev, "n_sums": int(inside_box.sum())}
