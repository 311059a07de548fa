"""Sampled geometric convex functions on uniform box lattices."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import BoxExcludesOrigin, NotDifferentiable, OutOfBox

MAX_DIM = 3


def _check_lattice(box, shape):
    box = tuple((float(lo), float(hi)) for lo, hi in box)
    shape = tuple(int(s) for s in shape)
    if not 1 <= len(box) <= MAX_DIM:
        raise ValueError(f"dimension must be between 1 and {MAX_DIM}, got {len(box)}")
    if len(shape) != len(box):
        raise ValueError("box and shape disagree on the dimension")
    for lo, hi in box:
        if not lo < 0 < hi:
            raise BoxExcludesOrigin(f"box axis [{lo}, {hi}] must satisfy lo < 0 < hi")
    for s in shape:
        if s < 3 or s % 2 == 0:
            raise ValueError(f"every axis needs an odd node count >= 3, got {s}")
    return box, shape


def lattice_axes(box, shape) -> tuple[np.ndarray, ...]:
    """Per-axis node coordinates; the middle node of every axis is pinned to 0.

    The two halves of an axis are spaced independently when the box is not
    symmetric, which keeps the origin on the lattice for any lo < 0 < hi.
    Symmetric boxes (the common case) give a uniform axis.
    """
    axes = []
    for (lo, hi), n in zip(box, shape):
        if math.isclose(-lo, hi, rel_tol=1e-12):
            ax = np.linspace(lo, hi, n)
            ax[n // 2] = 0.0
        else:
            ax = np.concatenate([np.linspace(lo, 0.0, n // 2 + 1)[:-1], np.linspace(0.0, hi, n // 2 + 1)])
        axes.append(ax)
    return tuple(axes)


def lattice_points(box, shape) -> np.ndarray:
    axes = lattice_axes(box, shape)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Extended-nonnegative samples of a function on a box lattice.

    ``values`` has shape ``shape`` (C order); ``math.inf`` is the single
    sentinel for +inf. ``argmax_map`` is filled by the duality transforms
    with the flat index (into the source lattice) where each output node's
    sup was attained, -1 where it was not attained.
    """

    box: tuple
    shape: tuple
    values: np.ndarray
    convexified: bool = False
    argmax_map: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        box, shape = _check_lattice(self.box, self.shape)
        v = np.array(self.values, dtype=float).reshape(shape)
        if np.isnan(v).any():
            raise ValueError("values contain NaN")
        if np.isneginf(v).any():
            raise ValueError("values must be >= 0")
        finite = v[np.isfinite(v)]
        scale = max(1.0, float(finite.max()) if finite.size else 1.0)
        if finite.size and finite.min() < -1e-9 * scale:
            raise ValueError(f"values must be >= 0 (min {finite.min():.3e})")
        v = np.where(v < 0, 0.0, v)
        origin = tuple(s // 2 for s in shape)
        if abs(v[origin]) > 1e-9 * scale:
            raise ValueError(f"value at the origin must be 0, got {v[origin]}")
        v[origin] = 0.0
        v.flags.writeable = False
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "values", v)
        if self.argmax_map is not None:
            a = np.asarray(self.argmax_map, dtype=np.int64).reshape(shape)
            a.flags.writeable = False
            object.__setattr__(self, "argmax_map", a)

    # -- lattice geometry ---------------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def axes(self) -> tuple[np.ndarray, ...]:
        return lattice_axes(self.box, self.shape)

    @property
    def cell(self) -> np.ndarray:
        """Largest node spacing per axis."""
        return np.array([np.diff(a).max() for a in self.axes])

    @property
    def origin_index(self) -> tuple[int, ...]:
        return tuple(s // 2 for s in self.shape)

    def points(self) -> np.ndarray:
        return lattice_points(self.box, self.shape)

    @property
    def flat_values(self) -> np.ndarray:
        return self.values.ravel()

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for d, s in enumerate(self.shape):
            idx = [slice(None)] * self.dim
            idx[d] = 0
            mask[tuple(idx)] = True
            idx[d] = s - 1
            mask[tuple(idx)] = True
        return mask

    def max_finite(self) -> float:
        v = self.values[np.isfinite(self.values)]
        return float(v.max()) if v.size else 0.0

    def eps_zero(self) -> float:
        """Threshold below which a node counts as part of the zero set."""
        return max(1e-12, 1e-9 * self.max_finite())

    def with_values(self, values, **kw) -> "GridFunction":
        kw.setdefault("convexified", False)
        kw.setdefault("argmax_map", None)
        return replace(self, values=values, **kw)

    def same_lattice(self, other: "GridFunction") -> bool:
        return self.shape == other.shape and np.allclose(self.box, other.box)

    # -- evaluation -----------------------------------------------------------
    def contains(self, X, slack=0.0) -> np.ndarray:
        X = np.atleast_2d(X)
        lo = np.array([b[0] for b in self.box]) - slack
        hi = np.array([b[1] for b in self.box]) + slack
        return np.all((X >= lo) & (X <= hi), axis=1)

    def __call__(self, x):
        return self.evaluate(x)

    def evaluate(self, x):
        """Multilinear interpolation; +inf if any node with positive weight is +inf."""
        X = np.asarray(x, dtype=float)
        single = X.ndim <= 1
        X = np.atleast_2d(X).reshape(-1, self.dim)
        width = np.array([hi - lo for lo, hi in self.box])
        if not np.all(self.contains(X, slack=1e-12 * width.max())):
            raise OutOfBox("evaluation point outside the grid box")
        out = self._interp(X)
        return float(out[0]) if single else out

    def _interp(self, X):
        axes = self.axes
        idx0, frac = [], []
        for d, ax in enumerate(axes):
            i = np.clip(np.searchsorted(ax, X[:, d], side="right") - 1, 0, len(ax) - 2)
            h = ax[i + 1] - ax[i]
            idx0.append(i)
            frac.append(np.clip((X[:, d] - ax[i]) / h, 0.0, 1.0))
        out = np.zeros(len(X))
        for corner in itertools.product((0, 1), repeat=self.dim):
            w = np.ones(len(X))
            index = []
            for d, c in enumerate(corner):
                w = w * (frac[d] if c else 1.0 - frac[d])
                index.append(idx0[d] + c)
            v = self.values[tuple(index)]
            out = out + np.where(w > 0, w * np.where(np.isinf(v), 0.0, v), 0.0)
            out = np.where((w > 0) & np.isinf(v), np.inf, out)
        return out

    # -- finite differences ------------------------------------------------
    def _slope_reference(self) -> float:
        finite = self.values[np.isfinite(self.values)]
        width = max(hi - lo for lo, hi in self.box)
        return float(np.ptp(finite)) / width if finite.size else 0.0

    def gradient(self, x) -> np.ndarray:
        """Central differences with step max(1e-5, cell/2).

        Raises NotDifferentiable when one-sided cell slopes disagree by more
        than 10 * slope scale * cell, or when the stencil touches +inf.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not self.contains(x[None, :])[0]:
            raise OutOfBox("gradient point outside the grid box")
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        f0 = self._interp(x[None, :])[0]
        if math.isinf(f0):
            raise NotDifferentiable("point outside the domain")
        ref = self._slope_reference()
        g = np.empty(self.dim)
        for d in range(self.dim):
            c = self.cell[d]
            h = max(1e-5, c / 2)
            e = np.zeros(self.dim)
            e[d] = 1.0
            xp = np.minimum(x + h * e, hi)
            xm = np.maximum(x - h * e, lo)
            fp, fm = self._interp(np.vstack([xp, xm]))
            if math.isinf(fp) or math.isinf(fm):
                raise NotDifferentiable("point is not interior to the domain")
            g[d] = (fp - fm) / (xp[d] - xm[d])
            if x[d] - c >= lo[d] and x[d] + c <= hi[d]:
                fpp, fmm = self._interp(np.vstack([x + c * e, x - c * e]))
                if math.isinf(fpp) or math.isinf(fmm):
                    raise NotDifferentiable("point is not interior to the domain")
                sp, sm = (fpp - f0) / c, (f0 - fmm) / c
                tol_kink = 10 * max(abs(sp), abs(sm), ref) * c
                if abs(sp - sm) > tol_kink:
                    raise NotDifferentiable(f"kink along axis {d}: one-sided slopes {sm:.4g}, {sp:.4g}")
        return g

    def jet(self, x) -> tuple[float, np.ndarray, np.ndarray]:
        """Value, gradient and Hessian at x of a least-squares quadratic.

        The quadratic is fitted on the 3^n neighbourhood of the interior node
        nearest to x. It reproduces quadratics exactly, so it is the smooth
        local model used by the polar calculus on grids.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = self.dim
        axes = self.axes
        idx = np.array([int(np.clip(np.abs(ax - xi).argmin(), 1, len(ax) - 2)) for ax, xi in zip(axes, x)])
        offsets = np.array(list(itertools.product((-1, 0, 1), repeat=n)))
        nb = idx + offsets
        V = self.values[tuple(nb.T)]
        if np.isinf(V).any():
            raise NotDifferentiable("quadratic stencil touches +inf")
        D = np.stack([axes[d][nb[:, d]] for d in range(n)], axis=1) - x
        pairs = [(i, j) for i in range(n) for j in range(i, n)]
        cols = [np.ones(len(D))] + [D[:, i] for i in range(n)]
        cols += [D[:, i] * D[:, j] * (0.5 if i == j else 1.0) for i, j in pairs]
        c = np.linalg.lstsq(np.stack(cols, axis=1), V, rcond=None)[0]
        H = np.empty((n, n))
        for k, (i, j) in enumerate(pairs):
            H[i, j] = H[j, i] = c[1 + n + k]
        return float(c[0]), c[1:1 + n].copy(), H

    def hessian(self, x) -> np.ndarray:
        """Second central differences with cell-sized steps (symmetrized)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = self.dim
        c = self.cell
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        if np.any(x - c < lo - 1e-12) or np.any(x + c > hi + 1e-12):
            raise OutOfBox("hessian stencil leaves the grid box")
        E = np.eye(n) * c
        stencil = [x]
        for i in range(n):
            stencil += [x + E[i], x - E[i]]
            for j in range(i + 1, n):
                stencil += [x + E[i] + E[j], x + E[i] - E[j], x - E[i] + E[j], x - E[i] - E[j]]
        v = self._interp(np.array(stencil))
        if np.isinf(v).any():
            raise NotDifferentiable("hessian stencil touches +inf")
        H = np.empty((n, n))
        k = 1
        f0 = v[0]
        for i in range(n):
            H[i, i] = (v[k] - 2 * f0 + v[k + 1]) / c[i] ** 2
            k += 2
            for j in range(i + 1, n):
                H[i, j] = H[j, i] = (v[k] - v[k + 1] - v[k + 2] + v[k + 3]) / (4 * c[i] * c[j])
                k += 4
        return H


def sample(f, box, shape) -> GridFunction:
    """Evaluate a catalog function on every lattice node."""
    box, shape = _check_lattice(box, shape)
    X = lattice_points(box, shape)
    return GridFunction(box, shape, np.asarray(f.evaluate(X), dtype=float).reshape(shape))


def midpoint_convexity_violation(g: GridFunction) -> float:
    """Largest violation of v[i-k] + v[i+k] >= 2 v[i] over neighbouring lattice triples.

    Triples run along every lattice direction in {-1, 0, 1}^n. A triple
    whose middle node is +inf while both ends are finite counts as an
    infinite violation; triples with an infinite end are skipped.
    """
    v = g.values
    worst = 0.0
    dirs = [d for d in itertools.product((-1, 0, 1), repeat=g.dim) if any(d)]
    dirs = [d for d in dirs if next(x for x in d if x) > 0]
    views = {0: (slice(None),) * 3, 1: (slice(0, -2), slice(1, -1), slice(2, None)),
             -1: (slice(2, None), slice(1, -1), slice(0, -2))}
    for d in dirs:
        bwd = tuple(views[s][0] for s in d)
        mid = tuple(views[s][1] for s in d)
        fwd = tuple(views[s][2] for s in d)
        a, m, b = v[bwd], v[mid], v[fwd]
        ends_finite = np.isfinite(a) & np.isfinite(b)
        if np.any(ends_finite & np.isinf(m)):
            return math.inf
        ok = ends_finite & np.isfinite(m)
        if ok.any():
            worst = max(worst, float(np.max((2 * m - a - b)[ok], initial=0.0)))
    return worst
