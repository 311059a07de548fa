"""Closed-form geometric convex functions with exact derivatives.

Every element is nonnegative, vanishes at the origin and is convex. The
variants compose (``Sum``, ``Scale``, ``PrecomposeLinear``) so the usual
test functions can be written down exactly, e.g. ``|x|^2 + |x|^4`` or the
ray function ``l_c``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar

import numpy as np

from ..errors import NotDifferentiable

_BOUNDARY_RTOL = 1e-12


def _as_points(x):
    X = np.asarray(x, dtype=float)
    single = X.ndim <= 1
    X = np.atleast_1d(X)
    if X.ndim == 1:
        X = X[None, :]
    return X, single


def _enc(v: float):
    return "inf" if math.isinf(v) else float(v)


def _dec(v) -> float:
    return math.inf if v in ("inf", "Infinity") else float(v)


def pnorm(X: np.ndarray, p: float) -> np.ndarray:
    """Row-wise p-norm of a (M, n) array; p may be ``inf``."""
    if math.isinf(p):
        return np.max(np.abs(X), axis=1)
    if p == 1:
        return np.sum(np.abs(X), axis=1)
    if p == 2:
        return np.sqrt(np.sum(X * X, axis=1))
    return np.sum(np.abs(X) ** p, axis=1) ** (1.0 / p)


def conjugate_exponent(p: float) -> float:
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1.0)


class AnalyticConvexFunction:
    """Base class of the closed-form catalog.

    Subclasses implement ``_eval`` on a (M, n) array of points and the
    single-point derivatives ``gradient`` and ``hessian``.
    """

    tag: ClassVar[str] = ""

    def __call__(self, x):
        return self.evaluate(x)

    def evaluate(self, x):
        """Value at one point (returns float) or at the rows of a (M, n) array."""
        X, single = _as_points(x)
        v = self._eval(X)
        return float(v[0]) if single else v

    def _eval(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    # Composition sugar. Kept minimal: these build catalog nodes, nothing is simplified.
    def __add__(self, other):
        if isinstance(other, AnalyticConvexFunction):
            return Sum((self, other))
        return NotImplemented

    def __rmul__(self, t):
        return Scale(float(t), self)


@dataclass(frozen=True)
class PowerOfPNorm(AnalyticConvexFunction):
    """f(x) = scale * ||x||_p ** q."""

    p: float = 2.0
    q: float = 1.0
    scale: float = 1.0
    tag: ClassVar[str] = "power"

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not self.q >= 1:
            raise ValueError(f"q must be >= 1, got {self.q}")
        if not self.scale > 0:
            raise ValueError(f"scale must be > 0, got {self.scale}")

    def _eval(self, X):
        return self.scale * pnorm(X, self.p) ** self.q

    def _norm_grad(self, x):
        p = self.p
        N = float(pnorm(x[None, :], p)[0])
        if math.isinf(p):
            a = np.abs(x)
            top = np.flatnonzero(a >= a.max() * (1 - 1e-14))
            if len(top) > 1:
                raise NotDifferentiable("sup-norm has a tie between coordinates")
            g = np.zeros_like(x)
            g[top[0]] = np.sign(x[top[0]])
            return N, g
        if p == 1:
            if np.any(x == 0):
                raise NotDifferentiable("1-norm is not differentiable where a coordinate vanishes")
            return N, np.sign(x)
        return N, np.sign(x) * np.abs(x) ** (p - 1) * N ** (1 - p)

    def gradient(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if not np.any(x):
            if self.q > 1:
                return np.zeros_like(x)
            raise NotDifferentiable("norm kink at the origin")
        N, g = self._norm_grad(x)
        return self.scale * self.q * N ** (self.q - 1) * g

    def hessian(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        n = x.size
        p, q, s = self.p, self.q, self.scale
        if not np.any(x):
            if q == 2 and p == 2:
                return 2 * s * np.eye(n)
            if q > 2 and p >= 2:
                return np.zeros((n, n))
            raise NotDifferentiable("not twice differentiable at the origin")
        N, g = self._norm_grad(x)
        if p == 1 or math.isinf(p) or n == 1:
            HN = np.zeros((n, n))
        else:
            if p < 2 and np.any(x == 0):
                raise NotDifferentiable("p-norm with p < 2 has unbounded curvature on the axes")
            HN = (p - 1) / N * (np.diag(np.abs(x) ** (p - 2)) * N ** (2 - p) - np.outer(g, g))
        return s * q * ((q - 1) * N ** (q - 2) * np.outer(g, g) + N ** (q - 1) * HN)

    def to_dict(self):
        return {"type": self.tag, "p": _enc(self.p), "q": self.q, "scale": self.scale}


@dataclass(frozen=True, eq=False)
class Quadratic(AnalyticConvexFunction):
    """f(x) = 0.5 * <A x, x> with A symmetric positive semidefinite."""

    A: np.ndarray = field(default_factory=lambda: np.eye(1))
    tag: ClassVar[str] = "quadratic"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if not np.allclose(A, A.T, atol=1e-12 * max(1.0, np.abs(A).max())):
            raise ValueError("A must be symmetric")
        if np.linalg.eigvalsh(A).min() < -1e-12 * max(1.0, np.abs(A).max()):
            raise ValueError("A must be positive semidefinite")
        A = 0.5 * (A + A.T)
        A.flags.writeable = False
        object.__setattr__(self, "A", A)

    def _eval(self, X):
        return 0.5 * np.einsum("mi,ij,mj->m", X, self.A, X)

    def gradient(self, x):
        return self.A @ np.atleast_1d(np.asarray(x, dtype=float))

    def hessian(self, x):
        return self.A.copy()

    def to_dict(self):
        return {"type": self.tag, "A": self.A.tolist()}


@dataclass(frozen=True)
class IndicatorOfBall(AnalyticConvexFunction):
    """0 on the closed p-ball of radius r, +inf outside.

    ``radius=0`` is the indicator of the origin and ``radius=inf`` the zero
    function.
    """

    p: float = 2.0
    radius: float = 1.0
    tag: ClassVar[str] = "ball"

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"p must be >= 1, got {self.p}")
        if not self.radius >= 0:
            raise ValueError("radius must be >= 0")

    def _eval(self, X):
        if math.isinf(self.radius):
            return np.zeros(len(X))
        N = pnorm(X, self.p)
        return np.where(N <= self.radius * (1 + _BOUNDARY_RTOL), 0.0, np.inf)

    def gradient(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if float(pnorm(x[None, :], self.p)[0]) < self.radius:
            return np.zeros_like(x)
        raise NotDifferentiable("indicator is only differentiable inside its ball")

    def hessian(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        self.gradient(x)
        return np.zeros((x.size, x.size))

    def to_dict(self):
        return {"type": self.tag, "p": _enc(self.p), "radius": _enc(self.radius)}


@dataclass(frozen=True, eq=False)
class IndicatorOfPolytope(AnalyticConvexFunction):
    """0 on {x : A x <= b}, +inf outside; b >= 0 keeps the origin inside."""

    A: np.ndarray = field(default_factory=lambda: np.array([[1.0], [-1.0]]))
    b: np.ndarray = field(default_factory=lambda: np.array([1.0, 1.0]))
    tag: ClassVar[str] = "polytope"

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise ValueError("A and b disagree on the number of constraints")
        if np.any(b < 0):
            raise ValueError("every half-space must contain the origin (b >= 0)")
        A.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    def _slack(self, X):
        return X @ self.A.T - self.b

    def _eval(self, X):
        tol = _BOUNDARY_RTOL * (1 + np.abs(self.b))
        return np.where(np.all(self._slack(X) <= tol, axis=1), 0.0, np.inf)

    def gradient(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.all(self._slack(x[None, :]) < 0):
            return np.zeros_like(x)
        raise NotDifferentiable("indicator is only differentiable inside its polytope")

    def hessian(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        self.gradient(x)
        return np.zeros((x.size, x.size))

    def to_dict(self):
        return {"type": self.tag, "A": self.A.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True, eq=False)
class MaxOfAffinePlus(AnalyticConvexFunction):
    """f(x) = max(0, max_i <a_i, x> + b_i) with every b_i <= 0."""

    a: np.ndarray = field(default_factory=lambda: np.array([[1.0]]))
    b: np.ndarray = field(default_factory=lambda: np.array([0.0]))
    tag: ClassVar[str] = "maxaffine"

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if a.shape[0] != b.shape[0]:
            raise ValueError("a and b disagree on the number of pieces")
        if np.any(b > 0):
            raise ValueError("offsets must be <= 0 so that f(0) = 0")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def _pieces(self, X):
        return np.concatenate([np.zeros((len(X), 1)), X @ self.a.T + self.b], axis=1)

    def _eval(self, X):
        return self._pieces(X).max(axis=1)

    def gradient(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        v = self._pieces(x[None, :])[0]
        top = v.max()
        tol = 1e-14 * max(1.0, abs(top))
        active = np.flatnonzero(v >= top - tol)
        slopes = np.vstack([np.zeros(x.size), self.a])[active]
        if np.ptp(slopes, axis=0).max() > 0:
            raise NotDifferentiable("two affine pieces are active")
        return slopes[0].copy()

    def hessian(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        self.gradient(x)
        return np.zeros((x.size, x.size))

    def to_dict(self):
        return {"type": self.tag, "a": self.a.tolist(), "b": self.b.tolist()}


@dataclass(frozen=True)
class Sum(AnalyticConvexFunction):
    children: tuple = ()
    tag: ClassVar[str] = "sum"

    def __post_init__(self):
        if not self.children:
            raise ValueError("Sum needs at least one child")
        object.__setattr__(self, "children", tuple(self.children))

    def _eval(self, X):
        return np.sum([c._eval(X) for c in self.children], axis=0)

    def gradient(self, x):
        return np.sum([c.gradient(x) for c in self.children], axis=0)

    def hessian(self, x):
        return np.sum([c.hessian(x) for c in self.children], axis=0)

    def to_dict(self):
        return {"type": self.tag, "children": [c.to_dict() for c in self.children]}


@dataclass(frozen=True)
class Scale(AnalyticConvexFunction):
    t: float = 1.0
    child: AnalyticConvexFunction = None
    tag: ClassVar[str] = "scale"

    def __post_init__(self):
        if not self.t > 0:
            raise ValueError(f"scale factor must be > 0, got {self.t}")
        if self.child is None:
            raise ValueError("Scale needs a child")

    def _eval(self, X):
        # 0 * inf never occurs since t > 0
        return self.t * self.child._eval(X)

    def gradient(self, x):
        return self.t * self.child.gradient(x)

    def hessian(self, x):
        return self.t * self.child.hessian(x)

    def to_dict(self):
        return {"type": self.tag, "t": self.t, "child": self.child.to_dict()}


@dataclass(frozen=True, eq=False)
class PrecomposeLinear(AnalyticConvexFunction):
    """f(x) = child(M x) with M invertible."""

    M: np.ndarray = field(default_factory=lambda: np.eye(1))
    child: AnalyticConvexFunction = None
    tag: ClassVar[str] = "precompose"

    def __post_init__(self):
        M = np.atleast_2d(np.asarray(self.M, dtype=float))
        if M.shape[0] != M.shape[1] or abs(np.linalg.det(M)) < 1e-14:
            raise ValueError("M must be square and invertible")
        M.flags.writeable = False
        object.__setattr__(self, "M", M)
        if self.child is None:
            raise ValueError("PrecomposeLinear needs a child")

    def _eval(self, X):
        return self.child._eval(X @ self.M.T)

    def gradient(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.M.T @ self.child.gradient(self.M @ x)

    def hessian(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.M.T @ self.child.hessian(self.M @ x) @ self.M

    def to_dict(self):
        return {"type": self.tag, "M": self.M.tolist(), "child": self.child.to_dict()}


_REGISTRY = {
    cls.tag: cls
    for cls in (PowerOfPNorm, Quadratic, IndicatorOfBall, IndicatorOfPolytope,
                MaxOfAffinePlus, Sum, Scale, PrecomposeLinear)
}


def from_dict(d: dict) -> AnalyticConvexFunction:
    """Inverse of ``to_dict`` for every catalog variant."""
    kind = d.get("type")
    if kind not in _REGISTRY:
        raise ValueError(f"unknown catalog variant {kind!r}")
    if kind == "power":
        return PowerOfPNorm(_dec(d["p"]), float(d["q"]), float(d["scale"]))
    if kind == "quadratic":
        return Quadratic(np.array(d["A"], dtype=float))
    if kind == "ball":
        return IndicatorOfBall(_dec(d["p"]), _dec(d["radius"]))
    if kind == "polytope":
        return IndicatorOfPolytope(np.array(d["A"], dtype=float), np.array(d["b"], dtype=float))
    if kind == "maxaffine":
        return MaxOfAffinePlus(np.array(d["a"], dtype=float), np.array(d["b"], dtype=float))
    if kind == "sum":
        return Sum(tuple(from_dict(c) for c in d["children"]))
    if kind == "scale":
        return Scale(float(d["t"]), from_dict(d["child"]))
    return PrecomposeLinear(np.array(d["M"], dtype=float), from_dict(d["child"]))


# -- common instances -------------------------------------------------------

def natural_dim(f: AnalyticConvexFunction) -> int | None:
    """Dimension pinned down by a matrix somewhere in the tree, or None for dimension-free terms."""
    if isinstance(f, Quadratic):
        return f.A.shape[0]
    if isinstance(f, (IndicatorOfPolytope, MaxOfAffinePlus)):
        return (f.A if isinstance(f, IndicatorOfPolytope) else f.a).shape[1]
    if isinstance(f, PrecomposeLinear):
        return f.M.shape[0]
    if isinstance(f, Scale):
        return natural_dim(f.child)
    if isinstance(f, Sum):
        return next((d for d in map(natural_dim, f.children) if d is not None), None)
    return None


def ray(c: float) -> AnalyticConvexFunction:
    """The 1D ray function l_c(t) = c t for t >= 0, +inf for t < 0."""
    return Sum((PowerOfPNorm(2.0, 1.0, c), IndicatorOfPolytope([[-1.0]], [0.0])))


def interval_indicator(a: float) -> AnalyticConvexFunction:
    """Indicator of [0, a] in 1D."""
    return IndicatorOfPolytope([[1.0], [-1.0]], [a, 0.0])


def origin_indicator(p: float = 2.0) -> IndicatorOfBall:
    return IndicatorOfBall(p, 0.0)


def zero_function() -> IndicatorOfBall:
    return IndicatorOfBall(2.0, math.inf)


def is_zero_function(f: AnalyticConvexFunction) -> bool:
    return isinstance(f, IndicatorOfBall) and math.isinf(f.radius)


def simplify(f: AnalyticConvexFunction) -> AnalyticConvexFunction:
    """Fold scalings into leaves and merge like terms of sums.

    Only the merges needed by the closed-form polar rules are performed:
    powers of the same norm with the same exponent, quadratics, the
    Euclidean square (which is a quadratic), and 1D half-line slopes
    max(0, a y) of a common sign.
    """
    if isinstance(f, Scale):
        child = simplify(f.child)
        if f.t == 1:
            return child
        if isinstance(child, PowerOfPNorm):
            return PowerOfPNorm(child.p, child.q, f.t * child.scale)
        if isinstance(child, Quadratic):
            return Quadratic(f.t * child.A)
        if isinstance(child, Scale):
            return simplify(Scale(f.t * child.t, child.child))
        if isinstance(child, IndicatorOfBall | IndicatorOfPolytope):
            return child
        if isinstance(child, MaxOfAffinePlus):
            return MaxOfAffinePlus(f.t * child.a, f.t * child.b)
        if isinstance(child, Sum):
            return simplify(Sum(tuple(Scale(f.t, c) for c in child.children)))
        return Scale(f.t, child)
    if isinstance(f, PrecomposeLinear):
        child = simplify(f.child)
        if isinstance(child, Quadratic):
            return Quadratic(f.M.T @ child.A @ f.M)
        if is_zero_function(child):
            return child
        return PrecomposeLinear(f.M, child)
    if not isinstance(f, Sum):
        return f
    flat = []
    for c in f.children:
        c = simplify(c)
        flat.extend(c.children if isinstance(c, Sum) else (c,))
    flat = [c for c in flat if not is_zero_function(c)]
    if not flat:
        return zero_function()
    powers: dict = {}
    quads = []
    rest = []
    half_lines: dict = {}
    for c in flat:
        if isinstance(c, MaxOfAffinePlus) and c.a.shape == (1, 1) and c.b[0] == 0 and c.a[0, 0] != 0:
            # max(0, a y) terms with a common sign add slopes
            side = float(np.sign(c.a[0, 0]))
            half_lines[side] = half_lines.get(side, 0.0) + float(c.a[0, 0])
        elif isinstance(c, PowerOfPNorm):
            key = (c.p, c.q)
            powers[key] = powers.get(key, 0.0) + c.scale
        elif isinstance(c, Quadratic):
            quads.append(c.A)
        else:
            rest.append(c)
    if quads:
        A = np.sum(quads, axis=0)
        s2 = powers.pop((2.0, 2.0), 0.0)
        if s2:
            A = A + 2 * s2 * np.eye(A.shape[0])
        merged = [Quadratic(A)]
    else:
        merged = []
    merged += [PowerOfPNorm(p, q, s) for (p, q), s in powers.items()]
    merged += [MaxOfAffinePlus(np.array([[a]]), np.array([0.0])) for a in half_lines.values()]
    out = tuple(merged + rest)
    return out[0] if len(out) == 1 else Sum(out)
