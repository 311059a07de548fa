"""Function representations and the structural checks on them."""
from .catalog import (
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
    from_dict,
    interval_indicator,
    origin_indicator,
    ray,
    simplify,
    zero_function,
)
from .classify import ClassReport, SampleSpec, classify
from .grid import GridFunction, lattice_axes, lattice_points, midpoint_convexity_violation, sample


def evaluate(f, x):
    """f(x) for a catalog element (exact) or a grid function (interpolated)."""
    return f.evaluate(x)


def gradient(f, x):
    return f.gradient(x)


def hessian(f, x):
    return f.hessian(x)


__all__ = [
    "AnalyticConvexFunction", "ClassReport", "GridFunction", "IndicatorOfBall", "IndicatorOfPolytope",
    "MaxOfAffinePlus", "PowerOfPNorm", "PrecomposeLinear", "Quadratic", "SampleSpec", "Scale", "Sum",
    "classify", "conjugate_exponent", "evaluate", "from_dict", "gradient", "hessian", "interval_indicator",
    "lattice_axes", "lattice_points", "midpoint_convexity_violation", "origin_indicator", "ray", "sample",
    "simplify", "zero_function",
]
