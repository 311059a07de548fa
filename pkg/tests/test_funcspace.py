import math

import numpy as np
import pytest

from polarity.errors import BoxExcludesOrigin, NotDifferentiable, OutOfBox
from polarity.funcspace import (
    GridFunction,
    IndicatorOfBall,
    IndicatorOfPolytope,
    MaxOfAffinePlus,
    PowerOfPNorm,
    PrecomposeLinear,
    Quadratic,
    Scale,
    Sum,
    classify,
    conjugate_exponent,
    from_dict,
    interval_indicator,
    midpoint_convexity_violation,
    origin_indicator,
    ray,
    sample,
    simplify,
    zero_function,
)
from polarity.funcspace.catalog import natural_dim

A2 = np.array([[2.0, 0.5], [0.5, 1.0]])


class TestCatalog:
    def test_power_of_pnorm_values(self):
        f = PowerOfPNorm(p=1, q=2, scale=3.0)
        assert f.evaluate([1.0, -2.0]) == pytest.approx(3.0 * 9.0)
        assert PowerOfPNorm(math.inf, 1, 1).evaluate([1.0, -2.0]) == 2.0

    def test_quadratic_gradient_and_hessian(self):
        f = Quadratic(A2)
        x = np.array([0.3, -1.2])
        assert f.evaluate(x) == pytest.approx(0.5 * x @ A2 @ x)
        assert np.allclose(f.gradient(x), A2 @ x)
        assert np.allclose(f.hessian(x), A2)

    def test_indicators(self):
        ball = IndicatorOfBall(p=2, radius=1.0)
        assert ball.evaluate([0.6, 0.8]) == 0.0
        assert math.isinf(ball.evaluate([0.8, 0.8]))
        assert math.isinf(origin_indicator().evaluate([1e-3]))
        assert zero_function().evaluate([1e6]) == 0.0
        seg = interval_indicator(2.0)
        assert seg.evaluate([2.0]) == 0.0 and math.isinf(seg.evaluate([-0.1]))

    def test_ray_is_infinite_on_the_negative_side(self):
        r = ray(2.0)
        assert r.evaluate([3.0]) == pytest.approx(6.0)
        assert math.isinf(r.evaluate([-1e-3]))

    def test_max_of_affine_plus(self):
        f = MaxOfAffinePlus(np.array([[1.0], [-2.0]]), np.array([-1.0, -1.0]))
        assert f.evaluate([0.5]) == 0.0
        assert f.evaluate([3.0]) == pytest.approx(2.0)
        assert f.evaluate([-2.0]) == pytest.approx(3.0)

    def test_precompose_linear_chain_rule(self):
        M = np.array([[1.0, 2.0], [0.0, 1.0]])
        f = PrecomposeLinear(M, Quadratic(np.eye(2)))
        x = np.array([0.4, -0.3])
        assert f.evaluate(x) == pytest.approx(0.5 * np.sum((M @ x) ** 2))
        assert np.allclose(f.hessian(x), M.T @ M)

    @pytest.mark.parametrize("bad", [
        lambda: PowerOfPNorm(0.5, 2, 1),
        lambda: PowerOfPNorm(2, 0.5, 1),
        lambda: PowerOfPNorm(2, 2, -1),
        lambda: Quadratic(np.array([[1.0, 2.0], [0.0, 1.0]])),
        lambda: Quadratic(np.array([[-1.0]])),
        lambda: IndicatorOfPolytope(np.array([[1.0]]), np.array([-1.0])),
        lambda: MaxOfAffinePlus(np.array([[1.0]]), np.array([0.5])),
        lambda: Scale(0.0, PowerOfPNorm()),
        lambda: PrecomposeLinear(np.zeros((2, 2)), Quadratic(np.eye(2))),
    ])
    def test_constructors_reject_non_geometric_inputs(self, bad):
        with pytest.raises(ValueError):
            bad()

    @pytest.mark.parametrize("f, dim", [
        (PowerOfPNorm(3, 2, 0.5), 2),
        (Quadratic(A2), 2),
        (IndicatorOfBall(1, 2.0), 2),
        (IndicatorOfPolytope(np.array([[1.0, 0.0], [0.0, -1.0]]), np.array([1.0, 2.0])), 2),
        (Sum((PowerOfPNorm(2, 2, 1), Scale(2.0, PowerOfPNorm(1, 4, 1)))), 2),
        (PrecomposeLinear(np.array([[2.0, 0.0], [1.0, 1.0]]), PowerOfPNorm(2, 2, 1)), 2),
        (ray(1.5), 1),
    ])
    def test_dict_round_trip(self, f, dim, rng):
        g = from_dict(f.to_dict())
        X = rng.uniform(-2, 2, size=(30, dim))
        assert np.array_equal(f.evaluate(X), g.evaluate(X))

    def test_conjugate_exponent(self):
        assert conjugate_exponent(2) == 2
        assert conjugate_exponent(1) == math.inf
        assert conjugate_exponent(math.inf) == 1
        assert conjugate_exponent(3) == pytest.approx(1.5)

    def test_natural_dim(self):
        assert natural_dim(Quadratic(A2)) == 2
        assert natural_dim(PowerOfPNorm()) is None
        assert natural_dim(Sum((PowerOfPNorm(), Scale(2.0, Quadratic(np.eye(3)))))) == 3

    def test_simplify_merges_scaled_rays(self):
        s = simplify(Sum((MaxOfAffinePlus(np.array([[1.0]]), np.array([0.0])),
                          MaxOfAffinePlus(np.array([[2.0]]), np.array([0.0])))))
        Y = np.linspace(-2, 2, 9)[:, None]
        assert np.allclose(s.evaluate(Y), np.maximum(0, 3 * Y[:, 0]))


class TestGrid:
    def test_box_must_contain_origin(self):
        with pytest.raises(BoxExcludesOrigin):
            GridFunction([(0.5, 1.0)], (5,), np.zeros(5))

    def test_sample_and_interpolate(self):
        g = sample(PowerOfPNorm(2, 2, 1), [(-2.0, 2.0)], (5,))
        assert g.evaluate([1.0]) == 1.0
        # linear interpolation between nodes 0 and 1
        assert g.evaluate([0.5]) == pytest.approx(0.5)
        with pytest.raises(OutOfBox):
            g.evaluate([3.0])

    def test_eps_zero_scales_with_the_data(self):
        g = sample(Scale(1e6, PowerOfPNorm(2, 2, 1)), [(-1.0, 1.0)], (3,))
        assert g.eps_zero() == pytest.approx(1e-3)
        assert sample(Scale(1e-6, PowerOfPNorm(2, 2, 1)), [(-1.0, 1.0)], (3,)).eps_zero() == 1e-12

    def test_jet_is_exact_on_quadratics(self, rng):
        f = Quadratic(A2)
        g = sample(f, [(-2.0, 2.0)] * 2, (41, 41))
        for x in rng.uniform(-1.5, 1.5, size=(5, 2)):
            v, grad, H = g.jet(x)
            assert v == pytest.approx(f.evaluate(x), abs=1e-12)
            assert np.allclose(grad, A2 @ x, atol=1e-10)
            assert np.allclose(H, A2, atol=1e-10)

    def test_jet_refuses_infinite_stencils(self):
        g = sample(IndicatorOfBall(2, 1.0), [(-2.0, 2.0)], (41,))
        with pytest.raises(NotDifferentiable):
            g.jet([1.0])

    def test_midpoint_convexity_violation(self):
        box, shape = [(-2.0, 2.0)], (5,)
        assert midpoint_convexity_violation(sample(PowerOfPNorm(2, 2, 1), box, shape)) == 0.0
        bumpy = GridFunction(box, shape, np.array([4.0, 0.5, 0.0, 2.0, 2.5]))
        # 0 + 2.5 - 2 * 2
        assert midpoint_convexity_violation(bumpy) == pytest.approx(1.5)

    def test_boundary_mask(self):
        g = sample(PowerOfPNorm(), [(-1.0, 1.0)] * 2, (5, 5))
        mask = g.boundary_mask()
        assert mask.sum() == 16 and not mask[2, 2]


class TestClassify:
    def test_square_is_in_s2_and_nonlinear_at_infinity(self):
        rep = classify(PowerOfPNorm(2, 2, 1))
        assert rep.in_cvx0 and rep.in_S2 and rep.nonlinear_at_infinity

    def test_norm_is_linear_on_rays(self):
        rep = classify(PowerOfPNorm(2, 1, 1))
        assert rep.in_cvx0 and not rep.nonlinear_at_infinity
        assert rep.ray_linearity_rays

    def test_nonconvex_grid_is_not_in_cvx0(self):
        g = GridFunction([(-2.0, 2.0)], (5,), np.array([4.0, 0.5, 0.0, 2.0, 2.5]))
        assert not classify(g).in_cvx0
