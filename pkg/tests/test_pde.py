import numpy as np
import pytest

from polarity.errors import AdvisoryFailure, BeyondMaximalTime, FrameOutOfRange, TimesOutOfRange
from polarity.funcspace import PowerOfPNorm, Scale, sample
from polarity.pde import (
    hj_residual,
    initial_velocity_check,
    ma_residual,
    solve_ma_cauchy,
    solve_ma_dirichlet,
    solve_polar_hj,
)

SQ = PowerOfPNorm(2, 2, 1)
BOX = [(-2.0, 2.0)]
SHAPE = (161,)


def _grid(f):
    return sample(f, BOX, SHAPE)


def _band(xs):
    return (np.abs(xs) >= 0.2) & (np.abs(xs) <= 1.5)


def _dirichlet_exact(s, xs):
    return xs ** 2 / (4 * ((1 - s) / 4 + s / 16))


class TestHJ:
    def test_closed_form(self):
        times = [0.0, 0.25, 0.5, 1.0]
        path = solve_polar_hj(_grid(SQ), Scale(0.5, SQ), times)
        for t, frame in zip(times, path.frames):
            xs = frame.axes[0]
            err = np.abs(frame.values - xs ** 2 / (1 + 2 * t))[_band(xs)]
            assert err.max() < 1e-3, t

    def test_semigroup(self):
        # running to t = 0.5 and restarting for another 0.5 lands on t = 1
        g = Scale(0.5, SQ)
        half = solve_polar_hj(_grid(SQ), g, [0.5]).frames[0]
        # the truncated frame looks linear near the box edge to the sampled check
        again = solve_polar_hj(half, g, [0.5], policy="waive").frames[0]
        full = solve_polar_hj(_grid(SQ), g, [1.0]).frames[0]
        xs = full.axes[0]
        assert np.abs(again.values - full.values)[_band(xs)].max() < 2e-3

    def test_residual_is_small(self):
        path = solve_polar_hj(_grid(SQ), Scale(0.5, SQ), [0.45, 0.5, 0.55])
        for x in (0.5, -0.8, 1.1):
            assert hj_residual(path, 0.5, [x]) < 1e-2

    def test_residual_needs_neighbours(self):
        path = solve_polar_hj(_grid(SQ), Scale(0.5, SQ), [0.0, 0.5])
        with pytest.raises(FrameOutOfRange):
            hj_residual(path, 0.0, [1.0])
        with pytest.raises(FrameOutOfRange):
            path.frame(0.3)

    def test_abort_policy_refuses_a_norm(self):
        with pytest.raises(AdvisoryFailure):
            solve_polar_hj(_grid(PowerOfPNorm(2, 1, 1)), SQ, [0.0], policy="abort")

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            solve_polar_hj(_grid(SQ), SQ, [0.0], policy="ignore")

    @pytest.mark.parametrize("times", [[], [0.5, 0.2], [-0.1, 0.3]])
    def test_bad_times(self, times):
        with pytest.raises(TimesOutOfRange):
            solve_polar_hj(_grid(SQ), SQ, times)


class TestDirichlet:
    def test_closed_form(self):
        times = np.linspace(0, 1, 5)
        path = solve_ma_dirichlet(_grid(SQ), _grid(Scale(4.0, SQ)), 1.0, times)
        for s, frame in zip(times, path.frames):
            xs = frame.axes[0]
            assert np.abs(frame.values - _dirichlet_exact(s, xs))[_band(xs)].max() < 2e-3

    def test_endpoints_reproduce_the_data(self):
        u0, u1 = _grid(SQ), _grid(Scale(4.0, SQ))
        path = solve_ma_dirichlet(u0, u1, 1.0, [0.0, 1.0])
        xs = u0.axes[0]
        for frame, u in zip(path.frames, (u0, u1)):
            assert np.abs(frame.values - u.values)[_band(xs)].max() < 2e-3

    def test_time_reparametrization(self):
        u0, u1 = _grid(SQ), _grid(Scale(4.0, SQ))
        s = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
        a = solve_ma_dirichlet(u0, u1, 1.0, s)
        b = solve_ma_dirichlet(u0, u1, 4.0, 4 * s)
        for fa, fb in zip(a.frames, b.frames):
            assert np.array_equal(fa.values, fb.values)

    def test_ginf_route_agrees(self):
        u0, u1 = _grid(SQ), _grid(Scale(4.0, SQ))
        times = [0.25, 0.5]
        a = solve_ma_dirichlet(u0, u1, 1.0, times)
        b = solve_ma_dirichlet(u0, u1, 1.0, times, route="ginf")
        xs = u0.axes[0]
        for fa, fb in zip(a.frames, b.frames):
            assert np.abs(fa.values - fb.values)[_band(xs)].max() < 5e-3

    def test_residual_is_small(self):
        path = solve_ma_dirichlet(_grid(SQ), _grid(Scale(4.0, SQ)), 1.0, [0.45, 0.5, 0.55])
        for x in (0.5, -0.9):
            assert ma_residual(path, 0.5, [x]) < 1e-2

    def test_times_past_T(self):
        with pytest.raises(TimesOutOfRange):
            solve_ma_dirichlet(_grid(SQ), _grid(SQ), 1.0, [0.5, 1.5])

    def test_lattices_must_match(self):
        with pytest.raises(ValueError):
            solve_ma_dirichlet(_grid(SQ), sample(SQ, BOX, (81,)), 1.0, [0.5])


class TestCauchy:
    def test_constant_velocity(self):
        # du0 = c u0 makes v = c, so u(t) = u0 / (1 - c t) until T = 1/c
        c = 0.5
        times = [0.0, 0.5, 1.0, 1.5]
        path, data = solve_ma_cauchy(_grid(SQ), _grid(Scale(c, SQ)), times)
        assert data.capped and data.T_est == 1.5
        v = data.v.values.ravel()
        assert np.allclose(v[v != 0], c, atol=1e-3)
        for t, frame in zip(times, path.frames):
            xs = frame.axes[0]
            assert np.abs(frame.values - xs ** 2 / (1 - c * t))[_band(xs)].max() < 5e-3

    def test_blow_up_is_refused_with_the_partial_path(self):
        times = np.arange(0.0, 3.01, 0.25)
        with pytest.raises(BeyondMaximalTime) as info:
            solve_ma_cauchy(_grid(SQ), _grid(Scale(0.5, SQ)), times)
        err = info.value
        assert err.t_max == pytest.approx(1.75)
        assert len(err.path.frames) == 8

    def test_velocity_must_vanish_at_the_origin(self):
        class Shifted:
            def evaluate(self, X):
                return np.sum(np.atleast_2d(X) ** 2, axis=1) + 0.1

        with pytest.raises(ValueError):
            solve_ma_cauchy(_grid(SQ), Shifted(), [0.0])

    def test_initial_velocity(self):
        rep = initial_velocity_check(_grid(SQ), _grid(Scale(0.3, SQ)))
        assert rep["n_nodes"] > 50 and rep["max_deviation"] < 5e-3
