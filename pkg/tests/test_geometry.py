import math

import numpy as np
import pytest

from formation_sim import (
    DegenerateFrameError,
    UndefinedAngleError,
    angular_distance,
    frame_angle,
    nearest_branch,
    polar_of_relative,
    relative_of_polar,
    rotate_velocity_to_local,
    rotation,
    to_local_frame,
    vec,
    wrap_2pi,
    wrap_pi,
)

TWO_PI = 2.0 * math.pi


class TestRotation:
    def test_zero_angle_is_identity(self):
        assert np.array_equal(rotation(0.0), np.eye(2))

    def test_quarter_turn(self):
        # plugging pi/2 into the matrix by hand: [[0, 1], [-1, 0]]
        out = rotation(math.pi / 2) @ np.array([1.0, 0.0])
        assert np.allclose(out, [0.0, -1.0], atol=1e-15)

    def test_orthogonality(self):
        r = rotation(0.7)
        assert np.allclose(r @ r.T, np.eye(2), atol=1e-15)

    def test_inverse_is_negative_angle(self):
        assert np.allclose(rotation(0.3) @ rotation(-0.3), np.eye(2), atol=1e-15)

    def test_determinant_and_orthonormal_rows(self):
        rng = np.random.default_rng(7)
        for alpha in rng.uniform(-10, 10, 50):
            r = rotation(alpha)
            assert abs(np.linalg.det(r) - 1.0) < 1e-12
            assert np.allclose(r @ r.T, np.eye(2), atol=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            rotation(math.nan)


class TestLocalFrame:
    def test_target_lands_on_negative_x_axis(self):
        out = to_local_frame((1.0, 0.0), (0.0, 0.0), (0.0, 0.0))
        assert np.allclose(out, [-1.0, 0.0], atol=1e-15)

    def test_rotated_example(self):
        # agent above the target: frame angle pi/2, applied by hand
        out = to_local_frame((0.0, 2.0), (0.0, 0.0), (1.0, 2.0))
        assert np.allclose(out, [0.0, -1.0], atol=1e-12)

    def test_own_position_maps_to_origin(self):
        out = to_local_frame((1.0, 1.0), (0.0, 0.0), (1.0, 1.0))
        assert np.allclose(out, [0.0, 0.0], atol=1e-15)

    def test_frame_invariant_random(self):
        rng = np.random.default_rng(3)
        for _ in range(200):
            p_i = rng.uniform(-10, 10, 2)
            p_0 = rng.uniform(-10, 10, 2)
            if np.hypot(*(p_i - p_0)) < 1e-3:
                continue
            out = to_local_frame(p_i, p_0, p_0)
            rho = np.hypot(*(p_0 - p_i))
            assert abs(out[0] + rho) < 1e-12
            assert abs(out[1]) < 1e-12

    def test_degenerate_frame(self):
        with pytest.raises(DegenerateFrameError):
            to_local_frame((0.0, 0.0), (0.0, 0.0), (1.0, 1.0))
        with pytest.raises(DegenerateFrameError):
            frame_angle((1.0, 1.0), (1.0, 1.0))


class TestVelocityRotation:
    def test_zero_velocity(self):
        out = rotate_velocity_to_local((1.0, 0.0), (0.0, 0.0), (0.0, 0.0))
        assert np.array_equal(out, [0.0, 0.0])

    def test_aligned_frame_is_identity(self):
        out = rotate_velocity_to_local((1.0, 0.0), (0.0, 0.0), (1.0, 0.0))
        assert np.allclose(out, [1.0, 0.0], atol=1e-15)

    def test_norm_preserved(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            p_i = rng.uniform(-5, 5, 2)
            v = rng.uniform(-3, 3, 2)
            if np.hypot(*p_i) < 1e-3:
                continue
            out = rotate_velocity_to_local(p_i, (0.0, 0.0), v)
            assert abs(np.hypot(*out) - np.hypot(*v)) < 1e-12


class TestAngularDistance:
    def test_quarter_turn_ccw(self):
        assert angular_distance((-2.0, 0.0), (-2.0, 2.0)) == pytest.approx(
            math.pi / 2, abs=1e-15
        )

    def test_reflex_angle_uses_complement(self):
        # cross product negative: angle between the rays is 3*pi/4, so the
        # counterclockwise convention gives 2*pi - 3*pi/4
        assert angular_distance((-2.0, 0.0), (-3.0, -1.0)) == pytest.approx(
            5 * math.pi / 4, abs=1e-12
        )

    def test_parallel_rays_give_zero(self):
        # target->j along (2, 0), the same ray direction as target->i
        assert angular_distance((-2.0, 0.0), (1.0, 0.0)) == 0.0

    def test_output_range(self):
        rng = np.random.default_rng(5)
        for _ in range(500):
            p0 = rng.uniform(-4, 4, 2)
            pj = rng.uniform(-4, 4, 2)
            if np.hypot(*p0) < 1e-3 or np.hypot(*(pj - p0)) < 1e-3:
                continue
            a = angular_distance(p0, pj)
            assert 0.0 <= a < TWO_PI

    def test_matches_global_frame_oracle(self):
        # the same angle computed in the global frame, via bearing difference
        rng = np.random.default_rng(19)
        checked = 0
        while checked < 1000:
            p_i = rng.uniform(-8, 8, 2)
            p_j = rng.uniform(-8, 8, 2)
            p_0 = rng.uniform(-8, 8, 2)
            if min(np.hypot(*(p_i - p_0)), np.hypot(*(p_j - p_0))) < 1e-2:
                continue
            local = angular_distance(
                to_local_frame(p_i, p_0, p_0), to_local_frame(p_i, p_0, p_j)
            )
            expected = (
                math.atan2(*(p_j - p_0)[::-1]) - math.atan2(*(p_i - p_0)[::-1])
            ) % TWO_PI
            assert abs(wrap_pi(local - expected)) < 1e-10
            checked += 1

    def test_degenerate_inputs(self):
        with pytest.raises(DegenerateFrameError):
            angular_distance((0.0, 0.0), (1.0, 0.0))
        with pytest.raises(UndefinedAngleError):
            angular_distance((-2.0, 0.0), (-2.0, 0.0))


class TestAngleHelpers:
    def test_wrap_pi_range_and_identity(self):
        assert wrap_pi(math.pi) == pytest.approx(math.pi)
        assert wrap_pi(-math.pi) == pytest.approx(math.pi)
        assert wrap_pi(0.0) == 0.0
        assert wrap_pi(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
        rng = np.random.default_rng(2)
        x = rng.uniform(-50, 50, 1000)
        w = wrap_pi(x)
        assert np.all((w > -math.pi - 1e-15) & (w <= math.pi + 1e-15))
        # w and x agree up to a whole number of turns
        turns = (w - x) / TWO_PI
        assert np.allclose(turns, np.rint(turns), atol=1e-9)

    def test_wrap_2pi_range(self):
        rng = np.random.default_rng(4)
        for x in rng.uniform(-50, 50, 1000):
            w = wrap_2pi(x)
            assert 0.0 <= w < TWO_PI
        assert wrap_2pi(-1e-18) < TWO_PI

    def test_nearest_branch(self):
        assert nearest_branch(0.1, TWO_PI) == pytest.approx(TWO_PI + 0.1)
        assert nearest_branch(6.2, 0.0) == pytest.approx(6.2 - TWO_PI)
        assert nearest_branch(1.0, 1.5) == 1.0


class TestPolar:
    def test_round_trip(self):
        rng = np.random.default_rng(23)
        for _ in range(300):
            p = rng.uniform(-10, 10, 2)
            if np.hypot(*p) < 1e-3:
                continue
            rho, alpha = polar_of_relative(p)
            back = relative_of_polar(rho, alpha)
            assert np.allclose(back, p, rtol=1e-12, atol=1e-12)

    def test_convention(self):
        # relative position p_0 - p_i = (-rho, 0) puts the agent at bearing 0
        rho, alpha = polar_of_relative((-3.0, 0.0))
        assert rho == pytest.approx(3.0)
        assert alpha == 0.0

    def test_degenerate(self):
        with pytest.raises(DegenerateFrameError):
            polar_of_relative((0.0, 0.0))
        with pytest.raises(ValueError):
            relative_of_polar(-1.0, 0.0)


def test_vec_rejects_non_finite():
    with pytest.raises(ValueError):
        vec(1.0, math.inf)
    with pytest.raises(ValueError):
        vec(math.nan, 0.0)
    assert np.array_equal(vec(1.0, 2.0), [1.0, 2.0])
