import numpy as np
import pytest

from helpers import random_points, residual
from lorentzkit import autodiff as ad
from lorentzkit.errors import NumericDomainError, NumericError
from lorentzkit.gyro import gyro_add, gyro_inverse
from lorentzkit.layers import mlr_logits
from lorentzkit.lorentz import geodesic_dist, lorentz_to_poincare, origin
from oracle import (
    ball_dist,
    ball_gyro_add,
    chord_objective,
    expected_log_radius,
    finite_difference_gradient,
    from_ball,
    geodesic_objective,
    mc_log_radius,
    random_geodesic_perturbation,
    to_ball,
    unsimplified_logit,
)


class TestFiniteDifferences:
    def test_sinh_at_zero(self):
        assert finite_difference_gradient(lambda v: np.sinh(v[0]), np.array([0.0]))[0] == pytest.approx(1.0, abs=1e-8)

    def test_square(self):
        assert finite_difference_gradient(lambda x: x[0] ** 2, np.array([3.0]))[0] == pytest.approx(6.0, abs=1e-8)

    def test_input_not_mutated(self):
        x = np.array([1.0, 2.0])
        finite_difference_gradient(lambda v: np.sum(v ** 2), x)
        np.testing.assert_array_equal(x, [1.0, 2.0])

    def test_non_finite(self):
        with pytest.raises(NumericError):
            finite_difference_gradient(lambda v: np.inf * v[0], np.array([1.0]))

    def test_logit_matches_autodiff(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = random_points(rng, 1, 3)[0]
            za0 = np.concatenate([rng.normal(size=3), [rng.normal()]])

            def f(za):
                return ad.sum(mlr_logits(x, ad.reshape(ad.getitem(za, slice(0, 3)), (1, 3)),
                                         ad.getitem(za, slice(3, 4))))

            leaf = ad.Tensor(za0, requires_grad=True)
            with ad.Tape() as tape:
                loss = f(leaf)
            g = tape.gradient(loss)[leaf]
            fd = finite_difference_gradient(lambda v: float(f(v)), za0)
            np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-10)


class TestBallMaps:
    @pytest.mark.parametrize("k", [-1.0, -0.3, -3.0])
    def test_round_trip(self, k):
        x = random_points(np.random.default_rng(1), 100, 3, k)
        np.testing.assert_allclose(from_ball(to_ball(x, k), k), x, rtol=1e-10)
        assert np.all(np.linalg.norm(to_ball(x, k), axis=1) < 1 / np.sqrt(-k))

    def test_matches_production_map(self):
        x = random_points(np.random.default_rng(2), 100, 4, -0.5)
        np.testing.assert_allclose(to_ball(x, -0.5), lorentz_to_poincare(x, -0.5), rtol=1e-13)

    def test_ball_distance_matches_geodesic(self):
        rng = np.random.default_rng(3)
        x, y = random_points(rng, 200, 3), random_points(rng, 200, 3)
        np.testing.assert_allclose(ball_dist(to_ball(x), to_ball(y)), geodesic_dist(x, y), rtol=1e-9)


class TestBallGyroAdd:
    def test_left_identity(self):
        x = random_points(np.random.default_rng(4), 100, 3)
        np.testing.assert_allclose(ball_gyro_add(origin(-1.0, 3), x), x, rtol=1e-12)

    def test_left_inverse(self):
        x = random_points(np.random.default_rng(5), 100, 3)
        np.testing.assert_allclose(ball_gyro_add(gyro_inverse(x), x), np.broadcast_to(origin(-1.0, 3), x.shape),
                                   atol=1e-9)

    def test_matches_production(self):
        rng = np.random.default_rng(6)
        x, y = random_points(rng, 1000, 3), random_points(rng, 1000, 3)
        np.testing.assert_allclose(ball_gyro_add(x, y), gyro_add(x, y), atol=1e-8, rtol=1e-10)


class TestUnsimplifiedLogit:
    def test_hand_value(self):
        assert unsimplified_logit(origin(-1.0, 2), np.array([2.0, 0.0]), 0.5) == pytest.approx(-1.0, abs=1e-12)

    def test_zero_offset(self):
        rng = np.random.default_rng(7)
        x = random_points(rng, 1, 3)[0]
        z = rng.normal(size=3)
        zn = np.linalg.norm(z)
        expected = np.sign(z @ x[1:]) * zn * abs(np.arcsinh(z @ x[1:] / zn))
        assert unsimplified_logit(x, z, 0.0) == pytest.approx(expected, rel=1e-14)

    def test_cancellation_at_extreme_offset(self):
        # the unsimplified denominator cancels catastrophically; the production form does not
        with pytest.raises(NumericDomainError):
            unsimplified_logit(origin(-1.0, 2), np.array([1.0, 1.0]), 30.0)
        assert np.isfinite(mlr_logits(origin(-1.0, 2), np.array([[1.0, 1.0]]), np.array([30.0]))).all()


class TestFrechetObjectives:
    def test_chord_objective_hand_value(self):
        pts = np.stack([origin(-1.0, 1), np.array([np.cosh(1.0), np.sinh(1.0)])])
        assert chord_objective(origin(-1.0, 1), pts) == pytest.approx(2 * (np.cosh(1.0) - 1), abs=1e-14)

    def test_geodesic_objective_hand_value(self):
        pts = np.array([[np.cosh(0.5), np.sinh(0.5)], [np.cosh(0.5), -np.sinh(0.5)]])
        assert geodesic_objective(origin(-1.0, 1), pts) == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("k", [-1.0, -2.0])
    def test_perturbation_radius(self, k):
        rng = np.random.default_rng(8)
        mu = random_points(rng, 1, 3, k)[0]
        for _ in range(20):
            y = random_geodesic_perturbation(mu, 1e-3, rng, k)
            assert residual(y, k) <= 1e-12
            assert geodesic_dist(mu, y, k) == pytest.approx(1e-3, rel=1e-6)


class TestLogRadius:
    def test_expected_value(self):
        assert expected_log_radius(2) == pytest.approx(0.057966, abs=1e-6)
        assert expected_log_radius(2, sigma=2.0) == pytest.approx(0.057966 + np.log(2.0), abs=1e-6)

    def test_single_block_unchanged(self):
        stats = mc_log_radius(2, 1, 10_000, np.random.default_rng(9))
        assert stats.post_mean == stats.pre_mean

    def test_pre_mean_matches_formula(self):
        stats = mc_log_radius(2, 1, 10_000, np.random.default_rng(10))
        assert abs(stats.pre_mean - 0.057966) <= 3 * stats.pre_stderr

    def test_invariance_two_vs_four(self):
        a = mc_log_radius(2, 2, 10_000, np.random.default_rng(11))
        b = mc_log_radius(2, 4, 10_000, np.random.default_rng(12))
        assert abs(a.post_mean - b.post_mean) <= 3 * np.hypot(a.post_stderr, b.post_stderr)

    def test_minimum_samples(self):
        with pytest.raises(ValueError):
            mc_log_radius(2, 2, 999, np.random.default_rng(13))
