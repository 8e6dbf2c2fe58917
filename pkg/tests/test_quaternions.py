import numpy as np
import pytest

from residual_dmp.quaternions import (
    AngleAxisResidual,
    DegenerateAxisError,
    UnitQuaternion,
    angle_axis_to_quat,
    apply_orientation_residual,
    geodesic_angle,
    matrix_to_quat,
    quat_compose,
    quat_error_to_angular_velocity,
    quat_exp,
    quat_log,
    quat_to_matrix,
    rotate_vector,
    slerp,
)

RNG = np.random.default_rng(20240511)


def random_unit(rng=RNG):
    q = UnitQuaternion.from_wxyz(rng.normal(size=4))
    return q


def assert_quat_close(a, b, tol=1e-9):
    assert geodesic_angle(a, b) < tol, (a, b)


class TestCompose:
    def test_identity_is_neutral(self):
        q = random_unit()
        assert_quat_close(quat_compose(UnitQuaternion.identity(), q), q)
        assert_quat_close(quat_compose(q, UnitQuaternion.identity()), q)

    def test_same_axis_angles_add(self):
        half = np.sqrt(2) / 2
        q90x = UnitQuaternion(half, np.array([half, 0.0, 0.0]))
        q180x = quat_compose(q90x, q90x)
        expected = UnitQuaternion(0.0, np.array([1.0, 0.0, 0.0]))
        assert np.allclose(q180x.as_array(), expected.as_array(), atol=1e-12)

    def test_matrix_product_oracle_90x_90y(self):
        q90x = angle_axis_to_quat(AngleAxisResidual(np.pi / 2, np.array([1.0, 0, 0])))
        q90y = angle_axis_to_quat(AngleAxisResidual(np.pi / 2, np.array([0, 1.0, 0])))
        composed = quat_compose(q90x, q90y)
        oracle = matrix_to_quat(quat_to_matrix(q90x) @ quat_to_matrix(q90y))
        assert geodesic_angle(composed, oracle) < 1e-9

    def test_rotation_matrix_homomorphism_property(self):
        rng = np.random.default_rng(7)
        for _ in range(1000):
            a, b = random_unit(rng), random_unit(rng)
            lhs = quat_to_matrix(quat_compose(a, b))
            rhs = quat_to_matrix(a) @ quat_to_matrix(b)
            assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_associativity_property(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            a, b, c = (random_unit(rng) for _ in range(3))
            lhs = quat_compose(quat_compose(a, b), c)
            rhs = quat_compose(a, quat_compose(b, c))
            assert geodesic_angle(lhs, rhs) < 1e-9

    def test_rejects_non_unit(self):
        bad = UnitQuaternion(2.0, np.zeros(3))
        with pytest.raises(ValueError):
            quat_compose(bad, UnitQuaternion.identity())

    def test_hemisphere_canonical(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            q = quat_compose(random_unit(rng), random_unit(rng))
            assert q.w >= 0.0


class TestLogExp:
    def test_log_identity_is_zero(self):
        assert np.allclose(quat_log(UnitQuaternion.identity()), 0.0)

    def test_log_180_about_z(self):
        q = UnitQuaternion(0.0, np.array([0.0, 0.0, 1.0]))
        assert np.allclose(quat_log(q), [0.0, 0.0, np.pi], atol=1e-12)

    def test_exp_zero_is_identity(self):
        assert_quat_close(quat_exp(np.zeros(3)), UnitQuaternion.identity())

    def test_exp_pi_about_x(self):
        q = quat_exp(np.array([np.pi, 0.0, 0.0]))
        assert np.allclose(q.as_array(), [0.0, 1.0, 0.0, 0.0], atol=1e-12)

    def test_round_trip_property(self):
        rng = np.random.default_rng(10)
        for _ in range(1000):
            q = random_unit(rng)
            assert geodesic_angle(quat_exp(quat_log(q)), q) < 1e-9

    def test_log_norm_bounded(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            assert np.linalg.norm(quat_log(random_unit(rng))) <= 2 * np.pi


class TestAngleAxis:
    def test_zero_angle_any_axis(self):
        res = AngleAxisResidual(0.0, np.array([0.3, -0.4, 0.1]))
        assert_quat_close(angle_axis_to_quat(res), UnitQuaternion.identity())

    def test_pi_about_x(self):
        q = angle_axis_to_quat(AngleAxisResidual(np.pi, np.array([1.0, 0, 0])))
        assert np.allclose(q.as_array(), [0.0, 1.0, 0.0, 0.0], atol=1e-12)

    def test_axis_normalization(self):
        q = angle_axis_to_quat(AngleAxisResidual(np.pi / 2, np.array([0.0, 3.0, 0.0])))
        half = np.sqrt(2) / 2
        assert np.allclose(q.as_array(), [half, 0.0, half, 0.0], atol=1e-12)

    def test_degenerate_axis_raises(self):
        with pytest.raises(DegenerateAxisError):
            angle_axis_to_quat(AngleAxisResidual(0.5, np.zeros(3)))

    def test_angle_out_of_range_raises(self):
        with pytest.raises(ValueError):
            angle_axis_to_quat(AngleAxisResidual(3.5, np.array([1.0, 0, 0])))

    def test_real_part_non_negative_over_range(self):
        rng = np.random.default_rng(12)
        for _ in range(500):
            alpha = rng.uniform(-np.pi, np.pi)
            q = angle_axis_to_quat(AngleAxisResidual(alpha, rng.normal(size=3)))
            assert q.w >= 0.0
            assert abs(q.norm() - 1.0) < 1e-12


class TestResidualApplication:
    def test_zero_residual_returns_base(self):
        q = random_unit()
        out = apply_orientation_residual(q, AngleAxisResidual.zero())
        assert out is q

    def test_identity_base_returns_correction(self):
        res = AngleAxisResidual(0.7, np.array([0.0, 1.0, 0.0]))
        out = apply_orientation_residual(UnitQuaternion.identity(), res)
        assert_quat_close(out, angle_axis_to_quat(res))

    def test_compound_rotation_matrix_oracle(self):
        base = angle_axis_to_quat(AngleAxisResidual(np.pi / 2, np.array([0, 0, 1.0])))
        res = AngleAxisResidual(np.pi / 2, np.array([0, 0, 1.0]))
        out = apply_orientation_residual(base, res)
        oracle = matrix_to_quat(
            quat_to_matrix(angle_axis_to_quat(res)) @ quat_to_matrix(base)
        )
        assert geodesic_angle(out, oracle) < 1e-9
        assert abs(geodesic_angle(out, UnitQuaternion.identity()) - np.pi) < 1e-9


class TestAngularVelocity:
    def test_zero_for_equal(self):
        q = random_unit()
        assert np.allclose(quat_error_to_angular_velocity(q, q, 0.1), 0.0, atol=1e-9)

    def test_quarter_turn_rate(self):
        target = angle_axis_to_quat(AngleAxisResidual(np.pi / 2, np.array([0, 0, 1.0])))
        omega = quat_error_to_angular_velocity(target, UnitQuaternion.identity(), 1.0)
        assert np.allclose(omega, [0, 0, np.pi / 2], atol=1e-12)

    def test_integration_round_trip_property(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            q_t, q_c = random_unit(rng), random_unit(rng)
            dt = float(rng.uniform(0.01, 1.0))
            omega = quat_error_to_angular_velocity(q_t, q_c, dt)
            reached = quat_compose(quat_exp(omega * dt), q_c)
            assert geodesic_angle(reached, q_t) < 1e-9

    def test_rejects_bad_dt(self):
        q = UnitQuaternion.identity()
        with pytest.raises(ValueError):
            quat_error_to_angular_velocity(q, q, 0.0)


class TestMatrixRoundTrip:
    def test_matrix_to_quat_round_trip(self):
        rng = np.random.default_rng(14)
        for _ in range(500):
            q = random_unit(rng)
            assert geodesic_angle(matrix_to_quat(quat_to_matrix(q)), q) < 1e-9

    def test_rotate_vector_matches_matrix(self):
        q = random_unit()
        v = np.array([0.1, -0.2, 0.3])
        assert np.allclose(rotate_vector(q, v), quat_to_matrix(q) @ v)


def test_slerp_endpoints_and_midpoint():
    a = UnitQuaternion.identity()
    b = angle_axis_to_quat(AngleAxisResidual(np.pi / 2, np.array([0, 0, 1.0])))
    assert geodesic_angle(slerp(a, b, 0.0), a) < 1e-12
    assert geodesic_angle(slerp(a, b, 1.0), b) < 1e-12
    mid = slerp(a, b, 0.5)
    assert abs(geodesic_angle(mid, a) - np.pi / 4) < 1e-9
