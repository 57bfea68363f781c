import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slotwin import geometry as g
from slotwin.geometry import Pose, between, compose, inverse, random_pose, rot_z

from conftest import numeric_jacobian, translation

ATOL = 1e-9


def rot_pose(deg):
    return Pose(rot_z(np.deg2rad(deg)), np.zeros(3))


# ---------------------------------------------------------------- compose / inverse / between
def test_compose_identity_is_neutral(rng):
    p = random_pose(rng)
    assert compose(Pose.identity(), p).allclose(p)
    assert compose(p, Pose.identity()).allclose(p)


def test_compose_with_inverse_is_identity(rng):
    p = random_pose(rng)
    assert compose(p, inverse(p)).allclose(Pose.identity(), ATOL)


def test_compose_translations():
    assert compose(translation(1, 0, 0), translation(0, 2, 0)).allclose(translation(1, 2, 0))


def test_compose_matches_homogeneous_product(rng):
    a, b = random_pose(rng), random_pose(rng)
    np.testing.assert_allclose(compose(a, b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)


def test_inverse_examples():
    assert inverse(Pose.identity()).allclose(Pose.identity())
    assert inverse(translation(1, 2, 3)).allclose(translation(-1, -2, -3))


def test_inverse_matches_matrix_inverse():
    p = compose(rot_pose(90), translation(1, 0, 0))
    np.testing.assert_allclose(inverse(p).matrix(), np.linalg.inv(p.matrix()), atol=1e-12)


def test_between_examples(rng):
    p = random_pose(rng)
    assert between(p, p).allclose(Pose.identity(), ATOL)
    assert between(Pose.identity(), p).allclose(p, ATOL)
    assert between(rot_pose(30), rot_pose(75)).allclose(rot_pose(45), 1e-12)


def test_group_axioms_on_random_poses(poses):
    I = Pose.identity()
    for a, b, c in zip(poses, poses[1:], poses[2:]):
        assert compose(compose(a, b), c).allclose(compose(a, compose(b, c)), ATOL)
        assert compose(a, I).allclose(a, ATOL)
        assert compose(a, inverse(a)).allclose(I, ATOL)
        assert compose(inverse(a), a).allclose(I, ATOL)
        assert compose(a, between(a, b)).allclose(b, ATOL)


def test_rotation_stays_orthonormal_over_long_chain():
    rng = np.random.default_rng(7)
    p = Pose.identity()
    for _ in range(10_000):
        p = p.compose(random_pose(rng, 0.1, 1.0))
    R = p.rotation
    assert np.linalg.norm(R.T @ R - np.eye(3)) < 1e-9
    assert abs(np.linalg.det(R) - 1.0) < 1e-9


def test_orthonormalized_projects_to_rotation(rng):
    p = random_pose(rng)
    noisy = Pose(p.rotation + 1e-6 * rng.normal(size=(3, 3)), p.translation)
    q = noisy.orthonormalized()
    assert np.linalg.norm(q.rotation.T @ q.rotation - np.eye(3)) < 1e-12
    assert np.linalg.det(q.rotation) > 0


# ---------------------------------------------------------------- exp / log
def test_exp_zero_is_identity():
    assert g.exp(np.zeros(6)).allclose(Pose.identity(), 0)


def test_log_identity_is_zero():
    np.testing.assert_array_equal(g.log(Pose.identity()), np.zeros(6))


def test_log_of_yaw_rotation():
    np.testing.assert_allclose(g.log(Pose(rot_z(0.3), np.zeros(3))), [0, 0, 0, 0, 0, 0.3], atol=1e-12)


def test_exp_of_pure_translation_twist():
    assert g.exp([1, 2, 3, 0, 0, 0]).allclose(translation(1, 2, 3), 1e-15)


def test_exp_log_round_trip_random(rng):
    for _ in range(100):
        p = random_pose(rng, max_angle=np.pi - 1e-3)
        assert g.exp(g.log(p)).allclose(p, ATOL)


@settings(max_examples=300, deadline=None)
@given(
    st.lists(st.floats(-50, 50), min_size=3, max_size=3),
    st.lists(st.floats(-1, 1), min_size=3, max_size=3),
    st.floats(0, np.pi - 1e-6),
)
def test_log_exp_round_trip_property(rho, axis, angle):
    axis = np.asarray(axis)
    n = np.linalg.norm(axis)
    phi = np.zeros(3) if n < 1e-12 else axis / n * angle
    xi = np.concatenate([rho, phi])
    np.testing.assert_allclose(g.log(g.exp(xi)), xi, atol=ATOL * max(1.0, np.abs(xi).max()))


@pytest.mark.parametrize("theta", [0.0, 1e-12, 1e-8, 1e-5, 1e-3, 9.9e-3, 1e-2, 0.1, 1.0, 3.0, np.pi - 1e-7])
def test_round_trip_across_angle_branches(theta):
    axis = np.array([0.3, -0.5, 0.81])
    axis /= np.linalg.norm(axis)
    xi = np.concatenate([[0.7, -1.2, 2.0], axis * theta])
    np.testing.assert_allclose(g.log(g.exp(xi)), xi, atol=ATOL)


def test_log_at_pi_picks_positive_dominant_axis():
    # rotations by +pi and -pi about z are the same matrix; the branch is fixed
    for sign in (1.0, -1.0):
        p = g.exp([0, 0, 0, 0, 0, sign * np.pi])
        np.testing.assert_allclose(g.log(p)[3:], [0, 0, np.pi], atol=1e-9)
    axis = np.array([0.6, 0.0, -0.8])
    w = g.log(g.exp(np.concatenate([np.zeros(3), axis * np.pi])))[3:]
    np.testing.assert_allclose(w, -axis * np.pi, atol=1e-9)
    assert g.exp(np.concatenate([np.zeros(3), w])).allclose(g.exp(np.concatenate([np.zeros(3), axis * np.pi])), ATOL)


def _twists(rng, n):
    xi = rng.normal(size=(n, 6))
    xi[:, 3:] *= 0.8  # keep rotations inside the injectivity radius
    return xi


def test_batched_exp_log_match_single(rng):
    xi = _twists(rng, 20)
    T = g.se3_exp(xi)
    for i in range(20):
        np.testing.assert_allclose(T[i], g.se3_exp(xi[i]), atol=1e-15)
    np.testing.assert_allclose(g.se3_log(T), xi, atol=1e-10)


# ---------------------------------------------------------------- retract
def test_retract_zero(rng):
    assert g.retract(Pose.identity(), np.zeros(6)).allclose(Pose.identity(), 0)
    p = random_pose(rng)
    assert g.retract(p, np.zeros(6)).allclose(p, 0)


def test_retract_between_log_reaches_target(rng):
    p, q = random_pose(rng, 3.0), random_pose(rng, 3.0)
    assert g.retract(p, g.log(between(p, q))).allclose(q, ATOL)


def test_retract_is_right_multiplication():
    p = compose(rot_pose(40), translation(2, -1, 0.5))
    d = np.array([0.1, 0.2, -0.3, 0.05, -0.02, 0.3])
    np.testing.assert_allclose(g.retract(p, d).matrix(), p.matrix() @ g.se3_exp(d), atol=1e-15)


# ---------------------------------------------------------------- Jacobians
def test_left_jacobian_inverse(rng):
    xi = _twists(rng, 50)
    prod = g.se3_left_jacobian(xi) @ g.se3_left_jacobian_inv(xi)
    np.testing.assert_allclose(prod, np.broadcast_to(np.eye(6), prod.shape), atol=1e-10)


def test_right_jacobian_inverse_matches_finite_differences(rng):
    for xi in _twists(rng, 20):
        T = g.se3_exp(xi)
        num = numeric_jacobian(lambda M: g.se3_log(M), [T], 0)
        np.testing.assert_allclose(g.se3_right_jacobian_inv(xi), num, atol=1e-7)


def test_adjoint_moves_perturbation_across(rng):
    T = random_pose(rng).matrix()
    d = 1e-3 * rng.normal(size=6)
    lhs = g.se3_exp(g.se3_adjoint(T) @ d) @ T
    rhs = T @ g.se3_exp(d)
    np.testing.assert_allclose(lhs, rhs, atol=1e-14)


# ---------------------------------------------------------------- serialization helpers
def test_row_round_trip(rng):
    p = random_pose(rng)
    q = Pose.from_row(p.to_row())
    np.testing.assert_array_equal(q.matrix(), p.matrix())


def test_yaw_and_angle():
    p = Pose.from_xyz_yaw(1, 2, 3, 0.4)
    assert p.yaw == pytest.approx(0.4, abs=1e-15)
    assert p.angle == pytest.approx(0.4, abs=1e-15)
    np.testing.assert_allclose(p.transform_point([1, 0, 0]), [1 + np.cos(0.4), 2 + np.sin(0.4), 3])
