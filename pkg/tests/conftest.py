import numpy as np
import pytest

from slotwin.geometry import Pose, random_pose, se3_exp


def numeric_jacobian(f, poses, index, eps=1e-6):
    """Central differences of ``f(*poses)`` under right perturbation of ``poses[index]``."""
    cols = []
    for k in range(6):
        d = np.zeros(6)
        d[k] = eps
        plus = list(poses)
        minus = list(poses)
        plus[index] = poses[index] @ se3_exp(d)
        minus[index] = poses[index] @ se3_exp(-d)
        cols.append((f(*plus) - f(*minus)) / (2 * eps))
    return np.stack(cols, axis=1)


def random_matrices(rng, n, max_angle=2.5, max_trans=5.0):
    return [random_pose(rng, max_angle, max_trans).matrix() for _ in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def poses(rng):
    return [random_pose(rng) for _ in range(1000)]


def translation(x, y, z=0.0) -> Pose:
    return Pose.from_translation(x, y, z)
