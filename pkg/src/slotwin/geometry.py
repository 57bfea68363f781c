"""SE(3) pose algebra.

Twists are 6-vectors laid out as ``[rho, phi]``: translational part first,
rotational part (axis-angle, radians) second.  State updates use the right
perturbation ``p * exp(delta)`` everywhere in the package.

The array-level functions accept leading batch dimensions, e.g. ``(N, 4, 4)``
matrices or ``(N, 6)`` twists.  :class:`Pose` wraps a single transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SMALL = 1e-2
_NEAR_PI = 0.5


def hat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(W: np.ndarray) -> np.ndarray:
    return 0.5 * np.stack(
        [W[..., 2, 1] - W[..., 1, 2], W[..., 0, 2] - W[..., 2, 0], W[..., 1, 0] - W[..., 0, 1]],
        axis=-1,
    )


def _rodrigues_coeffs(theta):
    # A = sin(t)/t, B = (1-cos t)/t^2, C = (t - sin t)/t^3
    small = theta < _SMALL
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    t4 = t2 * t2
    A = np.where(small, 1.0 - t2 / 6.0 + t4 / 120.0 - t4 * t2 / 5040.0, np.sin(t) / t)
    B = np.where(small, 0.5 - t2 / 24.0 + t4 / 720.0 - t4 * t2 / 40320.0, (1.0 - np.cos(t)) / (t * t))
    C = np.where(
        small, 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t4 * t2 / 362880.0, (t - np.sin(t)) / (t * t * t)
    )
    return A, B, C


def so3_exp(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    A, B, _ = _rodrigues_coeffs(theta)
    K = hat(phi)
    K2 = K @ K
    return np.eye(3) + A[..., None, None] * K + B[..., None, None] * K2


def _axis_near_pi(R: np.ndarray, c: float, w: np.ndarray) -> np.ndarray:
    # (R + R^T)/2 = c I + (1 - c) a a^T stays well conditioned near pi, unlike
    # the antisymmetric part sin(theta) a.  The sign comes from the antisymmetric
    # part; at pi (within rounding) it is ambiguous and the largest-magnitude
    # component is made positive so the branch is deterministic.
    aa = (0.5 * (R + R.T) - c * np.eye(3)) / (1.0 - c)
    k = int(np.argmax(np.diag(aa)))
    a = aa[:, k] / np.sqrt(max(aa[k, k], 1e-300))
    a /= np.linalg.norm(a)
    d = float(np.dot(a, w))
    if abs(d) <= 1e-12:  # sign not resolvable from rounding-level sin(theta)
        d = a[int(np.argmax(np.abs(a)))]
    if d < 0:
        a = -a
    return a


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of ``R``.

    At exactly pi the axis sign is chosen so that its largest-magnitude
    component is positive.
    """
    R = np.asarray(R, dtype=float)
    w = vee(R)
    s = np.linalg.norm(w, axis=-1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)
    small = theta < _SMALL
    # theta/sin(theta), series near zero
    safe_sin = np.sin(np.where(small, 1.0, theta))
    ratio = np.where(small, 1.0 + theta * theta / 6.0 + 7.0 * theta**4 / 360.0, theta / safe_sin)
    phi = w * ratio[..., None]
    near_pi = np.pi - theta < _NEAR_PI
    if np.any(near_pi):
        flat_R = R.reshape(-1, 3, 3)
        flat_phi = phi.reshape(-1, 3)
        flat_w = w.reshape(-1, 3)
        flat_theta = np.broadcast_to(theta, near_pi.shape).reshape(-1)
        flat_c = np.broadcast_to(c, near_pi.shape).reshape(-1)
        for i in np.flatnonzero(near_pi.reshape(-1)):
            flat_phi[i] = _axis_near_pi(flat_R[i], flat_c[i], flat_w[i]) * flat_theta[i]
        phi = flat_phi.reshape(phi.shape)
    return phi


def so3_left_jacobian(phi: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(phi, axis=-1)
    _, B, C = _rodrigues_coeffs(theta)
    K = hat(phi)
    return np.eye(3) + B[..., None, None] * K + C[..., None, None] * (K @ K)


def so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(phi, axis=-1)
    small = theta < _SMALL
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    D = np.where(
        small,
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0,
        1.0 / (t * t) - (1.0 + np.cos(t)) / (2.0 * t * np.sin(t)),
    )
    K = hat(phi)
    return np.eye(3) - 0.5 * K + D[..., None, None] * (K @ K)


def _q_block(xi: np.ndarray) -> np.ndarray:
    """Off-diagonal block of the SE(3) left Jacobian."""
    rho, phi = xi[..., :3], xi[..., 3:]
    theta = np.linalg.norm(phi, axis=-1)
    small = theta < _SMALL
    t = np.where(small, 1.0, theta)
    t2 = theta * theta
    c1 = np.where(small, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0, (t - np.sin(t)) / t**3)
    c2 = np.where(
        small,
        1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0,
        (t * t + 2.0 * np.cos(t) - 2.0) / (2.0 * t**4),
    )
    c3 = np.where(
        small,
        1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0,
        (2.0 * t - 3.0 * np.sin(t) + t * np.cos(t)) / (2.0 * t**5),
    )
    P = hat(phi)
    Rh = hat(rho)
    PR = P @ Rh
    RP = Rh @ P
    PRP = PR @ P
    PP = P @ P
    return (
        0.5 * Rh
        + c1[..., None, None] * (PR + RP + PRP)
        + c2[..., None, None] * (PP @ Rh + RP @ P - 3.0 * PRP)
        + c3[..., None, None] * (PRP @ P + PP @ Rh @ P)
    )


def se3_exp(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    rho, phi = xi[..., :3], xi[..., 3:]
    out = np.zeros(xi.shape[:-1] + (4, 4))
    out[..., :3, :3] = so3_exp(phi)
    out[..., :3, 3] = np.einsum("...ij,...j->...i", so3_left_jacobian(phi), rho)
    out[..., 3, 3] = 1.0
    return out


def se3_log(T: np.ndarray) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    phi = so3_log(T[..., :3, :3])
    rho = np.einsum("...ij,...j->...i", so3_left_jacobian_inv(phi), T[..., :3, 3])
    return np.concatenate([rho, phi], axis=-1)


def se3_inv(T: np.ndarray) -> np.ndarray:
    R = T[..., :3, :3]
    Rt = np.swapaxes(R, -1, -2)
    out = np.zeros_like(T)
    out[..., :3, :3] = Rt
    out[..., :3, 3] = -np.einsum("...ij,...j->...i", Rt, T[..., :3, 3])
    out[..., 3, 3] = 1.0
    return out


def se3_adjoint(T: np.ndarray) -> np.ndarray:
    R = T[..., :3, :3]
    out = np.zeros(T.shape[:-2] + (6, 6))
    out[..., :3, :3] = R
    out[..., :3, 3:] = hat(T[..., :3, 3]) @ R
    out[..., 3:, 3:] = R
    return out


def se3_left_jacobian(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    J = so3_left_jacobian(xi[..., 3:])
    out = np.zeros(xi.shape[:-1] + (6, 6))
    out[..., :3, :3] = J
    out[..., 3:, 3:] = J
    out[..., :3, 3:] = _q_block(xi)
    return out


def se3_left_jacobian_inv(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    Ji = so3_left_jacobian_inv(xi[..., 3:])
    out = np.zeros(xi.shape[:-1] + (6, 6))
    out[..., :3, :3] = Ji
    out[..., 3:, 3:] = Ji
    out[..., :3, 3:] = -Ji @ _q_block(xi) @ Ji
    return out


def se3_right_jacobian_inv(xi: np.ndarray) -> np.ndarray:
    """Inverse right Jacobian: d log(exp(xi) exp(eps)) / d eps at eps = 0."""
    return se3_left_jacobian_inv(-np.asarray(xi, dtype=float))


def rot_z(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform mapping points from the local frame into the parent frame."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.array(self.rotation, dtype=float).reshape(3, 3))
        object.__setattr__(self, "translation", np.array(self.translation, dtype=float).reshape(3))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_translation(cls, x: float, y: float, z: float = 0.0) -> "Pose":
        return cls(np.eye(3), [x, y, z])

    @classmethod
    def from_xyz_yaw(cls, x: float, y: float, z: float, yaw: float) -> "Pose":
        return cls(rot_z(yaw), [x, y, z])

    @classmethod
    def exp(cls, xi) -> "Pose":
        return cls.from_matrix(se3_exp(np.asarray(xi, dtype=float).reshape(6)))

    @classmethod
    def from_row(cls, values) -> "Pose":
        """Build from a row-major 3x4 matrix given as 12 numbers."""
        M = np.asarray(values, dtype=float).reshape(3, 4)
        return cls(M[:, :3], M[:, 3])

    def to_row(self) -> np.ndarray:
        return self.matrix()[:3].reshape(12)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def log(self) -> np.ndarray:
        return se3_log(self.matrix())

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    __mul__ = compose

    def between(self, other: "Pose") -> "Pose":
        return self.inverse().compose(other)

    def retract(self, delta) -> "Pose":
        return self.compose(Pose.exp(delta))

    def transform_point(self, p) -> np.ndarray:
        return self.rotation @ np.asarray(p, dtype=float) + self.translation

    def orthonormalized(self) -> "Pose":
        U, _, Vt = np.linalg.svd(self.rotation)
        R = U @ Vt
        if np.linalg.det(R) < 0:
            U[:, -1] *= -1
            R = U @ Vt
        return Pose(R, self.translation)

    @property
    def yaw(self) -> float:
        return float(np.arctan2(self.rotation[1, 0], self.rotation[0, 0]))

    @property
    def angle(self) -> float:
        """Rotation angle in radians."""
        return float(np.linalg.norm(so3_log(self.rotation)))

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol, rtol=0)
            and np.allclose(self.translation, other.translation, atol=atol, rtol=0)
        )

    def __repr__(self):
        t = ", ".join(f"{v:.4g}" for v in self.translation)
        return f"Pose(t=[{t}], yaw={self.yaw:.4g})"


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def inverse(a: Pose) -> Pose:
    return a.inverse()


def between(a: Pose, b: Pose) -> Pose:
    """``a^-1 * b``: the transform taking ``a`` to ``b`` expressed in ``a``."""
    return a.inverse().compose(b)


def exp(xi) -> Pose:
    return Pose.exp(xi)


def log(p: Pose) -> np.ndarray:
    return p.log()


def retract(p: Pose, delta) -> Pose:
    return p.retract(delta)


def random_pose(rng: np.random.Generator, max_angle: float = np.pi, max_trans: float = 10.0) -> Pose:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, max_angle)
    return Pose(so3_exp(axis * angle), rng.uniform(-max_trans, max_trans, size=3))
