"""Spatial vector algebra and linear operators on inertial parameters.

Motion vectors are 6-vectors ``[angular; linear]``. Inertial parameters are
10-vectors ordered ``[m, hx, hy, hz, Ixx, Ixy, Ixz, Iyy, Iyz, Izz]`` where
``h = m c`` is the first moment and the rotational block is taken about the
frame origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PARAM_NAMES = ("m", "hx", "hy", "hz", "Ixx", "Ixy", "Ixz", "Iyy", "Iyz", "Izz")

# (row, col) of the rotational-inertia entries, in parameter order
_INERTIA_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))

STRUCTURE_TOL = 1e-9


class StructureError(ValueError):
    """Raised when a matrix does not have spatial-inertia structure."""


def skew(w) -> np.ndarray:
    """3x3 matrix with ``skew(w) @ x == cross(w, x)``."""
    w = np.asarray(w, dtype=float)
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def cross_motion(v) -> np.ndarray:
    """Spatial cross-product matrix ``v x`` for motion vectors."""
    v = np.asarray(v, dtype=float)
    out = np.zeros((6, 6))
    w = skew(v[:3])
    out[:3, :3] = w
    out[3:, 3:] = w
    out[3:, :3] = skew(v[3:])
    return out


def cross_force(v) -> np.ndarray:
    """Spatial cross product for force vectors, ``-(v x)^T``."""
    return -cross_motion(v).T


def wedge(pi) -> np.ndarray:
    """Spatial inertia matrix of a parameter vector."""
    pi = np.asarray(pi, dtype=float)
    m, h = pi[0], pi[1:4]
    rot = np.empty((3, 3))
    for k, (r, c) in enumerate(_INERTIA_INDEX):
        rot[r, c] = rot[c, r] = pi[4 + k]
    out = np.zeros((6, 6))
    out[:3, :3] = rot
    out[:3, 3:] = skew(h)
    out[3:, :3] = skew(h).T
    out[3:, 3:] = m * np.eye(3)
    return out


def vee(inertia) -> np.ndarray:
    """Inverse of :func:`wedge`; checks the structure first."""
    inertia = np.asarray(inertia, dtype=float)
    if inertia.shape != (6, 6):
        raise StructureError(f"expected a 6x6 matrix, got {inertia.shape}")
    scale = np.max(np.abs(inertia))
    m = inertia[3, 3]
    h = np.array([inertia[2, 4], inertia[0, 5], inertia[1, 3]])
    if scale > 0:
        rebuilt = wedge(np.concatenate(([m], h, [inertia[r, c] for r, c in _INERTIA_INDEX])))
        err = np.max(np.abs(rebuilt - inertia)) / scale
        if err > STRUCTURE_TOL:
            raise StructureError(
                f"matrix is not a spatial inertia (normalized deviation {err:.3g})")
    return np.concatenate(([m], h, [inertia[r, c] for r, c in _INERTIA_INDEX]))


def momentum_map(x) -> np.ndarray:
    """6x10 matrix ``K(x)`` such that ``wedge(pi) @ x == K(x) @ pi``."""
    x = np.asarray(x, dtype=float)
    w, u = x[:3], x[3:]
    out = np.zeros((6, 10))
    out[3:, 0] = u
    out[:3, 1:4] = -skew(u)
    out[3:, 1:4] = skew(w)
    wx, wy, wz = w
    out[:3, 4:] = [[wx, wy, wz, 0.0, 0.0, 0.0],
                   [0.0, wx, 0.0, wy, wz, 0.0],
                   [0.0, 0.0, wx, 0.0, wy, wz]]
    return out


def momentum_map_batch(x: np.ndarray) -> np.ndarray:
    """:func:`momentum_map` applied to an ``(S, 6)`` stack; returns ``(S, 6, 10)``."""
    x = np.asarray(x, dtype=float)
    wx, wy, wz, ux, uy, uz = (x[:, k] for k in range(6))
    out = np.zeros((x.shape[0], 6, 10))
    out[:, 3, 0], out[:, 4, 0], out[:, 5, 0] = ux, uy, uz
    # top rows: -skew(u) acting on h
    out[:, 0, 2], out[:, 0, 3] = uz, -uy
    out[:, 1, 1], out[:, 1, 3] = -uz, ux
    out[:, 2, 1], out[:, 2, 2] = uy, -ux
    # bottom rows: skew(w) acting on h
    out[:, 3, 2], out[:, 3, 3] = -wz, wy
    out[:, 4, 1], out[:, 4, 3] = wz, -wx
    out[:, 5, 1], out[:, 5, 2] = -wy, wx
    out[:, 0, 4], out[:, 0, 5], out[:, 0, 6] = wx, wy, wz
    out[:, 1, 5], out[:, 1, 7], out[:, 1, 8] = wx, wy, wz
    out[:, 2, 6], out[:, 2, 8], out[:, 2, 9] = wx, wy, wz
    return out


def energy_descriptor(v) -> np.ndarray:
    """Vector ``k(v)`` with ``k(v) @ pi == v @ wedge(pi) @ v``."""
    v = np.asarray(v, dtype=float)
    return momentum_map(v).T @ v


def param_transform(X) -> np.ndarray:
    """10x10 matrix ``B`` with ``wedge(B @ pi) == X.T @ wedge(pi) @ X``.

    ``X`` maps motion vectors from frame a to frame b; ``B`` re-expresses the
    parameters of a body given in frame b in the coordinates of frame a.
    """
    X = _as_matrix(X)
    out = np.empty((10, 10))
    for j in range(10):
        e = np.zeros(10)
        e[j] = 1.0
        out[:, j] = vee(X.T @ wedge(e) @ X)
    return out


def param_rate(phi) -> np.ndarray:
    """10x10 matrix ``A`` with ``wedge(A pi) = (phi x)^T wedge(pi) + wedge(pi) (phi x)``."""
    cm = cross_motion(phi)
    out = np.empty((10, 10))
    for j in range(10):
        e = np.zeros(10)
        e[j] = 1.0
        inertia = wedge(e)
        out[:, j] = vee(cm.T @ inertia + inertia @ cm)
    return out


def momentum_output(V, Phi) -> np.ndarray:
    """Rows ``v^T K(phi)`` over columns ``v`` of ``V`` and ``phi`` of ``Phi``.

    ``momentum_output(V, Phi) @ pi == 0`` exactly when ``V.T @ wedge(pi) @ Phi == 0``.
    """
    V = np.asarray(V, dtype=float).reshape(6, -1)
    Phi = np.asarray(Phi, dtype=float).reshape(6, -1)
    blocks = [V.T @ momentum_map(Phi[:, k]) for k in range(Phi.shape[1])]
    if not blocks:
        return np.zeros((0, 10))
    return np.vstack(blocks)


def rotation_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_matrix(rpy) -> np.ndarray:
    """Orientation of a child frame from roll-pitch-yaw (URDF convention)."""
    r, p, y = rpy
    return rotation_z(y) @ rotation_y(p) @ rotation_x(r)


@dataclass(frozen=True)
class SpatialTransform:
    """Plucker transform from frame a to frame b.

    ``rotation`` expresses a-coordinates in b (``E``) and ``translation`` is
    the origin of b expressed in a (``r``), so the 6x6 form is
    ``[[E, 0], [-E skew(r), E]]``.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        E = np.array(self.rotation, dtype=float).reshape(3, 3)
        r = np.array(self.translation, dtype=float).reshape(3)
        if not np.allclose(E @ E.T, np.eye(3), atol=1e-9) or np.linalg.det(E) < 0:
            raise ValueError("rotation must be a proper orthonormal matrix")
        E.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "rotation", E)
        object.__setattr__(self, "translation", r)

    @classmethod
    def identity(cls) -> "SpatialTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rpy_xyz(cls, rpy=(0.0, 0.0, 0.0), xyz=(0.0, 0.0, 0.0)) -> "SpatialTransform":
        """Frame placed at ``xyz`` with orientation ``rpy`` relative to its parent."""
        return cls(rpy_matrix(rpy).T, np.asarray(xyz, dtype=float))

    @classmethod
    def from_matrix(cls, X) -> "SpatialTransform":
        X = np.asarray(X, dtype=float)
        E = X[:3, :3]
        # lower-left block is -E skew(r)
        S = -E.T @ X[3:, :3]
        return cls(E, np.array([S[2, 1], S[0, 2], S[1, 0]]))

    @property
    def matrix(self) -> np.ndarray:
        E, r = self.rotation, self.translation
        out = np.zeros((6, 6))
        out[:3, :3] = E
        out[3:, 3:] = E
        out[3:, :3] = -E @ skew(r)
        return out

    def inverse(self) -> "SpatialTransform":
        return SpatialTransform(self.rotation.T, -self.rotation @ self.translation)

    def __matmul__(self, other: "SpatialTransform") -> "SpatialTransform":
        # (self @ other) maps through other first
        E = self.rotation @ other.rotation
        r = other.translation + other.rotation.T @ self.translation
        return SpatialTransform(E, r)

    def apply(self, v) -> np.ndarray:
        return self.matrix @ np.asarray(v, dtype=float)


def _as_matrix(X) -> np.ndarray:
    if isinstance(X, SpatialTransform):
        return X.matrix
    return np.asarray(X, dtype=float)


def _series_coefficients(theta: np.ndarray):
    """sin(t)/t, (1-cos t)/t^2, (t-sin t)/t^3 with small-angle series."""
    t2 = theta * theta
    small = np.abs(theta) < 1e-4
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1 - t2 / 6 + t2 * t2 / 120, np.sin(safe) / safe)
    b = np.where(small, 0.5 - t2 / 24 + t2 * t2 / 720, (1 - np.cos(safe)) / safe**2)
    c = np.where(small, 1 / 6 - t2 / 120 + t2 * t2 / 5040, (safe - np.sin(safe)) / safe**3)
    return a, b, c


def joint_transform_batch(q, phi) -> np.ndarray:
    """Closed-form ``expm(-q * cross_motion(phi))`` for an array of ``q``.

    Handles rotation, translation and screw modes. Returns ``(S, 6, 6)``.
    """
    q = np.atleast_1d(np.asarray(q, dtype=float))
    phi = np.asarray(phi, dtype=float)
    # exp(-q phi x) is the adjoint of the twist -q phi
    w = -np.outer(q, phi[:3])
    v = -np.outer(q, phi[3:])
    theta = np.linalg.norm(w, axis=1)
    a, b, c = _series_coefficients(theta)
    W = _skew_batch(w)
    W2 = W @ W
    eye = np.eye(3)
    R = eye + a[:, None, None] * W + b[:, None, None] * W2
    Vm = eye + b[:, None, None] * W + c[:, None, None] * W2
    p = np.einsum("sij,sj->si", Vm, v)
    out = np.zeros((q.shape[0], 6, 6))
    out[:, :3, :3] = R
    out[:, 3:, 3:] = R
    out[:, 3:, :3] = _skew_batch(p) @ R
    return out


def joint_transform(q: float, phi) -> SpatialTransform:
    """Transform across a one-parameter joint, ``X(q) = exp(-q (phi x))``."""
    return SpatialTransform.from_matrix(joint_transform_batch([q], phi)[0])


def _skew_batch(w: np.ndarray) -> np.ndarray:
    out = np.zeros((w.shape[0], 3, 3))
    out[:, 0, 1], out[:, 0, 2] = -w[:, 2], w[:, 1]
    out[:, 1, 0], out[:, 1, 2] = w[:, 2], -w[:, 0]
    out[:, 2, 0], out[:, 2, 1] = -w[:, 1], w[:, 0]
    return out


def cross_motion_batch(v: np.ndarray) -> np.ndarray:
    """Stack of :func:`cross_motion` matrices for an ``(S, 6)`` array."""
    out = np.zeros((v.shape[0], 6, 6))
    w = _skew_batch(v[:, :3])
    out[:, :3, :3] = w
    out[:, 3:, 3:] = w
    out[:, 3:, :3] = _skew_batch(v[:, 3:])
    return out
