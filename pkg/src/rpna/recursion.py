"""Recursive computation of per-joint parameter-transfer subspaces.

Each joint gets a velocity span, a kinetic-energy descriptor and a
nullspace descriptor whose null space is the set of parameter changes that
can be traded between the body and its predecessor without any effect on the
dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import Mechanism, ModelError, UnsupportedFeature
from .spatial import cross_motion, momentum_map, momentum_output, param_rate, param_transform

PRUNE_TOL = 1e-10
CTRB_POWERS = 6
OBS_POWERS = 10


def _svd_rank(s: np.ndarray, tol: float) -> int:
    # bases entering the recursion are O(1); the unit floor keeps pure
    # round-off matrices from counting as full rank
    if s.size == 0:
        return 0
    return int(np.sum(s > tol * max(s[0], 1.0)))


def prune_columns(M: np.ndarray, tol: float = PRUNE_TOL) -> np.ndarray:
    """Orthonormal basis for the column space of ``M``."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros((M.shape[0], 0))
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    return U[:, :_svd_rank(s, tol)]


def prune_rows(M: np.ndarray, tol: float = PRUNE_TOL) -> np.ndarray:
    """Orthonormal basis (as rows) for the row space of ``M``."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros((0, M.shape[1]))
    _, s, Vt = np.linalg.svd(M, full_matrices=False)
    return Vt[:_svd_rank(s, tol)]


def null_basis(M: np.ndarray, tol: float = PRUNE_TOL) -> np.ndarray:
    """Orthonormal basis for the null space of ``M``."""
    M = np.asarray(M, dtype=float)
    n = M.shape[1]
    if M.shape[0] == 0:
        return np.eye(n)
    _, s, Vt = np.linalg.svd(M, full_matrices=True)
    return Vt[_svd_rank(s, tol):].T


def rank(M: np.ndarray, tol: float = PRUNE_TOL) -> int:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0
    return _svd_rank(np.linalg.svd(M, compute_uv=False), tol)


def ctrb(phi, V) -> np.ndarray:
    """Smallest ``(phi x)``-invariant subspace containing ``range(V)``."""
    V = np.asarray(V, dtype=float).reshape(6, -1)
    cm = cross_motion(phi)
    blocks, cur = [], V
    for _ in range(CTRB_POWERS):
        blocks.append(cur)
        cur = cm @ cur
    return prune_columns(np.hstack(blocks))


def switched_ctrb(modes, V) -> np.ndarray:
    """Smallest subspace containing ``range(V)`` and invariant under every mode."""
    modes = np.asarray(modes, dtype=float).reshape(6, -1)
    span = prune_columns(np.asarray(V, dtype=float).reshape(6, -1))
    for _ in range(6):
        before = span.shape[1]
        for k in range(modes.shape[1]):
            span = ctrb(modes[:, k], span)
        if span.shape[1] == before:
            break
    return span


def obs(C, A) -> np.ndarray:
    """Row basis of ``[C; C A; ...; C A^9]``."""
    C = np.asarray(C, dtype=float).reshape(-1, 10)
    blocks, cur = [], C
    for _ in range(OBS_POWERS):
        blocks.append(cur)
        cur = cur @ A
    return prune_rows(np.vstack(blocks))


def switched_obs(C, rates) -> np.ndarray:
    """Row basis whose null space is the largest subspace of ``null(C)``
    invariant under every matrix in ``rates``."""
    rows = prune_rows(np.asarray(C, dtype=float).reshape(-1, 10))
    for _ in range(10):
        before = rows.shape[0]
        for A in rates:
            rows = obs(rows, A)
        if rows.shape[0] == before:
            break
    return rows


@dataclass(frozen=True)
class RpnaOptions:
    gravity_enabled: bool = True
    static_only: bool = False
    include_rotors: bool = False

    def __post_init__(self):
        if self.static_only and not self.gravity_enabled:
            raise ValueError("a static analysis needs gravity")


@dataclass(frozen=True)
class JointAnalysis:
    """Per-joint results.

    ``V`` is the velocity span used for the momentum rows (kinetic and
    gravity spans merged), ``C`` the kinetic-energy descriptor handed to the
    children, ``O`` the observability rows and ``N`` the nullspace
    descriptor. When a rotor is analysed, ``N_aug`` acts on
    ``[dpi_i; dJ_m]`` and ``transfer_basis`` spans its null space.
    """

    body: int
    V: np.ndarray
    kinetic_span: np.ndarray
    gravity_span: np.ndarray
    C: np.ndarray
    O: np.ndarray
    N: np.ndarray
    transfer_dim: int
    N_aug: np.ndarray
    transfer_basis: np.ndarray
    rotor_identifiable: Optional[bool] = None

    @property
    def dim_V(self) -> int:
        return self.V.shape[1]

    @property
    def dim_K(self) -> int:
        return self.C.shape[0]

    @property
    def has_rotor(self) -> bool:
        return self.rotor_identifiable is not None


def _gravity_seed(mech: Mechanism, opts: RpnaOptions) -> np.ndarray:
    if not opts.gravity_enabled or not np.any(mech.gravity):
        return np.zeros((6, 0))
    # the base is accelerated opposite to gravity
    return prune_columns(-mech.gravity_motion.reshape(6, 1))


def analyze_rotor(mech: Mechanism, i: int, kinetic_parent: np.ndarray,
                  gravity_span: np.ndarray, O: np.ndarray):
    """Joint-local system over ``(dpi_i, dJ_m)`` for the rotor driven by joint ``i``.

    Rows: momentum rows for the velocity directions that the joint motion
    generates from the parent span and for gravity (no rotor term), the
    momentum rows for the parent velocity itself (rotor term
    ``n phi_m^T X_m v``), the torque row ``phi^T dI phi + n^2 dJ`` and the
    relaxed invariance rows. Returns the row-pruned descriptor.
    """
    body = mech.body(i)
    rotor = body.rotor
    if not rotor.symmetric:
        raise UnsupportedFeature(f"body {i} ({body.name!r}): only rotationally symmetric rotors are supported")
    if body.joint.ndof != 1:
        raise UnsupportedFeature(f"body {i} ({body.name!r}): rotors are only supported on 1-DoF joints")
    phi = body.joint.modes[:, 0]
    X_J = body.placement.matrix
    n = rotor.gear_ratio
    cm = cross_motion(phi)

    moved = X_J @ kinetic_parent
    generated = []
    cur = moved
    for _ in range(1, CTRB_POWERS):
        cur = cm @ cur
        generated.append(cur)
    W = prune_columns(np.hstack(generated + [gravity_span]))

    K_phi = momentum_map(phi)
    rows = [np.hstack((W.T @ K_phi, np.zeros((W.shape[1], 1))))]
    if kinetic_parent.shape[1]:
        rotor_term = n * (rotor.phi @ rotor.placement.matrix @ kinetic_parent)
        rows.append(np.hstack((moved.T @ K_phi, rotor_term.reshape(-1, 1))))
    rows.append(np.concatenate((phi @ K_phi, [n * n])).reshape(1, 11))
    A = param_rate(phi)
    if O.shape[0]:
        rows.append(np.hstack((O @ A, np.zeros((O.shape[0], 1)))))
    N_aug = prune_rows(np.vstack(rows))
    return N_aug


def _mass_and_moment_only(M: np.ndarray) -> np.ndarray:
    M = M.copy()
    M[:, 4:] = 0.0
    return M


def run(mech: Mechanism, opts: RpnaOptions = RpnaOptions()) -> list:
    """Analyse every joint in topological order; returns a list of :class:`JointAnalysis`."""
    gravity = {0: _gravity_seed(mech, opts)}
    kinetic = {0: np.zeros((6, 0))}
    descriptor = {0: np.zeros((1, 10))}
    out = []
    for i, body in enumerate(mech.bodies, start=1):
        p = body.parent
        X_J = body.placement.matrix
        modes = body.joint.modes
        rates = [param_rate(modes[:, k]) for k in range(modes.shape[1])]

        grav_i = switched_ctrb(modes, X_J @ gravity[p])
        if opts.static_only:
            kin_i = np.zeros((6, 0))
            span = grav_i
        else:
            kin_i = prune_columns(np.hstack((switched_ctrb(modes, X_J @ kinetic[p]), modes)))
            span = prune_columns(np.hstack((kin_i, grav_i)))

        O = switched_obs(descriptor[p] @ param_transform(X_J), rates)
        C_mom = momentum_output(span, modes)
        if opts.static_only:
            # gravity only sees mass and first moments; both the parameter
            # transforms and the rates keep rows on those coordinates, so the
            # rotational-inertia columns hold nothing but amplified round-off
            O = prune_rows(_mass_and_moment_only(O))
            C_mom = _mass_and_moment_only(C_mom)
        N = prune_rows(np.vstack([C_mom] + [O @ A for A in rates]))
        C = prune_rows(np.vstack((C_mom, O)))
        transfer_dim = 10 - N.shape[0]

        rotor_ok = None
        N_aug = N
        if opts.include_rotors and body.rotor is not None:
            if opts.static_only:
                # a symmetric rotor has no gravity effect, so statics never see it
                N_aug = np.hstack((N, np.zeros((N.shape[0], 1))))
            else:
                N_aug = analyze_rotor(mech, i, kinetic[p], grav_i, O)
            rotor_ok = (N_aug.shape[1] - N_aug.shape[0]) == transfer_dim

        gravity[i], kinetic[i], descriptor[i] = grav_i, kin_i, C
        out.append(JointAnalysis(
            body=i, V=span, kinetic_span=kin_i, gravity_span=grav_i, C=C, O=O, N=N,
            transfer_dim=transfer_dim, N_aug=N_aug, transfer_basis=null_basis(N_aug),
            rotor_identifiable=rotor_ok,
        ))
    return out


def check_options(mech: Mechanism, opts: RpnaOptions) -> None:
    if opts.include_rotors:
        for i in mech.rotor_bodies:
            b = mech.body(i)
            if b.joint.ndof != 1:
                raise UnsupportedFeature(f"body {i} ({b.name!r}): rotors are only supported on 1-DoF joints")
            if not b.rotor.symmetric:
                raise UnsupportedFeature(f"body {i} ({b.name!r}): only rotationally symmetric rotors are supported")
    if opts.static_only and not np.any(mech.gravity):
        raise ModelError("static analysis requires nonzero gravity")
