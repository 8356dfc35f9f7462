"""Sampled-regressor oracle: inverse dynamics, regressors, mass matrix and
empirical nullspaces obtained from stacked random samples.

All routines are vectorised over a leading sample axis ``S``. States use
generalized coordinates: for multi-DoF joints ``q`` are the exponential
coordinates of the modes (applied in declaration order) and ``qd``/``qdd``
are their time derivatives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import subspace_angles

from .model import Mechanism, UnsupportedFeature
from .spatial import cross_motion_batch, momentum_map_batch, wedge

NULL_TOL = 1e-8
COLUMN_FLOOR = 1e-10
DEFAULT_SEED = 42


@dataclass(frozen=True)
class State:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    def __post_init__(self):
        arrs = [np.atleast_2d(np.asarray(a, dtype=float)) for a in (self.q, self.qd, self.qdd)]
        if not arrs[0].shape == arrs[1].shape == arrs[2].shape:
            raise ValueError("q, qd and qdd must have the same shape")
        for name, a in zip(("q", "qd", "qdd"), arrs):
            object.__setattr__(self, name, a)

    @property
    def n_samples(self) -> int:
        return self.q.shape[0]


def _check(mech: Mechanism, state: State) -> None:
    if state.q.shape[1] != mech.ndof:
        raise ValueError(f"state has {state.q.shape[1]} coordinates, mechanism has {mech.ndof}")
    for i in mech.rotor_bodies:
        b = mech.body(i)
        if b.joint.ndof != 1 or not b.rotor.symmetric:
            raise UnsupportedFeature(f"body {i}: rotors need a 1-DoF joint and a symmetric rotor")


def _crf(v: np.ndarray) -> np.ndarray:
    return -np.transpose(cross_motion_batch(v), (0, 2, 1))


def _mv(M: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("sij,sj->si", M, x)


def _mtv(M: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.einsum("sji,sj->si", M, x)


@dataclass
class Kinematics:
    """Per-body transforms, velocities and accelerations for a batch of states."""

    X: list      # parent -> body, (S, 6, 6)
    S: list      # motion columns, (S, 6, ndof_i)
    v: list
    a: list      # includes the fictitious base acceleration opposite gravity
    v_rotor: dict
    a_rotor: dict


def kinematics(mech: Mechanism, state: State, gravity: bool = True) -> Kinematics:
    _check(mech, state)
    n_s = state.n_samples
    offs = mech.dof_offsets
    a0 = -mech.gravity_motion if gravity else np.zeros(6)
    X, Scols, v, a = [None], [None], [np.zeros((n_s, 6))], [np.tile(a0, (n_s, 1))]
    v_rot, a_rot = {}, {}
    for i, b in enumerate(mech.bodies, start=1):
        sl = slice(offs[i - 1], offs[i - 1] + b.joint.ndof)
        q, qd, qdd = state.q[:, sl], state.qd[:, sl], state.qdd[:, sl]
        XJ = b.joint.transform_batch(q) @ b.placement.matrix
        Sq = b.joint.mode_columns_batch(q)
        vJ = _mv(Sq, qd)
        # apparent derivative of the motion columns
        cJ = np.zeros((n_s, 6))
        for k in range(b.joint.ndof):
            for j in range(k + 1, b.joint.ndof):
                cJ -= (qd[:, j] * qd[:, k])[:, None] * _mv(cross_motion_batch(Sq[:, :, j]), Sq[:, :, k])
        p = b.parent
        vi = _mv(XJ, v[p]) + vJ
        ai = _mv(XJ, a[p]) + _mv(Sq, qdd) + cJ + _mv(cross_motion_batch(vi), vJ)
        X.append(XJ)
        Scols.append(Sq)
        v.append(vi)
        a.append(ai)
        if b.rotor is not None:
            r = b.rotor
            Xm = r.placement.matrix
            n = r.gear_ratio
            vm_rel = np.outer(n * qd[:, 0], r.phi)
            vm = v[p] @ Xm.T + vm_rel
            am = a[p] @ Xm.T + np.outer(n * qdd[:, 0], r.phi) + _mv(cross_motion_batch(vm), vm_rel)
            v_rot[i], a_rot[i] = vm, am
    return Kinematics(X, Scols, v, a, v_rot, a_rot)


def _body_regressor(v: np.ndarray, a: np.ndarray) -> np.ndarray:
    """``(S, 6, 10)`` map from parameters to the net body wrench."""
    return momentum_map_batch(a) + _crf(v) @ momentum_map_batch(v)


def regressor_Y(mech: Mechanism, state: State, gravity: bool = True) -> np.ndarray:
    """Regressor of shape ``(S, ndof, 10 N + n_rotors)`` with ``tau = Y @ pi``."""
    kin = kinematics(mech, state, gravity)
    n_s = state.n_samples
    offs = mech.dof_offsets
    rotors = mech.rotor_bodies
    Y = np.zeros((n_s, mech.ndof, mech.n_params))

    def propagate(F, i, cols):
        # F is a (S, 6, k) wrench map expressed in body i
        while i > 0:
            b = mech.body(i)
            Y[:, offs[i - 1]:offs[i - 1] + b.joint.ndof, cols] += np.transpose(kin.S[i], (0, 2, 1)) @ F
            F = np.transpose(kin.X[i], (0, 2, 1)) @ F
            i = b.parent

    for i in range(1, mech.n_bodies + 1):
        propagate(_body_regressor(kin.v[i], kin.a[i]), i, slice(10 * (i - 1), 10 * i))
    for k, i in enumerate(rotors):
        r = mech.body(i).rotor
        col = 10 * mech.n_bodies + k
        Fm = _body_regressor(kin.v_rotor[i], kin.a_rotor[i]) @ r.unit_params
        Y[:, offs[i - 1], col] += r.gear_ratio * (Fm @ r.phi)
        p = mech.parent(i)
        if p > 0:
            propagate((Fm @ r.placement.matrix)[:, :, None], p, slice(col, col + 1))
    return Y


def inverse_dynamics(mech: Mechanism, state: State, params, gravity: bool = True) -> np.ndarray:
    """Generalized forces ``(S, ndof)`` by recursive Newton-Euler."""
    params = np.asarray(params, dtype=float)
    if params.shape != (mech.n_params,):
        raise ValueError(f"expected {mech.n_params} parameters, got {params.shape}")
    kin = kinematics(mech, state, gravity)
    n_s = state.n_samples
    offs = mech.dof_offsets
    f = [np.zeros((n_s, 6)) for _ in range(mech.n_bodies + 1)]
    for i in range(1, mech.n_bodies + 1):
        I = wedge(params[10 * (i - 1):10 * i])
        v = kin.v[i]
        f[i] = kin.a[i] @ I.T + np.einsum("sij,sj->si", _crf(v), v @ I.T)
    rotor_torque = {}
    for k, i in enumerate(mech.rotor_bodies):
        r = mech.body(i).rotor
        Im = params[10 * mech.n_bodies + k] * wedge(r.unit_params)
        vm, am = kin.v_rotor[i], kin.a_rotor[i]
        fm = am @ Im.T + _mv(_crf(vm), vm @ Im.T)
        rotor_torque[i] = r.gear_ratio * (fm @ r.phi)
        p = mech.parent(i)
        f[p] = f[p] + fm @ r.placement.matrix
    tau = np.zeros((n_s, mech.ndof))
    for i in range(mech.n_bodies, 0, -1):
        b = mech.body(i)
        tau[:, offs[i - 1]:offs[i - 1] + b.joint.ndof] = _mtv(kin.S[i], f[i])
        if i in rotor_torque:
            tau[:, offs[i - 1]] += rotor_torque[i]
        f[b.parent] = f[b.parent] + _mtv(kin.X[i], f[i])
    return tau


def mass_matrix(mech: Mechanism, q, params) -> np.ndarray:
    """Joint-space inertia matrix at a single configuration (composite bodies)."""
    q = np.asarray(q, dtype=float).reshape(1, -1)
    zeros = np.zeros_like(q)
    params = np.asarray(params, dtype=float)
    kin = kinematics(mech, State(q, zeros, zeros), gravity=False)
    offs = mech.dof_offsets
    N = mech.n_bodies
    Ic = [None] + [wedge(params[10 * k:10 * k + 10]) for k in range(N)]
    H = np.zeros((mech.ndof, mech.ndof))
    rotor_slot = {i: 10 * N + k for k, i in enumerate(mech.rotor_bodies)}
    X = [None] + [x[0] for x in kin.X[1:]]
    S = [None] + [s[0] for s in kin.S[1:]]
    for i in rotor_slot:
        r = mech.body(i).rotor
        Im = params[rotor_slot[i]] * wedge(r.unit_params)
        Xm = r.placement.matrix
        p = mech.parent(i)
        if p > 0:
            Ic[p] = Ic[p] + Xm.T @ Im @ Xm
    for i in range(N, 0, -1):
        b = mech.body(i)
        p = b.parent
        if p > 0:
            Ic[p] = Ic[p] + X[i].T @ Ic[i] @ X[i]
    for i in range(N, 0, -1):
        b = mech.body(i)
        si = slice(offs[i - 1], offs[i - 1] + b.joint.ndof)
        F = Ic[i] @ S[i]
        H[si, si] = S[i].T @ F
        j = i
        while mech.parent(j) > 0:
            F = X[j].T @ F
            j = mech.parent(j)
            sj = slice(offs[j - 1], offs[j - 1] + mech.body(j).joint.ndof)
            H[sj, si] = S[j].T @ F
            H[si, sj] = H[sj, si].T
        if i in rotor_slot:
            r = mech.body(i).rotor
            Im = params[rotor_slot[i]] * wedge(r.unit_params)
            n = r.gear_ratio
            H[si, si] += n * n * (r.phi @ Im @ r.phi)
            F = (Im @ r.phi * n)[:, None]
            j = b.parent
            if j > 0:
                F = r.placement.matrix.T @ F
                while j > 0:
                    sj = slice(offs[j - 1], offs[j - 1] + mech.body(j).joint.ndof)
                    H[sj, si] += S[j].T @ F
                    H[si, sj] = H[sj, si].T
                    F = X[j].T @ F
                    j = mech.parent(j)
    return H


def world_transforms(mech: Mechanism, q: np.ndarray) -> list:
    """World-to-body transforms ``(S, 6, 6)`` for every body (index 0 is the base)."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    offs = mech.dof_offsets
    out = [np.broadcast_to(np.eye(6), (q.shape[0], 6, 6))]
    for i, b in enumerate(mech.bodies, start=1):
        XJ = b.joint.transform_batch(q[:, offs[i - 1]:offs[i - 1] + b.joint.ndof]) @ b.placement.matrix
        out.append(XJ @ out[b.parent])
    return out


def kinetic_energy(mech: Mechanism, state: State, params) -> np.ndarray:
    kin = kinematics(mech, state, gravity=False)
    params = np.asarray(params, dtype=float)
    T = np.zeros(state.n_samples)
    for i in range(1, mech.n_bodies + 1):
        I = wedge(params[10 * (i - 1):10 * i])
        T += 0.5 * np.einsum("si,ij,sj->s", kin.v[i], I, kin.v[i])
    for k, i in enumerate(mech.rotor_bodies):
        Im = params[10 * mech.n_bodies + k] * wedge(mech.body(i).rotor.unit_params)
        T += 0.5 * np.einsum("si,ij,sj->s", kin.v_rotor[i], Im, kin.v_rotor[i])
    return T


def potential_energy(mech: Mechanism, q, params) -> np.ndarray:
    """Gravitational potential; symmetric rotors carry no free gravity term."""
    params = np.asarray(params, dtype=float)
    Xw = world_transforms(mech, q)
    V = np.zeros(Xw[0].shape[0])
    g = mech.gravity
    for i in range(1, mech.n_bodies + 1):
        X = Xw[i]
        E = X[:, :3, :3]
        # origin of body i in world coordinates, from the -E skew(r) block
        Sk = -np.transpose(E, (0, 2, 1)) @ X[:, 3:, :3]
        r = np.stack((Sk[:, 2, 1], Sk[:, 0, 2], Sk[:, 1, 0]), axis=1)
        m, h = params[10 * (i - 1)], params[10 * (i - 1) + 1:10 * (i - 1) + 4]
        V -= m * (r @ g) + _mtv(E, np.tile(h, (X.shape[0], 1))) @ g
    return V


def energy_rows(mech: Mechanism, state: State, gravity: bool = True) -> np.ndarray:
    """Kinetic-energy and gravity-power rows, ``(S, 2, n_params)``."""
    kin = kinematics(mech, state, gravity=False)
    n_s = state.n_samples
    rows = np.zeros((n_s, 2, mech.n_params))
    Xw = world_transforms(mech, state.q) if gravity else None
    for i in range(1, mech.n_bodies + 1):
        cols = slice(10 * (i - 1), 10 * i)
        v = kin.v[i]
        rows[:, 0, cols] = 0.5 * np.einsum("si,sij->sj", v, momentum_map_batch(v))
        if gravity:
            g_body = _mv(Xw[i], np.tile(mech.gravity_motion, (n_s, 1)))
            rows[:, 1, cols] = np.einsum("si,sij->sj", v, momentum_map_batch(g_body))
    for k, i in enumerate(mech.rotor_bodies):
        vm = kin.v_rotor[i]
        rows[:, 0, 10 * mech.n_bodies + k] = 0.5 * np.einsum(
            "si,sij,j->s", vm, momentum_map_batch(vm), mech.body(i).rotor.unit_params)
    return rows


def sample_states(mech: Mechanism, n_samples: int, seed: int = DEFAULT_SEED,
                  static: bool = False) -> State:
    """Uniform angles in [-pi, pi], displacements in [-1, 1], normal rates."""
    rng = np.random.default_rng(seed)
    lo, hi = [], []
    for b in mech.bodies:
        for k in range(b.joint.ndof):
            lim = np.pi if b.joint.mode_is_rotational(k) else 1.0
            lo.append(-lim)
            hi.append(lim)
    q = rng.uniform(lo, hi, size=(n_samples, mech.ndof))
    qd = rng.standard_normal((n_samples, mech.ndof))
    qdd = rng.standard_normal((n_samples, mech.ndof))
    if static:
        qd[:] = 0.0
        qdd[:] = 0.0
    return State(q, qd, qdd)


def stacked_regressor(mech: Mechanism, n_samples: int, seed: int = DEFAULT_SEED,
                      mode: str = "torque", gravity: bool = True) -> np.ndarray:
    """Rows of the chosen regressor stacked over random samples."""
    if n_samples < 10 * mech.n_bodies:
        raise ValueError(f"need at least {10 * mech.n_bodies} samples, got {n_samples}")
    if mode == "torque":
        Y = regressor_Y(mech, sample_states(mech, n_samples, seed), gravity)
    elif mode == "static":
        if not gravity or not np.any(mech.gravity):
            raise ValueError("static mode needs gravity")
        Y = regressor_Y(mech, sample_states(mech, n_samples, seed, static=True), True)
    elif mode == "energy":
        Y = energy_rows(mech, sample_states(mech, n_samples, seed), gravity)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Y.reshape(-1, mech.n_params)


def equilibrate(Y: np.ndarray):
    """Scale columns of ``Y`` to unit norm.

    Columns whose norm is round-off relative to the largest column are
    zeroed. Returns the scaled matrix and the per-column factors ``d`` with
    ``Y_scaled = Y * d``.
    """
    norms = np.linalg.norm(Y, axis=0)
    top = norms.max() if norms.size else 0.0
    d = np.zeros_like(norms)
    keep = norms > COLUMN_FLOOR * max(top, 1.0)
    d[keep] = 1.0 / norms[keep]
    return Y * d, d


def singular_values(Y: np.ndarray, scaled: bool = True) -> np.ndarray:
    if scaled:
        Y, _ = equilibrate(Y)
    return np.linalg.svd(Y, compute_uv=False)


def significant_count(s: np.ndarray, tol: float = NULL_TOL) -> int:
    if s.size == 0 or s[0] == 0:
        return 0
    return int(np.sum(s >= tol * s[0]))


def nullspace_of(Y: np.ndarray, tol: float = NULL_TOL) -> np.ndarray:
    """Orthonormal nullspace basis from right singular vectors with
    ``sigma < tol * sigma_max`` of the column-equilibrated matrix."""
    n = Y.shape[1]
    Ys, d = equilibrate(Y)
    if Ys.shape[0] < n:
        Ys = np.vstack((Ys, np.zeros((n - Ys.shape[0], n))))
    _, s, Vt = np.linalg.svd(Ys, full_matrices=False)
    Z = Vt[significant_count(s, tol):].T
    if Z.shape[1] == 0:
        return Z
    # undo the scaling; zeroed columns are free directions
    Z = Z * np.where(d > 0, d, 1.0)[:, None]
    Q, _ = np.linalg.qr(Z)
    return Q


def empirical_nullspace(mech: Mechanism, n_samples: int = 2000, seed: int = DEFAULT_SEED,
                        mode: str = "torque", gravity: bool = True, tol: float = NULL_TOL) -> np.ndarray:
    return nullspace_of(stacked_regressor(mech, n_samples, seed, mode, gravity), tol)


def compare_subspaces(B1: np.ndarray, B2: np.ndarray) -> float:
    """Largest principal angle between two subspaces of equal dimension."""
    B1, B2 = np.atleast_2d(B1), np.atleast_2d(B2)
    if B1.shape[0] != B2.shape[0]:
        raise ValueError(f"ambient dimensions differ: {B1.shape[0]} vs {B2.shape[0]}")
    if B1.shape[1] != B2.shape[1]:
        raise ValueError(f"subspace dimensions differ: {B1.shape[1]} vs {B2.shape[1]}")
    if B1.shape[1] == 0:
        return 0.0
    return float(np.max(subspace_angles(B1, B2)))


@dataclass(frozen=True)
class Certificate:
    """Outcome of checking a structural nullspace basis against samples."""

    angle: float
    structural_nullity: int
    empirical_nullity: int
    tol: float
    missing: np.ndarray
    spurious: np.ndarray

    @property
    def passed(self) -> bool:
        return self.structural_nullity == self.empirical_nullity and self.angle < self.tol


def _excess(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # direction of range(A) farthest from range(B)
    if A.shape[1] == 0:
        return np.zeros(A.shape[0])
    resid = A - B @ (B.T @ A) if B.shape[1] else A
    U, s, _ = np.linalg.svd(resid, full_matrices=False)
    return U[:, 0] * s[0]


def certify(mech: Mechanism, R: np.ndarray, n_samples: int = 2000, seed: int = DEFAULT_SEED,
            mode: str = "torque", gravity: bool = True, tol: float = 1e-7,
            null_tol: float = NULL_TOL) -> Certificate:
    """Compare ``range(R)`` with the nullspace of the stacked regressor.

    ``missing`` is the empirical null direction worst covered by ``R`` and
    ``spurious`` the direction of ``R`` the samples excite most; each is
    scaled by how far it lies outside the other subspace.
    """
    E = empirical_nullspace(mech, n_samples, seed, mode, gravity, null_tol)
    if R.shape[1]:
        U, s, _ = np.linalg.svd(R, full_matrices=False)
        Rq = U[:, s > 1e-10 * s[0]]
    else:
        Rq = R
    if Rq.shape[1] == E.shape[1]:
        angle = compare_subspaces(Rq, E)
    else:
        angle = float(np.pi / 2)
    return Certificate(angle, Rq.shape[1], E.shape[1], tol, _excess(E, Rq), _excess(Rq, E))
