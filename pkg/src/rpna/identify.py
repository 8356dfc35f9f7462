"""Least-squares identification on synthetic trajectories.

Reproduces the fixed-base versus floating-base experiment: identify from one
data set, validate on another, and report per-channel RMS residuals.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .model import Mechanism
from .nullspace import build
from .recursion import RpnaOptions
from .regressor import NULL_TOL, State, equilibrate, inverse_dynamics, regressor_Y

SAMPLE_RATE = 100.0
MAX_FREQ = 2.0
N_SINES = 3


@dataclass(frozen=True)
class Trajectory:
    mech: Mechanism
    state: State
    tau: np.ndarray
    params: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.state.n_samples


@dataclass(frozen=True)
class Estimate:
    params: np.ndarray
    labels: tuple
    rank: int
    threshold: float


def _sines(rng, n_dof, n_samples, amplitude_max, rate):
    t = np.arange(n_samples) / rate
    amp = rng.uniform(0.0, amplitude_max, (N_SINES, n_dof))
    freq = rng.uniform(0.1, MAX_FREQ, (N_SINES, n_dof))
    phase = rng.uniform(0.0, 2 * np.pi, (N_SINES, n_dof))
    w = 2 * np.pi * freq
    arg = w[None] * t[:, None, None] + phase[None]
    q = np.sum(amp * np.sin(arg), axis=1)
    qd = np.sum(amp * w * np.cos(arg), axis=1)
    qdd = -np.sum(amp * w * w * np.sin(arg), axis=1)
    return q, qd, qdd


def synth_trajectory(mech: Mechanism, params, n_samples: int = 500, seed: int = 0,
                     amplitude_max: float = 1.0, rate: float = SAMPLE_RATE) -> Trajectory:
    """Sum-of-sines motion with torques from inverse dynamics.

    For a floating-base mechanism the signals of the non-base joints are
    identical to those generated for the corresponding fixed-base mechanism
    with the same seed; the base motion comes from an independent stream.
    """
    params = np.asarray(params, dtype=float)
    root_dof = mech.bodies[0].joint.ndof if mech.base_kind == "floating" else 0
    seq = np.random.SeedSequence(seed)
    joint_seq, base_seq = seq.spawn(2)
    parts = _sines(np.random.default_rng(joint_seq), mech.ndof - root_dof, n_samples, amplitude_max, rate)
    if root_dof:
        base = _sines(np.random.default_rng(base_seq), root_dof, n_samples, amplitude_max, rate)
        parts = tuple(np.hstack((b, p)) for b, p in zip(base, parts))
    state = State(*parts)
    tau = inverse_dynamics(mech, state, params)
    prov = {"generator": "sum_of_sines", "seed": seed, "n_samples": n_samples,
            "amplitude_max": amplitude_max, "max_frequency_hz": MAX_FREQ, "rate_hz": rate}
    return Trajectory(mech, state, tau, params, prov)


def fit(traj: Trajectory, tol: float = NULL_TOL) -> Estimate:
    """Minimum-norm least-squares parameters from a noiseless trajectory."""
    mech = traj.mech
    Y = regressor_Y(mech, traj.state).reshape(-1, mech.n_params)
    y = traj.tau.reshape(-1)
    # detect the rank on equilibrated columns, then take the minimum-norm
    # point inside the row space of the unscaled regressor
    Ys, d = equilibrate(Y)
    _, s, Vt = np.linalg.svd(Ys, full_matrices=False)
    r = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    if r:
        Q, _ = np.linalg.qr((Vt[:r] / np.where(d > 0, d, 1.0)).T)
        x = Q @ np.linalg.lstsq(Y @ Q, y, rcond=None)[0]
    else:
        x = np.zeros(mech.n_params)
    structural = build(mech, RpnaOptions(include_rotors=bool(mech.rotor_bodies))).base_param_count
    if r < structural:
        warnings.warn(f"data excite only {r} of {structural} identifiable directions", RuntimeWarning)
    return Estimate(x, tuple(mech.param_labels()), r, tol)


def _map_params(estimate: Estimate, target: Mechanism, fallback: np.ndarray) -> np.ndarray:
    by_label = dict(zip(estimate.labels, estimate.params))
    return np.array([by_label.get(lbl, fb) for lbl, fb in zip(target.param_labels(), fallback)])


def channel_names(mech: Mechanism) -> list:
    names = []
    for b in mech.bodies:
        if b.joint.kind == "floating":
            names += [f"{b.name}_{c}" for c in ("nx", "ny", "nz", "fx", "fy", "fz")]
        elif b.joint.ndof == 1:
            names.append(b.name)
        else:
            names += [f"{b.name}_{k}" for k in range(b.joint.ndof)]
    return names


def _wrench_channels(mech: Mechanism, state: State, resid: np.ndarray) -> np.ndarray:
    # express floating-joint residuals as the body wrench rather than forces
    # conjugate to the exponential coordinates
    out = resid.copy()
    offs = mech.dof_offsets
    for i, b in enumerate(mech.bodies, start=1):
        if b.joint.kind != "floating":
            continue
        sl = slice(offs[i - 1], offs[i - 1] + 6)
        S = b.joint.mode_columns_batch(state.q[:, sl])
        out[:, sl] = np.linalg.solve(np.transpose(S, (0, 2, 1)), resid[:, sl][..., None])[..., 0]
    return out


def cross_validate(estimate: Estimate, traj: Trajectory, grouping=None) -> dict:
    """RMS residual per channel of ``traj`` under the estimated parameters.

    Parameters are matched by label; any missing from the estimate (a base
    body absent from a fixed-base fit) take their true values. ``grouping``
    maps group names to channel lists; the default splits a floating base
    into body torques and body forces and the rest into joint torques.
    """
    mech = traj.mech
    params = _map_params(estimate, mech, traj.params)
    pred = regressor_Y(mech, traj.state) @ params
    resid = _wrench_channels(mech, traj.state, traj.tau - pred)
    names = channel_names(mech)
    rms = np.sqrt(np.mean(resid ** 2, axis=0))
    channels = dict(zip(names, rms.tolist()))
    if grouping is None:
        grouping = default_grouping(mech)
    groups = {g: [channels[c] for c in chans] for g, chans in grouping.items()}
    return {"channels": channels, "groups": groups}


def default_grouping(mech: Mechanism) -> dict:
    names = channel_names(mech)
    groups = {"leg_torques": [], "body_torques": [], "body_forces": []}
    for name in names:
        if name.endswith(("_nx", "_ny", "_nz")) and mech.bodies[0].joint.kind == "floating" \
                and name.startswith(mech.bodies[0].name):
            groups["body_torques"].append(name)
        elif name.endswith(("_fx", "_fy", "_fz")) and mech.bodies[0].joint.kind == "floating" \
                and name.startswith(mech.bodies[0].name):
            groups["body_forces"].append(name)
        else:
            groups["leg_torques"].append(name)
    return groups


def fixed_floating_experiment(fixed: Mechanism, floating: Mechanism, n_samples: int = 600,
                              seed: int = 0) -> dict:
    """Identify on fixed- and floating-base data; validate each on both.

    Training and validation use different seeds. The floating-base sets
    reuse the fixed-base joint signals of the same seed plus base motion.
    """
    truth_fixed = fixed.nominal_params()
    truth_float = floating.nominal_params()
    data = {
        ("fixed", "train"): synth_trajectory(fixed, truth_fixed, n_samples, seed),
        ("floating", "train"): synth_trajectory(floating, truth_float, n_samples, seed),
        ("fixed", "validate"): synth_trajectory(fixed, truth_fixed, n_samples, seed + 1),
        ("floating", "validate"): synth_trajectory(floating, truth_float, n_samples, seed + 1),
    }
    out = {}
    for experiment in ("fixed", "floating"):
        est = fit(data[(experiment, "train")])
        for validation in ("fixed", "floating"):
            out[(experiment, validation)] = cross_validate(est, data[(validation, "validate")])
    return out
