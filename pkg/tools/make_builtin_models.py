"""Regenerate the bundled JSON models in src/rpna/models.

Nominal inertial parameters are physically consistent values drawn from a
fixed seed; the identifiability results depend only on geometry.
"""

import json
import warnings
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

OUT = Path(__file__).resolve().parents[1] / "src" / "rpna" / "models"


def body_params(rng, mass_range=(1.0, 10.0), com_scale=0.1):
    m = rng.uniform(*mass_range)
    c = rng.uniform(-com_scale, com_scale, 3)
    # principal moments satisfying the triangle inequality
    d = rng.uniform(0.02, 0.2, 3) * m * com_scale
    d[2] = min(d[2], d[0] + d[1] - 1e-3 * m * com_scale)
    R = Rotation.random(random_state=rng.integers(1 << 31)).as_matrix()
    Ic = R @ np.diag(d) @ R.T
    I = Ic + m * (np.dot(c, c) * np.eye(3) - np.outer(c, c))
    h = m * c
    return [round(float(v), 6) for v in
            (m, *h, I[0, 0], I[0, 1], I[0, 2], I[1, 1], I[1, 2], I[2, 2])]


def modified_dh(alpha, a, d):
    return {"rpy": [alpha, 0.0, 0.0], "xyz": [a, -d * np.sin(alpha), d * np.cos(alpha)]}


def rotor(frame, ratio, inertia, axis=(0.0, 0.0, 1.0)):
    return {"gear_ratio": ratio, "axis": list(axis), "xyz": frame["xyz"], "rpy": frame["rpy"],
            "Izz": inertia, "symmetric": True}


def write(name, model):
    model = {"format": 1, "name": name, **model}
    (OUT / f"{name}.json").write_text(json.dumps(model, indent=2) + "\n")


def puma560(rng):
    deg = np.pi / 180
    alpha = [0, -90 * deg, 0, -90 * deg, 90 * deg, -90 * deg]
    a = [0, 0, 0.4318, 0.0203, 0, 0]
    d = [0, 0, 0.15005, 0.4318, 0, 0]
    ratios = [62.6, 107.8, 53.7, 76.0, 71.9, 76.7]
    bodies = []
    for i in range(6):
        frame = modified_dh(alpha[i], a[i], d[i])
        bodies.append({
            "name": f"link{i + 1}", "parent": i, "X": frame,
            "joint": {"type": "revolute", "axis": [0.0, 0.0, 1.0]},
            "params": body_params(rng),
            "rotor": rotor(frame, ratios[i], round(float(rng.uniform(1e-4, 4e-4)), 7)),
        })
    return {"description": "PUMA 560, Craig modified DH geometry, rotors coaxial with their joints",
            "gravity": [0.0, 0.0, -9.81], "base": "fixed", "bodies": bodies}


def scara(rng):
    frames = [{"rpy": [0, 0, 0], "xyz": [0, 0, 0.4]},
              {"rpy": [0, 0, 0], "xyz": [0.325, 0, 0]},
              {"rpy": [0, 0, 0], "xyz": [0.225, 0, 0]},
              {"rpy": [0, 0, 0], "xyz": [0, 0, 0]}]
    kinds = ["revolute", "revolute", "prismatic", "revolute"]
    ratios = [80.0, 50.0, 60.0, 40.0]
    bodies = []
    for i in range(4):
        bodies.append({
            "name": f"link{i + 1}", "parent": i, "X": frames[i],
            "joint": {"type": kinds[i], "axis": [0.0, 0.0, 1.0]},
            "params": body_params(rng),
            "rotor": rotor(frames[i], ratios[i], round(float(rng.uniform(1e-4, 4e-4)), 7)),
        })
    return {"description": "RRPR SCARA; all joints act along local z, parallel to gravity",
            "gravity": [0.0, 0.0, -9.81], "base": "fixed", "bodies": bodies}


def cheetah_leg(rng):
    # every joint spins about its local z; abad x points down, hip and knee x run along the link
    down, fwd, side = [0.0, 0, -1], [1.0, 0, 0], [0, 1.0, 0]
    abad = np.column_stack((down, side, fwd))
    leg = np.column_stack((down, np.cross(side, down), side))
    orient = [abad, abad.T @ leg, np.eye(3)]
    offsets = [[0, 0, 0], [0, 0.1, 0], [0.21, 0, 0]]
    frames = [{"rpy": [round(float(a), 12) for a in Rotation.from_matrix(R).as_euler("xyz")], "xyz": o}
              for R, o in zip(orient, offsets)]
    ratios = [7.67, 7.67, 10.6]
    names = ["abad", "hip", "knee"]
    bodies = []
    for i in range(3):
        bodies.append({
            "name": names[i], "parent": i, "X": frames[i],
            "joint": {"type": "revolute", "axis": [0.0, 0.0, 1.0]},
            "params": body_params(rng, (0.5, 2.5), 0.08),
            "rotor": rotor(frames[i], ratios[i], round(float(rng.uniform(3e-4, 8e-4)), 7)),
        })
    return {"description": ("Quadruped leg: ab/ad about the forward axis, hip and knee about the "
                            "lateral axis, each joint along its local z. Link lengths (0.1 m hip "
                            "offset, 0.21 m links) are representative; the identifiability "
                            "results depend only on the axis relations."),
            "gravity": [0.0, 0.0, -9.81], "base": "fixed", "bodies": bodies}


def two_link(rng, perpendicular):
    length = 1.0
    second = {"rpy": [np.pi / 2 if perpendicular else 0.0, 0, 0], "xyz": [length, 0, 0]}
    return {"description": "Two-link arm with " + ("perpendicular" if perpendicular else "parallel") + " joint axes",
            "gravity": [0.0, 0.0, -9.81], "base": "fixed",
            "bodies": [
                {"name": "link1", "parent": 0, "X": {"rpy": [0, 0, 0], "xyz": [0, 0, 0]},
                 "joint": {"type": "revolute", "axis": [0.0, 0.0, 1.0]}, "params": body_params(rng)},
                {"name": "link2", "parent": 1, "X": second,
                 "joint": {"type": "revolute", "axis": [0.0, 0.0, 1.0]}, "params": body_params(rng)},
            ]}


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(560)
    write("puma560", puma560(rng))
    write("scara", scara(rng))
    with warnings.catch_warnings():
        # the abad frame sits at pitch 90 deg; the angles still reproduce the matrix
        warnings.simplefilter("ignore")
        write("cheetah3_leg_fixed", cheetah_leg(rng))
    write("rr_parallel", two_link(rng, False))
    write("rr_perpendicular", two_link(rng, True))


if __name__ == "__main__":
    main()
