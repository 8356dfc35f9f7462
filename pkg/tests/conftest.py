from dataclasses import replace

import numpy as np
import pytest

from rpna.model import BodySpec, Joint, Mechanism, Rotor
from rpna.spatial import SpatialTransform


def with_coaxial_rotors(mech, ratio, inertia=1e-3):
    """Put a rotor on every 1-DoF joint, coaxial with it and carried by the predecessor."""
    bodies = []
    for b in mech.bodies:
        if b.joint.ndof == 1 and b.joint.kind == "revolute":
            b = replace(b, rotor=Rotor(ratio, b.placement, b.joint.axis, inertia))
        bodies.append(b)
    return replace(mech, bodies=tuple(bodies))


def floating_pair(ratio, rotor_offset=(0.0, 0.0, 0.0), rotor_axis=(0, 0, 1), gravity=(0, 0, -9.81)):
    """Floating body carrying a revolute child and a rotor geared to that joint."""
    joint_place = SpatialTransform.from_rpy_xyz((0.3, -0.2, 0.1), (0.4, 0.1, -0.2))
    rotor_place = SpatialTransform(joint_place.rotation, joint_place.translation + np.asarray(rotor_offset))
    rng = np.random.default_rng(5)
    params = [np.concatenate(([1.0 + k], rng.normal(size=3) * 0.1, [1, 0, 0, 1, 0, 1])) for k in range(2)]
    return Mechanism((
        BodySpec("base", 0, SpatialTransform.identity(), Joint.floating(), params[0]),
        BodySpec("arm", 1, joint_place, Joint.revolute(), params[1],
                 Rotor(ratio, rotor_place, rotor_axis, inertia=2e-3)),
    ), gravity=gravity, base_kind="floating")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
