"""Mechanism description: kinematic trees, joints, geared rotors and loaders."""

from __future__ import annotations

import json
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from .spatial import (
    PARAM_NAMES,
    SpatialTransform,
    cross_motion,
    joint_transform_batch,
    param_transform,
)

FORMAT_VERSION = 1
DEFAULT_GRAVITY = (0.0, 0.0, -9.81)

SINGLE_DOF_KINDS = ("revolute", "prismatic", "screw")
MULTI_DOF_KINDS = ("spherical", "planar", "cylindrical", "floating", "multi")


class ModelError(ValueError):
    """Invalid or unsupported mechanism description."""


class UnsupportedFeature(ModelError):
    """The input uses a feature outside the supported subset."""


def _unit(v, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float).reshape(3)
    n = np.linalg.norm(v)
    if not np.isfinite(n) or n < 1e-12:
        raise ModelError(f"{what}: axis must be a nonzero finite 3-vector")
    return v / n


@dataclass(frozen=True)
class Joint:
    """Joint with free modes ``modes`` (6 x n, columns in declaration order).

    Multi-DoF configurations are products of exponentials applied in the
    declared mode order; the modes must span a subalgebra (closed under the
    spatial cross product) so that the relative velocity stays in their span.
    """

    kind: str
    modes: np.ndarray
    axis: Optional[np.ndarray] = None
    pitch: float = 0.0

    def __post_init__(self):
        modes = np.array(self.modes, dtype=float).reshape(6, -1)
        modes.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        n = modes.shape[1]
        if not 1 <= n <= 6 or np.linalg.matrix_rank(modes, tol=1e-9) != n:
            raise ModelError(f"{self.kind} joint: free modes must be 1..6 independent columns")
        if self.kind == "floating" and n != 6:
            raise ModelError("floating joint must have 6 free modes")
        if n > 1 and not _closed_under_cross(modes):
            raise ModelError(
                f"{self.kind} joint: modes are not closed under the spatial cross product")

    @classmethod
    def revolute(cls, axis=(0, 0, 1)) -> "Joint":
        a = _unit(axis, "revolute joint")
        return cls("revolute", np.concatenate((a, np.zeros(3))), axis=a)

    @classmethod
    def prismatic(cls, axis=(0, 0, 1)) -> "Joint":
        a = _unit(axis, "prismatic joint")
        return cls("prismatic", np.concatenate((np.zeros(3), a)), axis=a)

    @classmethod
    def screw(cls, axis=(0, 0, 1), pitch: float = 0.0) -> "Joint":
        a = _unit(axis, "screw joint")
        return cls("screw", np.concatenate((a, pitch * a)), axis=a, pitch=float(pitch))

    @classmethod
    def spherical(cls) -> "Joint":
        return cls("spherical", np.eye(6)[:, :3])

    @classmethod
    def planar(cls) -> "Joint":
        # rotation about z with translation in the xy plane
        return cls("planar", np.eye(6)[:, [2, 3, 4]])

    @classmethod
    def cylindrical(cls, axis=(0, 0, 1)) -> "Joint":
        a = _unit(axis, "cylindrical joint")
        modes = np.zeros((6, 2))
        modes[:3, 0] = a
        modes[3:, 1] = a
        return cls("cylindrical", modes, axis=a)

    @classmethod
    def floating(cls) -> "Joint":
        return cls("floating", np.eye(6))

    @classmethod
    def multi(cls, modes) -> "Joint":
        modes = np.asarray(modes, dtype=float)
        if modes.ndim != 2 or modes.shape[1] != 6:
            raise ModelError("multi joint: modes must be a list of 6-vectors")
        return cls("multi", modes.T)

    @property
    def ndof(self) -> int:
        return self.modes.shape[1]

    def mode_is_rotational(self, k: int) -> bool:
        return bool(np.linalg.norm(self.modes[:3, k]) > 1e-12)

    def transform_batch(self, q: np.ndarray) -> np.ndarray:
        """Joint transforms for ``q`` of shape ``(S, ndof)``; returns ``(S, 6, 6)``."""
        q = np.asarray(q, dtype=float).reshape(-1, self.ndof)
        X = joint_transform_batch(q[:, 0], self.modes[:, 0])
        for k in range(1, self.ndof):
            X = joint_transform_batch(q[:, k], self.modes[:, k]) @ X
        return X

    def mode_columns_batch(self, q: np.ndarray) -> np.ndarray:
        """Columns ``s_k`` mapping ``qdot`` to relative velocity, shape ``(S, 6, ndof)``."""
        q = np.asarray(q, dtype=float).reshape(-1, self.ndof)
        n = self.ndof
        out = np.empty((q.shape[0], 6, n))
        out[:, :, n - 1] = self.modes[:, n - 1]
        acc = np.broadcast_to(np.eye(6), (q.shape[0], 6, 6)).copy()
        for k in range(n - 2, -1, -1):
            acc = acc @ joint_transform_batch(q[:, k + 1], self.modes[:, k + 1])
            out[:, :, k] = acc @ self.modes[:, k]
        return out

    def to_dict(self) -> dict:
        if self.kind in ("revolute", "prismatic", "cylindrical"):
            return {"type": self.kind, "axis": self.axis.tolist()}
        if self.kind == "screw":
            return {"type": "screw", "axis": self.axis.tolist(), "pitch": self.pitch}
        if self.kind == "multi":
            return {"type": "multi", "modes": self.modes.T.tolist()}
        return {"type": self.kind}


def _closed_under_cross(modes: np.ndarray) -> bool:
    basis, _ = np.linalg.qr(modes)
    proj = np.eye(6) - basis @ basis.T
    for a in range(modes.shape[1]):
        for b in range(a + 1, modes.shape[1]):
            if np.linalg.norm(proj @ cross_motion(modes[:, a]) @ modes[:, b]) > 1e-9:
                return False
    return True


def rotor_unit_params(axis) -> np.ndarray:
    """Parameters of a unit-inertia symmetric rotor about ``axis`` through the origin."""
    a = np.asarray(axis, dtype=float)
    outer = np.outer(a, a)
    return np.array([0, 0, 0, 0, outer[0, 0], outer[0, 1], outer[0, 2],
                     outer[1, 1], outer[1, 2], outer[2, 2]], dtype=float)


@dataclass(frozen=True)
class Rotor:
    """Geared rotor carried by the predecessor of its joint.

    Its angle is ``gear_ratio * q``. Only the inertia about the spin axis
    (``inertia``) is a free parameter; the rest of its mass distribution is
    constant in the carrier frame and lumps into the carrier's parameters.
    """

    gear_ratio: float
    placement: SpatialTransform
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    inertia: float = 0.0
    symmetric: bool = True

    def __post_init__(self):
        if not np.isfinite(self.gear_ratio) or self.gear_ratio <= 0:
            raise ModelError("rotor gear_ratio must be positive")
        a = _unit(self.axis, "rotor")
        a.setflags(write=False)
        object.__setattr__(self, "axis", a)
        object.__setattr__(self, "gear_ratio", float(self.gear_ratio))
        object.__setattr__(self, "inertia", float(self.inertia))

    @property
    def phi(self) -> np.ndarray:
        return np.concatenate((self.axis, np.zeros(3)))

    @property
    def unit_params(self) -> np.ndarray:
        return rotor_unit_params(self.axis)

    def carrier_params(self) -> np.ndarray:
        """Unit rotor inertia expressed in the carrier (predecessor) frame."""
        return param_transform(self.placement) @ self.unit_params


@dataclass(frozen=True)
class BodySpec:
    name: str
    parent: int
    placement: SpatialTransform
    joint: Joint
    params: Optional[np.ndarray] = None
    rotor: Optional[Rotor] = None

    def __post_init__(self):
        if self.params is not None:
            p = np.array(self.params, dtype=float).reshape(-1)
            if p.shape != (10,) or not np.all(np.isfinite(p)):
                raise ModelError(f"body {self.name!r}: params must be 10 finite numbers")
            p.setflags(write=False)
            object.__setattr__(self, "params", p)


@dataclass(frozen=True)
class Mechanism:
    """Kinematic tree with bodies numbered 1..N (index 0 is the base)."""

    bodies: tuple
    gravity: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_GRAVITY))
    base_kind: str = "fixed"
    name: str = ""

    def __post_init__(self):
        bodies = tuple(self.bodies)
        object.__setattr__(self, "bodies", bodies)
        g = np.array(self.gravity, dtype=float).reshape(3)
        g.setflags(write=False)
        object.__setattr__(self, "gravity", g)
        if not bodies:
            raise ModelError("mechanism has no bodies")
        if self.base_kind not in ("fixed", "floating"):
            raise ModelError(f"base must be 'fixed' or 'floating', got {self.base_kind!r}")
        roots = 0
        for i, b in enumerate(bodies, start=1):
            if not 0 <= b.parent < i:
                raise ModelError(
                    f"body {i} ({b.name!r}): parent {b.parent} violates topological order p(i) < i")
            roots += b.parent == 0
        if self.base_kind == "floating":
            if roots != 1:
                raise ModelError("floating-base mechanism must have exactly one root body")
            if bodies[0].joint.kind != "floating":
                raise ModelError("floating-base mechanism: body 1 must have a floating joint")
        names = [b.name for b in bodies]
        if len(set(names)) != len(names):
            raise ModelError("body names must be unique")

    @property
    def n_bodies(self) -> int:
        return len(self.bodies)

    @property
    def gravity_motion(self) -> np.ndarray:
        """Gravity as a spatial acceleration ``[0; g]``."""
        return np.concatenate((np.zeros(3), self.gravity))

    def parent(self, i: int) -> int:
        return self.bodies[i - 1].parent

    def body(self, i: int) -> BodySpec:
        return self.bodies[i - 1]

    def children(self, i: int) -> list:
        return [j for j in range(1, self.n_bodies + 1) if self.parent(j) == i]

    @property
    def rotor_bodies(self) -> list:
        """Bodies (1-based) whose joint drives a rotor, in body order."""
        return [i for i, b in enumerate(self.bodies, start=1) if b.rotor is not None]

    @property
    def dof_offsets(self) -> list:
        offs, n = [], 0
        for b in self.bodies:
            offs.append(n)
            n += b.joint.ndof
        return offs

    @property
    def ndof(self) -> int:
        return sum(b.joint.ndof for b in self.bodies)

    @property
    def n_params(self) -> int:
        return 10 * self.n_bodies + len(self.rotor_bodies)

    def param_labels(self) -> list:
        labels = [f"{name}_{b.name}" for b in self.bodies for name in PARAM_NAMES]
        labels += [f"Jm_{self.body(i).name}" for i in self.rotor_bodies]
        return labels

    def nominal_params(self) -> np.ndarray:
        """Body parameters followed by rotor inertias; needs params on every body."""
        parts = []
        for b in self.bodies:
            if b.params is None:
                raise ModelError(f"body {b.name!r} has no nominal params")
            parts.append(b.params)
        rotors = [self.body(i).rotor.inertia for i in self.rotor_bodies]
        return np.concatenate(parts + [np.asarray(rotors, dtype=float)])

    def without_rotors(self) -> "Mechanism":
        return replace(self, bodies=tuple(replace(b, rotor=None) for b in self.bodies))

    def with_gravity(self, gravity) -> "Mechanism":
        return replace(self, gravity=np.asarray(gravity, dtype=float))


# ---------------------------------------------------------------- JSON

def _rpy_of(rotation: np.ndarray) -> list:
    # placement rotation E maps parent to child coordinates; rpy describes E^T
    with warnings.catch_warnings():
        # at pitch +-90 deg scipy zeroes yaw; the angles still reproduce E
        warnings.simplefilter("ignore", UserWarning)
        return Rotation.from_matrix(rotation.T).as_euler("xyz").tolist()


def _vec(d: dict, key: str, n: int, where: str, default=None) -> np.ndarray:
    if key not in d:
        if default is None:
            raise ModelError(f"{where}: missing field {key!r}")
        return np.asarray(default, dtype=float)
    try:
        v = np.asarray(d[key], dtype=float).reshape(-1)
    except (TypeError, ValueError):
        raise ModelError(f"{where}: field {key!r} must be numeric") from None
    if v.shape != (n,) or not np.all(np.isfinite(v)):
        raise ModelError(f"{where}: field {key!r} must have {n} finite entries")
    return v


def _placement(d: Optional[dict], where: str) -> SpatialTransform:
    d = d or {}
    return SpatialTransform.from_rpy_xyz(
        _vec(d, "rpy", 3, where, (0, 0, 0)), _vec(d, "xyz", 3, where, (0, 0, 0)))


def joint_from_dict(d: dict, where: str) -> Joint:
    kind = d.get("type")
    if kind in ("revolute", "continuous"):
        return Joint.revolute(_vec(d, "axis", 3, where, (0, 0, 1)))
    if kind == "prismatic":
        return Joint.prismatic(_vec(d, "axis", 3, where, (0, 0, 1)))
    if kind == "screw":
        return Joint.screw(_vec(d, "axis", 3, where, (0, 0, 1)), float(d.get("pitch", 0.0)))
    if kind == "spherical":
        return Joint.spherical()
    if kind == "planar":
        return Joint.planar()
    if kind == "cylindrical":
        return Joint.cylindrical(_vec(d, "axis", 3, where, (0, 0, 1)))
    if kind == "floating":
        return Joint.floating()
    if kind == "multi":
        if "modes" not in d:
            raise ModelError(f"{where}: multi joint needs 'modes'")
        return Joint.multi(d["modes"])
    raise ModelError(f"{where}: unknown joint type {kind!r}")


def mechanism_from_dict(data: dict) -> Mechanism:
    if not isinstance(data, dict):
        raise ModelError("model file must contain a JSON object")
    if data.get("format") != FORMAT_VERSION:
        raise ModelError(f"unsupported or missing format version {data.get('format')!r}")
    if not isinstance(data.get("bodies"), list):
        raise ModelError("field 'bodies' must be a list")
    bodies = []
    for i, bd in enumerate(data["bodies"], start=1):
        where = f"body {i}"
        if not isinstance(bd, dict):
            raise ModelError(f"{where}: must be an object")
        name = str(bd.get("name", f"body{i}"))
        where = f"body {i} ({name!r})"
        parent = bd.get("parent")
        if not isinstance(parent, int):
            raise ModelError(f"{where}: field 'parent' must be an integer")
        if "joint" not in bd:
            raise ModelError(f"{where}: missing field 'joint'")
        joint = joint_from_dict(bd["joint"], f"{where} joint")
        params = _vec(bd, "params", 10, where) if "params" in bd else None
        rotor = None
        if bd.get("rotor") is not None:
            rd = bd["rotor"]
            rwhere = f"{where} rotor"
            if "gear_ratio" not in rd:
                raise ModelError(f"{rwhere}: missing field 'gear_ratio'")
            rotor = Rotor(
                gear_ratio=float(rd["gear_ratio"]),
                placement=_placement(rd, rwhere),
                axis=_vec(rd, "axis", 3, rwhere, (0, 0, 1)),
                inertia=float(rd.get("Izz", 0.0)),
                symmetric=bool(rd.get("symmetric", True)),
            )
        bodies.append(BodySpec(name, parent, _placement(bd.get("X"), where), joint, params, rotor))
    return Mechanism(
        tuple(bodies),
        gravity=_vec(data, "gravity", 3, "model", DEFAULT_GRAVITY),
        base_kind=data.get("base", "fixed"),
        name=str(data.get("name", "")),
    )


def mechanism_to_dict(mech: Mechanism) -> dict:
    bodies = []
    for b in mech.bodies:
        bd = {
            "name": b.name,
            "parent": b.parent,
            "X": {"rpy": _rpy_of(b.placement.rotation), "xyz": b.placement.translation.tolist()},
            "joint": b.joint.to_dict(),
        }
        if b.params is not None:
            bd["params"] = b.params.tolist()
        if b.rotor is not None:
            r = b.rotor
            bd["rotor"] = {
                "gear_ratio": r.gear_ratio,
                "axis": r.axis.tolist(),
                "xyz": r.placement.translation.tolist(),
                "rpy": _rpy_of(r.placement.rotation),
                "Izz": r.inertia,
                "symmetric": r.symmetric,
            }
        bodies.append(bd)
    out = {"format": FORMAT_VERSION}
    if mech.name:
        out["name"] = mech.name
    out.update({"gravity": mech.gravity.tolist(), "base": mech.base_kind, "bodies": bodies})
    return out


def load_json(path) -> Mechanism:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return mechanism_from_dict(data)


def save_json(mech: Mechanism, path) -> None:
    Path(path).write_text(json.dumps(mechanism_to_dict(mech), indent=2) + "\n")


# ---------------------------------------------------------------- URDF

def _urdf_origin(el: Optional[ET.Element]) -> SpatialTransform:
    if el is None:
        return SpatialTransform.identity()
    xyz = [float(s) for s in el.get("xyz", "0 0 0").split()]
    rpy = [float(s) for s in el.get("rpy", "0 0 0").split()]
    return SpatialTransform.from_rpy_xyz(rpy, xyz)


def _urdf_link_params(link: ET.Element) -> np.ndarray:
    inertial = link.find("inertial")
    if inertial is None:
        return np.zeros(10)
    mass_el, inertia_el = inertial.find("mass"), inertial.find("inertia")
    m = float(mass_el.get("value")) if mass_el is not None else 0.0
    vals = {k: 0.0 for k in ("ixx", "ixy", "ixz", "iyy", "iyz", "izz")}
    if inertia_el is not None:
        vals.update({k: float(inertia_el.get(k, 0.0)) for k in vals})
    com_params = np.array([m, 0, 0, 0, vals["ixx"], vals["ixy"], vals["ixz"],
                           vals["iyy"], vals["iyz"], vals["izz"]])
    # inertia is given in the CoM frame; re-express about the link origin
    to_com = _urdf_origin(inertial.find("origin"))
    return param_transform(to_com) @ com_params


def load_urdf_subset(path, gravity=DEFAULT_GRAVITY) -> Mechanism:
    """Import a URDF restricted to revolute/continuous/prismatic/fixed joints.

    Fixed joints are merged into the parent body. Body frames coincide with
    the URDF child-link frames, so inertias are re-expressed about them.
    """
    try:
        root = ET.parse(str(path)).getroot()
    except (OSError, ET.ParseError) as exc:
        raise ModelError(f"cannot parse URDF {path}: {exc}") from None
    if root.tag != "robot":
        raise ModelError("URDF root element must be <robot>")
    links = {l.get("name"): l for l in root.findall("link")}
    joints = root.findall("joint")
    child_of = {}
    for j in joints:
        jname = j.get("name")
        if j.find("mimic") is not None:
            raise UnsupportedFeature(f"joint {jname!r}: mimic joints are not supported")
        if j.get("type") not in ("revolute", "continuous", "prismatic", "fixed"):
            raise UnsupportedFeature(f"joint {jname!r}: type {j.get('type')!r} is not supported")
        child = j.find("child").get("link")
        if child in child_of:
            raise UnsupportedFeature(f"link {child!r} has two parent joints (closed loop)")
        child_of[child] = j
    roots = [n for n in links if n not in child_of]
    if len(roots) != 1:
        raise UnsupportedFeature(f"expected one root link, found {len(roots)}")

    by_parent = {}
    for j in joints:
        by_parent.setdefault(j.find("parent").get("link"), []).append(j)

    bodies: list = []
    params: list = []

    def visit(link_name: str, body_index: int, to_link: SpatialTransform):
        # to_link maps the owning body's frame to this link's frame
        own = _urdf_link_params(links[link_name])
        if body_index > 0:
            params[body_index - 1] += param_transform(to_link) @ own
        for j in by_parent.get(link_name, []):
            origin = _urdf_origin(j.find("origin")) @ to_link
            child = j.find("child").get("link")
            if j.get("type") == "fixed":
                visit(child, body_index, origin)
                continue
            axis_el = j.find("axis")
            axis = [float(s) for s in axis_el.get("xyz").split()] if axis_el is not None else [1, 0, 0]
            joint = Joint.prismatic(axis) if j.get("type") == "prismatic" else Joint.revolute(axis)
            bodies.append([child, body_index, origin, joint])
            params.append(np.zeros(10))
            visit(child, len(bodies), SpatialTransform.identity())

    visit(roots[0], 0, SpatialTransform.identity())
    if not bodies:
        raise ModelError("URDF has no movable joints")
    specs = tuple(BodySpec(n, p, X, jt, prm) for (n, p, X, jt), prm in zip(bodies, params))
    return Mechanism(specs, gravity=gravity, base_kind="fixed", name=root.get("name", ""))


# ---------------------------------------------------------------- builtins

BUILTIN_NAMES = ("puma560", "scara", "cheetah3_leg_fixed", "cheetah3_leg_floating",
                 "rr_parallel", "rr_perpendicular")

TRUNK_PARAMS = np.array([9.0, 0.0, 0.0, 0.0, 0.07, 0.0, 0.0, 0.26, 0.0, 0.28])


def float_base(mech: Mechanism, trunk_params=TRUNK_PARAMS, name: str = "trunk") -> Mechanism:
    """Re-root a fixed-base mechanism on a new body with a 6-DoF joint."""
    shifted = tuple(replace(b, parent=b.parent + 1) for b in mech.bodies)
    trunk = BodySpec(name, 0, SpatialTransform.identity(), Joint.floating(),
                     None if trunk_params is None else np.asarray(trunk_params, dtype=float))
    return Mechanism((trunk,) + shifted, gravity=mech.gravity, base_kind="floating",
                     name=(mech.name.replace("_fixed", "") + "_floating") if mech.name else "")


def builtin(name: str) -> Mechanism:
    if name == "cheetah3_leg_floating":
        return float_base(builtin("cheetah3_leg_fixed"))
    if name not in BUILTIN_NAMES:
        raise ModelError(f"unknown builtin model {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
    ref = resources.files("rpna").joinpath("models", f"{name}.json")
    return mechanism_from_dict(json.loads(ref.read_text()))


def builtin_models() -> dict:
    return {name: builtin(name) for name in BUILTIN_NAMES}


def load_model(spec: str) -> Mechanism:
    """Load ``builtin:<name>``, a ``.urdf`` file or a JSON model file."""
    spec = str(spec)
    if spec.startswith("builtin:"):
        return builtin(spec.split(":", 1)[1])
    if spec.lower().endswith(".urdf"):
        return load_urdf_subset(spec)
    return load_json(spec)
