"""System-wide nullspace bases, parameter classification and regroupings."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import Mechanism
from .recursion import RpnaOptions, prune_rows, run
from .spatial import PARAM_NAMES, param_transform

CLASSIFY_TOL = 1e-8
COEFF_TOL = 1e-10


class ParamClass(enum.Enum):
    IDENTIFIABLE = "identifiable"
    UNIDENTIFIABLE = "unidentifiable"
    COMBINATION_ONLY = "combination_only"


@dataclass(frozen=True)
class SystemNullspace:
    """``R`` spans the parameter nullspace and ``Ndesc @ R == 0`` with
    ``rank(R) + rank(Ndesc)`` equal to the number of parameters."""

    R: np.ndarray
    Ndesc: np.ndarray
    labels: tuple
    n_bodies: int
    rotor_bodies: tuple

    @property
    def n_params(self) -> int:
        return self.R.shape[0]

    @property
    def nullity(self) -> int:
        return self.R.shape[1]

    @property
    def base_param_count(self) -> int:
        return self.n_params - self.nullity

    @property
    def body_base_param_count(self) -> int:
        """Rank of the body columns alone (rotor columns dropped)."""
        return 10 * self.n_bodies - _body_nullity(self)

    def orthonormal_R(self) -> np.ndarray:
        return _orth(self.R)

    def rotor_column(self, body: int) -> int:
        return 10 * self.n_bodies + self.rotor_bodies.index(body)


def _orth(M: np.ndarray) -> np.ndarray:
    if M.shape[1] == 0:
        return M.copy()
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    return U[:, s > 1e-10 * s[0]]


def _rank(M: np.ndarray) -> int:
    return prune_rows(M).shape[0]


def _body_nullity(sysns: SystemNullspace) -> int:
    # nullspace vectors with zero rotor components
    n = 10 * sysns.n_bodies
    if sysns.nullity == 0:
        return 0
    rotor_part = sysns.R[n:]
    if rotor_part.shape[0] == 0:
        return sysns.nullity
    return sysns.nullity - _rank(rotor_part)


def _rotor_slots(mech: Mechanism, analyses: list) -> dict:
    bodies = [a.body for a in analyses if a.has_rotor]
    return {b: 10 * mech.n_bodies + k for k, b in enumerate(bodies)}


def build_R(analyses: list, mech: Mechanism) -> np.ndarray:
    """Block basis of the nullspace: each joint's local transfers, with the
    compensating change on the predecessor."""
    slots = _rotor_slots(mech, analyses)
    n = 10 * mech.n_bodies + len(slots)
    cols = []
    for a in analyses:
        i = a.body
        Z = a.transfer_basis
        if Z.shape[1] == 0:
            continue
        block = np.zeros((n, Z.shape[1]))
        block[10 * (i - 1):10 * i] = Z[:10]
        p = mech.parent(i)
        if p > 0:
            block[10 * (p - 1):10 * p] = -param_transform(mech.body(i).placement) @ Z[:10]
        if a.has_rotor:
            block[slots[i]] = Z[10]
            if p > 0:
                block[10 * (p - 1):10 * p] -= np.outer(mech.body(i).rotor.carrier_params(), Z[10])
        cols.append(block)
    if not cols:
        return np.zeros((n, 0))
    return np.hstack(cols)


def build_Ndesc(analyses: list, mech: Mechanism) -> np.ndarray:
    """Descriptor whose rows span the identifiable combinations.

    Row block ``i`` applies joint ``i``'s descriptor to the composite
    parameters of the subtree rooted at body ``i``.
    """
    slots = _rotor_slots(mech, analyses)
    n = 10 * mech.n_bodies + len(slots)
    composite = {}
    for i in range(mech.n_bodies, 0, -1):
        M = np.zeros((10, n))
        M[:, 10 * (i - 1):10 * i] = np.eye(10)
        for c in mech.children(i):
            M += param_transform(mech.body(c).placement) @ composite[c]
            if c in slots:
                M[:, slots[c]] += mech.body(c).rotor.carrier_params()
        composite[i] = M
    blocks = []
    for a in analyses:
        i = a.body
        if a.has_rotor:
            e = np.zeros((1, n))
            e[0, slots[i]] = 1.0
            blocks.append(a.N_aug @ np.vstack((composite[i], e)))
        else:
            blocks.append(a.N @ composite[i])
    return np.vstack(blocks)


def build(mech: Mechanism, opts: RpnaOptions = RpnaOptions(), analyses=None) -> SystemNullspace:
    if analyses is None:
        analyses = run(mech, opts)
    rotors = tuple(a.body for a in analyses if a.has_rotor)
    labels = [f"{name}_{b.name}" for b in mech.bodies for name in PARAM_NAMES]
    labels += [f"Jm_{mech.body(i).name}" for i in rotors]
    return SystemNullspace(
        R=build_R(analyses, mech),
        Ndesc=build_Ndesc(analyses, mech),
        labels=tuple(labels),
        n_bodies=mech.n_bodies,
        rotor_bodies=rotors,
    )


@dataclass(frozen=True)
class ParameterClassification:
    classes: tuple
    pivots: tuple
    rref: np.ndarray
    labels: tuple

    def count(self, cls: ParamClass) -> int:
        return sum(c is cls for c in self.classes)

    def glyph(self, j: int, ascii_only: bool = False) -> str:
        cls = self.classes[j]
        if cls is ParamClass.IDENTIFIABLE:
            return "Y" if ascii_only else "✓"
        if cls is ParamClass.UNIDENTIFIABLE:
            return "N" if ascii_only else "✗"
        if j in self.pivots:
            return "*" if ascii_only else "★"
        return " "


def row_basis(sysns: SystemNullspace) -> np.ndarray:
    return prune_rows(sysns.Ndesc)


def classify(sysns: SystemNullspace) -> ParameterClassification:
    """Classify every parameter and choose a minimal identifiable set."""
    Q = row_basis(sysns)
    Rn = sysns.orthonormal_R()
    n = sysns.n_params
    classes = []
    for j in range(n):
        to_perp = np.linalg.norm(Q[:, j]) if Q.size else 0.0
        to_null = np.linalg.norm(Rn[j]) if Rn.size else 0.0
        if to_perp < CLASSIFY_TOL:
            classes.append(ParamClass.UNIDENTIFIABLE)
        elif to_null < CLASSIFY_TOL:
            classes.append(ParamClass.IDENTIFIABLE)
        else:
            classes.append(ParamClass.COMBINATION_ONLY)

    # greedy pivots in parameter order
    pivots = []
    basis = np.zeros((Q.shape[0], 0))
    for j in range(n):
        if len(pivots) == Q.shape[0]:
            break
        col = Q[:, j]
        resid = col - basis @ (basis.T @ col)
        if np.linalg.norm(resid) > CLASSIFY_TOL:
            pivots.append(j)
            basis = np.hstack((basis, (resid / np.linalg.norm(resid))[:, None]))
    if pivots:
        rref = np.linalg.solve(Q[:, pivots], Q)
        # rotor columns carry n^2-sized coefficients, so round-off scales
        # with the largest entry of each row
        scale = np.maximum(np.abs(rref).max(axis=1, keepdims=True), 1.0)
        rref[np.abs(rref) < COEFF_TOL * scale] = 0.0
        rref[:, pivots] = np.eye(len(pivots))
    else:
        rref = np.zeros((0, n))
    return ParameterClassification(tuple(classes), tuple(pivots), rref, sysns.labels)


def _fmt_coeff(c: float) -> str:
    return f"{c:.6g}"


def regroupings(classification: ParameterClassification) -> list:
    """Identifiable combinations, one per pivot, as readable strings."""
    out = []
    labels = classification.labels
    for r, p in enumerate(classification.pivots):
        row = classification.rref[r]
        terms = [labels[p]]
        for j in np.flatnonzero(row):
            if j == p:
                continue
            c = row[j]
            sign = "-" if c < 0 else "+"
            mag = abs(c)
            terms.append(f"{sign} {labels[j]}" if abs(mag - 1) < 1e-12 else f"{sign} {_fmt_coeff(mag)} {labels[j]}")
        out.append(" ".join(terms))
    return out
