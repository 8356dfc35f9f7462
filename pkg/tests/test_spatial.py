import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm
from scipy.spatial.transform import Rotation

from rpna.spatial import (
    SpatialTransform,
    StructureError,
    cross_force,
    cross_motion,
    energy_descriptor,
    joint_transform,
    joint_transform_batch,
    momentum_map,
    momentum_map_batch,
    momentum_output,
    param_rate,
    param_transform,
    skew,
    vee,
    wedge,
)
from rpna.recursion import null_basis

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
vec6 = arrays(np.float64, 6, elements=finite)
vec10 = arrays(np.float64, 10, elements=finite)
vec3 = arrays(np.float64, 3, elements=finite)


def transforms():
    return st.builds(
        lambda rv, p: SpatialTransform(Rotation.from_rotvec(rv).as_matrix(), p),
        arrays(np.float64, 3, elements=st.floats(-3, 3)), vec3)


def series_exp(M, terms=60):
    # plain Taylor series, independent of the closed form under test
    out, term = np.eye(M.shape[0]), np.eye(M.shape[0])
    for k in range(1, terms):
        term = term @ M / k
        out = out + term
    return out


def rel(a, b):
    return np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))


# ---- cross products

def test_cross_motion_zero():
    assert np.array_equal(cross_motion(np.zeros(6)), np.zeros((6, 6)))


def test_cross_motion_pure_z_rotation():
    M = cross_motion([0, 0, 1, 0, 0, 0])
    Sz = skew([0, 0, 1])
    assert np.array_equal(M[:3, :3], Sz)
    assert np.array_equal(M[3:, 3:], Sz)
    assert not M[:3, 3:].any() and not M[3:, :3].any()


def test_cross_motion_antisymmetric_pairs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        v, x = rng.normal(size=(2, 6))
        assert np.allclose(cross_motion(v) @ x, -cross_motion(x) @ v, atol=1e-12)


@given(vec6)
def test_cross_force_is_negative_transpose(v):
    assert np.array_equal(cross_force(v), -cross_motion(v).T)


# ---- wedge / vee

def test_wedge_zero_and_mass_only():
    assert not wedge(np.zeros(10)).any()
    assert not vee(np.zeros((6, 6))).any()
    W = wedge([2.5] + [0] * 9)
    expected = np.zeros((6, 6))
    expected[3:, 3:] = 2.5 * np.eye(3)
    assert np.array_equal(W, expected)


def test_wedge_vee_round_trip_100():
    rng = np.random.default_rng(1)
    for _ in range(100):
        pi = rng.normal(size=10)
        assert np.allclose(vee(wedge(pi)), pi, atol=1e-14)


@given(vec10)
def test_wedge_structure(pi):
    W = wedge(pi)
    assert np.array_equal(W, W.T)
    assert np.array_equal(W[3:, 3:], pi[0] * np.eye(3))
    assert np.array_equal(W[:3, 3:], -W[:3, 3:].T)


def test_vee_rejects_unstructured():
    W = wedge(np.arange(10.0))
    W[3, 4] += 0.5
    with pytest.raises(StructureError):
        vee(W)
    with pytest.raises(StructureError):
        vee(np.eye(5))


# ---- momentum map and energy descriptor

@given(vec6, vec10)
def test_momentum_map_identity(x, pi):
    assert rel(momentum_map(x) @ pi, wedge(pi) @ x) < 1e-12


def test_momentum_map_batch_matches_single():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(20, 6))
    batch = momentum_map_batch(X)
    for k in range(20):
        assert np.array_equal(batch[k], momentum_map(X[k]))


def test_energy_descriptor_examples():
    assert not energy_descriptor(np.zeros(6)).any()
    k = energy_descriptor([0, 0, 3.0, 0, 0, 0])
    expected = np.zeros(10)
    expected[9] = 9.0
    assert np.allclose(k, expected)


@given(vec6, vec10)
def test_energy_descriptor_identity(v, pi):
    assert rel(energy_descriptor(v) @ pi, v @ wedge(pi) @ v) < 1e-12


# ---- parameter transform

def test_param_transform_identity():
    assert np.allclose(param_transform(np.eye(6)), np.eye(10), atol=0)


def test_param_transform_point_mass_translation():
    ell, m = 0.7, 3.0
    X = SpatialTransform(np.eye(3), [ell, 0, 0])
    pi = np.zeros(10)
    pi[0] = m
    out = param_transform(X) @ pi
    # direct congruence
    assert np.allclose(wedge(out), X.matrix.T @ wedge(pi) @ X.matrix, atol=1e-14)
    # the child origin, where the mass sits, is at +ell in the parent frame
    assert np.isclose(out[0], m)
    assert np.allclose(out[1:4], [m * ell, 0, 0])
    assert np.allclose(out[4:], [0, 0, 0, m * ell ** 2, 0, m * ell ** 2])


@given(transforms(), vec10)
def test_param_transform_congruence(X, pi):
    assert rel(wedge(param_transform(X) @ pi), X.matrix.T @ wedge(pi) @ X.matrix) < 1e-12


@given(transforms(), transforms())
def test_param_transform_composition(X1, X2):
    lhs = param_transform(X2) @ param_transform(X1)
    rhs = param_transform(X1.matrix @ X2.matrix)
    assert rel(lhs, rhs) < 1e-12


@given(transforms())
def test_param_transform_invertible(X):
    assert rel(param_transform(X) @ param_transform(X.inverse()), np.eye(10)) < 1e-12


# ---- parameter rate

def test_param_rate_zero():
    assert not param_rate(np.zeros(6)).any()


def test_param_rate_z_rotation_mixes_xx_yy_through_xy():
    pi = np.zeros(10)
    pi[4] = 1.0
    cm = cross_motion([0, 0, 1, 0, 0, 0])
    out = param_rate([0, 0, 1, 0, 0, 0]) @ pi
    assert np.allclose(wedge(out), cm.T @ wedge(pi) + wedge(pi) @ cm)
    nonzero = {j for j in range(10) if abs(out[j]) > 1e-14}
    assert nonzero == {5}


@given(vec6, vec10)
def test_param_rate_identity(phi, pi):
    cm = cross_motion(phi)
    assert rel(wedge(param_rate(phi) @ pi), cm.T @ wedge(pi) + wedge(pi) @ cm) < 1e-12


@pytest.mark.parametrize("phi", [
    [0, 0, 1, 0, 0, 0], [1, 0, 0, 0, 0, 0], [0, 0, 0, 0, 1, 0], [0, 0, 1, 0, 0, 0.3],
])
def test_param_rate_finite_difference(phi):
    rng = np.random.default_rng(3)
    pi = rng.normal(size=10)
    h = 1e-6
    d = (param_transform(joint_transform(h, phi)) @ pi - param_transform(joint_transform(-h, phi)) @ pi) / (2 * h)
    assert np.allclose(d, -param_rate(phi) @ pi, atol=1e-6)


# ---- momentum output

def test_momentum_output_zero_span():
    assert not momentum_output(np.zeros((6, 3)), [0, 0, 1, 0, 0, 0]).any()


def test_momentum_output_floating_revolute():
    C = momentum_output(np.eye(6), [0, 0, 1, 0, 0, 0])
    Z = null_basis(C)
    assert Z.shape[1] == 5
    # hx, hy, Ixz, Iyz, Izz are forced to zero
    for j in (1, 2, 6, 8, 9):
        assert np.allclose(Z[j], 0, atol=1e-12)


def test_momentum_output_floating_prismatic():
    C = momentum_output(np.eye(6), [0, 0, 0, 0, 0, 1])
    Z = null_basis(C)
    assert Z.shape[1] == 7
    for j in (0, 1, 2):
        assert np.allclose(Z[j], 0, atol=1e-12)


@given(arrays(np.float64, (6, 3), elements=finite), vec6, vec10)
def test_momentum_output_matches_bilinear_form(V, phi, pi):
    assert rel(momentum_output(V, phi) @ pi, V.T @ wedge(pi) @ phi) < 1e-12


# ---- transforms

@given(transforms())
def test_transform_structure(X):
    M = X.matrix
    assert not M[:3, 3:].any()
    assert np.allclose(M[:3, :3], M[3:, 3:])
    assert np.allclose(X.rotation @ X.rotation.T, np.eye(3), atol=1e-12)


@given(transforms(), transforms())
def test_transform_composition_and_inverse(A, B):
    assert rel((A @ B).matrix, A.matrix @ B.matrix) < 1e-12
    assert rel(A.inverse().matrix @ A.matrix, np.eye(6)) < 1e-12
    assert rel(SpatialTransform.from_matrix(A.matrix).matrix, A.matrix) < 1e-14


def test_transform_rejects_non_rotation():
    with pytest.raises(ValueError):
        SpatialTransform(2 * np.eye(3), np.zeros(3))
    with pytest.raises(ValueError):
        SpatialTransform(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


# ---- joint transform

def test_joint_transform_zero_is_identity():
    for phi in ([0, 0, 1, 0, 0, 0], [0, 0, 0, 1, 0, 0], [0, 1, 0, 0, 0.2, 0]):
        assert np.allclose(joint_transform(0.0, phi).matrix, np.eye(6), atol=0)


def test_joint_transform_revolute_quarter_turn():
    X = joint_transform(np.pi / 2, [0, 0, 1, 0, 0, 0])
    v = np.array([1.0, 0, 0, 0, 0, 0])
    # the child frame is rotated by +90 deg, so x of the parent reads as -y
    assert np.allclose(X.apply(v), [0, -1, 0, 0, 0, 0], atol=1e-15)
    assert np.allclose(X.matrix, series_exp(-np.pi / 2 * cross_motion([0, 0, 1, 0, 0, 0])), atol=1e-12)


def _screw(axis, pitch, point=(0, 0, 0)):
    axis = np.asarray(axis, float) / np.linalg.norm(axis)
    return np.concatenate((axis, pitch * axis + np.cross(point, axis)))


@pytest.mark.parametrize("phi", [
    [0, 0, 1, 0, 0, 0],
    [0, 0, 0, 0.6, 0, 0.8],
    _screw([1, 2, -1], 0.3),
    _screw([0, 1, 1], 0.0, point=(0.2, -0.4, 1.0)),
    _screw([1, 0, 0], -0.7, point=(0, 1, 0)),
])
def test_joint_transform_matches_series(phi):
    for q in np.linspace(-np.pi, np.pi, 13):
        series = series_exp(-q * cross_motion(phi))
        assert rel(joint_transform(q, phi).matrix, series) < 1e-12
        assert rel(joint_transform(q, phi).matrix, expm(-q * cross_motion(phi))) < 1e-12


@given(st.floats(-3, 3), st.floats(-3, 3), vec6.filter(lambda v: np.linalg.norm(v[:3]) > 1e-3))
def test_joint_transform_one_parameter_group(q1, q2, phi):
    # a general twist is a screw about a line
    phi = _screw(phi[:3], phi[3], point=phi[3:])
    lhs = joint_transform(q1 + q2, phi).matrix
    rhs = joint_transform(q2, phi).matrix @ joint_transform(q1, phi).matrix
    assert rel(lhs, rhs) < 1e-11


def test_joint_transform_derivative():
    rng = np.random.default_rng(4)
    for _ in range(20):
        phi = _screw(rng.normal(size=3), rng.normal(), rng.normal(size=3))
        q, h = rng.uniform(-3, 3), 1e-6
        d = (joint_transform(q + h, phi).matrix - joint_transform(q - h, phi).matrix) / (2 * h)
        assert np.allclose(d, -cross_motion(phi) @ joint_transform(q, phi).matrix, atol=1e-6)


def test_joint_transform_batch_matches_single():
    phi = _screw([0.3, -1, 0.2], 0.1, point=(1, 0, 0))
    qs = np.linspace(-3, 3, 11)
    batch = joint_transform_batch(qs, phi)
    for k, q in enumerate(qs):
        assert np.allclose(batch[k], joint_transform(q, phi).matrix, atol=1e-15)
