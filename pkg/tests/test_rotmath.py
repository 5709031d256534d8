import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mimicrl import rotmath
from mimicrl.errors import AntiparallelAmbiguity, ZeroVector

from conftest import qz

finite = st.floats(-10.0, 10.0, allow_nan=False)
quats = st.lists(finite, min_size=4, max_size=4).filter(lambda v: np.linalg.norm(v) > 1e-3).map(rotmath.normalize)
vecs = st.lists(finite, min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3).map(np.array)


def test_rotate_z90():
    np.testing.assert_allclose(rotmath.rotate(qz(90), [1.0, 0.0, 0.0]), [0.0, 1.0, 0.0], atol=1e-12)


def test_relative_rotation_example():
    r = rotmath.relative_rotation(qz(30), qz(80))
    assert abs(abs(rotmath.dot(r, qz(50))) - 1.0) < 1e-12


def test_rotation_between_example():
    q = rotmath.rotation_between([1.0, 0.0, 0.0], [0.0, 1.0, 0.0])
    np.testing.assert_allclose(q, qz(90), atol=1e-12)


def test_rotation_between_antiparallel_raises():
    with pytest.raises(AntiparallelAmbiguity):
        rotmath.rotation_between([1.0, 0.0, 0.0], [-2.0, 0.0, 0.0])


def test_zero_vector_raises():
    with pytest.raises(ZeroVector):
        rotmath.angle_between([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])


def test_angle_between_example():
    v = np.array([-1.0, 1.0, 0.0]) / np.sqrt(2.0)
    assert abs(rotmath.angle_between([1.0, 0.0, 0.0], v) - 3 * np.pi / 4) < 1e-12


def test_mul_matches_rotation_composition(rng):
    a, b = rotmath.normalize(rng.standard_normal((2, 4)))
    v = rng.standard_normal(3)
    np.testing.assert_allclose(rotmath.rotate(rotmath.mul(a, b), v), rotmath.rotate(a, rotmath.rotate(b, v)), atol=1e-12)


def test_slerp_endpoints_and_midpoint():
    a, b = qz(0), qz(90)
    np.testing.assert_allclose(rotmath.slerp(a, b, 0.0), a, atol=1e-12)
    np.testing.assert_allclose(rotmath.slerp(a, b, 1.0), b, atol=1e-12)
    np.testing.assert_allclose(rotmath.slerp(a, b, 0.5), qz(45), atol=1e-12)
    # shortest arc even when b is given with the opposite sign
    np.testing.assert_allclose(rotmath.slerp(a, -b, 0.5), qz(45), atol=1e-12)


def test_twist_angle_about_axis():
    q = rotmath.from_axis_angle([0.0, 1.0, 0.0], 0.7)
    assert abs(rotmath.twist_angle(q, [0.0, 1.0, 0.0]) - 0.7) < 1e-12
    sw, tw = rotmath.swing_twist(rotmath.mul(rotmath.from_axis_angle([1, 0, 0], 0.3), q), [0.0, 1.0, 0.0])
    assert abs(sw[2]) < 1e-12


@given(quats)
def test_q_times_conj_is_identity(q):
    np.testing.assert_allclose(rotmath.canonicalize(rotmath.mul(q, rotmath.conj(q))), rotmath.IDENTITY, atol=1e-9)


@given(quats, quats)
def test_relative_rotation_inverts(a, b):
    r = rotmath.relative_rotation(a, b)
    assert abs(abs(rotmath.dot(rotmath.mul(a, r), b)) - 1.0) < 1e-9


@given(quats)
def test_canonicalize_sign_bitwise(q):
    assert rotmath.canonicalize(q).tobytes() == rotmath.canonicalize(-q).tobytes()


@given(quats)
def test_axis_angle_roundtrip(q):
    rv = rotmath.to_axis_angle(q)
    ang = np.linalg.norm(rv)
    back = rotmath.from_axis_angle(rv if ang > 0 else [1.0, 0.0, 0.0], ang)
    assert abs(abs(rotmath.dot(back, q)) - 1.0) < 1e-9


def test_rotation_between_random_pairs():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        u, v = rng.standard_normal((2, 3))
        q = rotmath.rotation_between(u, v)
        np.testing.assert_allclose(rotmath.rotate(q, u / np.linalg.norm(u)), v / np.linalg.norm(v), atol=1e-6)


@given(vecs, vecs)
def test_angle_between_symmetric_and_bounded(u, v):
    a = rotmath.angle_between(u, v)
    assert 0.0 <= a <= np.pi
    assert abs(a - rotmath.angle_between(v, u)) < 1e-12
