import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mimicrl import rotmath
from mimicrl.errors import DimMismatch
from mimicrl.similarity import Layout, SimWeights, StateDescriptor, canonicalize_flat, sim_flat, sim_humanoid, sim_quadruped, similarity_matrix


def base_state():
    return StateDescriptor(
        joint_rot=[rotmath.IDENTITY.copy(), 0.0],
        joint_vel=[np.zeros(3), 0.0],
        ee_rel_pos=np.zeros((1, 3)),
        root_pos=np.zeros(3),
        root_rot=rotmath.IDENTITY.copy(),
    )


def test_humanoid_identical_is_one():
    assert sim_humanoid(base_state(), base_state()) == 1.0


def test_humanoid_pose_term_closed_form():
    s = base_state()
    s.joint_rot[1] = np.sqrt(0.5)
    assert abs(sim_humanoid(base_state(), s) - (0.65 * np.exp(-1.0) + 0.35)) < 1e-6
    assert abs(sim_humanoid(base_state(), s) - 0.589122) < 1e-6


def test_humanoid_root_term_closed_form():
    s = base_state()
    s.root_pos = np.array([0.1, 0.0, 0.0])
    assert abs(sim_humanoid(base_state(), s) - 0.990484) < 1e-6


def test_quadruped_closed_forms():
    assert sim_quadruped(base_state(), base_state()) == pytest.approx(1.0, abs=1e-12)
    s = base_state()
    s.root_rot = np.array([0.0, 1.0, 0.0, 0.0])
    s.joint_rot[1] = 1.3
    assert sim_quadruped(base_state(), s) == 0.0
    s = base_state()
    s.root_rot = rotmath.pitch_quat(np.pi / 2)
    assert abs(sim_quadruped(base_state(), s) - np.cos(np.pi / 4)) < 1e-5
    assert abs(sim_quadruped(base_state(), s) - 0.70711) < 1e-5


def test_dim_mismatch():
    a = base_state()
    b = base_state()
    b.joint_rot = b.joint_rot[:1]
    b.joint_vel = b.joint_vel[:1]
    with pytest.raises(DimMismatch):
        sim_humanoid(a, b)


LAYOUT = Layout(("three", "one", "one"), 2)


def random_desc(rng, n):
    x = rng.standard_normal((n, LAYOUT.size)) * 0.3
    return canonicalize_flat(x, LAYOUT)


def test_matrix_diagonal_and_entries(rng):
    ref = random_desc(rng, 5)
    traj = random_desc(rng, 7)
    S = similarity_matrix(ref, traj, LAYOUT)
    for i in range(5):
        for j in range(7):
            assert S[i, j] == sim_flat(ref[i], traj[j], LAYOUT)
    np.testing.assert_array_equal(np.diag(similarity_matrix(ref, ref, LAYOUT)), 1.0)
    assert similarity_matrix(ref[:1], traj[:1], LAYOUT).shape == (1, 1)


@given(st.integers(0, 2**31 - 1), st.sampled_from(["humanoid", "quadruped"]))
def test_symmetric(seed, metric):
    rng = np.random.default_rng(seed)
    y, s = random_desc(rng, 2)
    assert sim_flat(y, s, LAYOUT, metric=metric) == pytest.approx(sim_flat(s, y, LAYOUT, metric=metric), abs=1e-15)


def test_sign_invariance():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        y, s = rng.standard_normal((2, LAYOUT.size)) * 0.3
        flipped = s.copy()
        sl = LAYOUT.quat_slices()[0] if rng.uniform() < 0.5 else LAYOUT.root_rot
        flipped[sl] *= -1
        for metric in ("humanoid", "quadruped"):
            a = sim_flat(canonicalize_flat(y, LAYOUT), canonicalize_flat(s, LAYOUT), LAYOUT, metric=metric)
            b = sim_flat(canonicalize_flat(y, LAYOUT), canonicalize_flat(flipped, LAYOUT), LAYOUT, metric=metric)
            assert a == b


@given(st.integers(0, 3), st.floats(0.01, 0.3), st.floats(0.01, 0.3))
def test_strictly_decreasing_in_each_term(term, d, extra):
    # kept small enough that every kernel stays above float resolution
    y = np.zeros(LAYOUT.size)
    y[LAYOUT.root_rot] = rotmath.IDENTITY
    y[LAYOUT.quat_slices()[0]] = rotmath.IDENTITY
    col = [LAYOUT.n_rot - 1, LAYOUT.vel.start, LAYOUT.ee.start, LAYOUT.root_pos.start][term]
    s1, s2 = y.copy(), y.copy()
    s1[col] = d
    s2[col] = d + extra
    assert sim_flat(y, s2, LAYOUT) < sim_flat(y, s1, LAYOUT)


def test_weights_roundtrip():
    w = SimWeights(k_pose=3.0)
    assert SimWeights.from_dict(w.to_dict()) == w
