import json

import numpy as np
import pytest

from mimicrl import rotmath
from mimicrl.errors import MappingError
from mimicrl.genref import resolve_skeleton
from mimicrl.motion_io import Frame, Joint, MotionSequence, Skeleton, extract_tpose, forward_kinematics
from mimicrl.retarget import JointMap, chain_residual, embed_planar, project_sagittal, reduce_to_one_dof, retarget_motion

from conftest import arm_skeleton, random_frame

Y = np.array([0.0, 1.0, 0.0])


def human_and_target():
    src = arm_skeleton()
    tgt = Skeleton(
        [
            Joint("base", -1, np.zeros(3), "zero"),
            Joint("shoulder", 0, np.array([0.0, 0.2, 0.5]), "three"),
            Joint("elbow", 1, np.array([0.3, 0.0, 0.0]), "one", Y.copy()),
            Joint("hand", 2, np.array([0.25, 0.0, 0.0]), "zero"),
        ],
        0.8,
    )
    jmap = JointMap([("pelvis", ["base"]), ("shoulder", ["shoulder"]), ("elbow", ["elbow"])], root_height_scale=0.9)
    return src, tgt, jmap


def test_tpose_maps_to_tpose_exactly():
    src, tgt, jmap = human_and_target()
    seq = MotionSequence(30.0, src, [extract_tpose(src) for _ in range(3)])
    out, _ = retarget_motion(seq, tgt, jmap)
    t = extract_tpose(tgt)
    for f in out.frames:
        assert np.array_equal(f.root_pos, t.root_pos)
        assert abs(abs(rotmath.dot(f.root_rot, t.root_rot)) - 1.0) == 0.0
        for a, b in zip(f.joint_rot, t.joint_rot):
            assert np.allclose(a, b, atol=0.0) or abs(abs(rotmath.dot(a, b)) - 1.0) == 0.0


def test_root_only_mode():
    src, tgt, _ = human_and_target()
    jmap = JointMap([("pelvis", ["base"]), ("shoulder", ["shoulder"])], mode="root_only")
    rng = np.random.default_rng(3)
    f = random_frame(src, rng)
    out, rep = retarget_motion(MotionSequence(30.0, src, [f]), tgt, jmap)
    t = extract_tpose(tgt)
    assert np.allclose(out.frames[0].root_rot, rotmath.mul(t.root_rot, f.root_rot))
    for a, b in zip(out.frames[0].joint_rot, t.joint_rot):
        assert np.array_equal(np.asarray(a), np.asarray(b))
    assert "shoulder" in rep.untouched_target_joints


def test_partial_mode_only_touches_targets():
    src, tgt, _ = human_and_target()
    jmap = JointMap([("shoulder", ["shoulder"]), ("elbow", ["elbow"])], mode="partial", targets={"shoulder"})
    f = Frame(np.array([0, 0, 1.0]), rotmath.IDENTITY.copy(), [rotmath.from_axis_angle([0, 0, 1], 0.4), rotmath.from_axis_angle(Y, 0.9), rotmath.IDENTITY.copy()])
    out, rep = retarget_motion(MotionSequence(30.0, src, [f]), tgt, jmap)
    np.testing.assert_allclose(out.frames[0].joint_rot[0], f.joint_rot[0], atol=1e-12)
    assert out.frames[0].joint_rot[1] == 0.0
    assert "elbow" in rep.untouched_target_joints and "base" in rep.untouched_target_joints


def test_unknown_joint_raises():
    src, tgt, _ = human_and_target()
    with pytest.raises(MappingError):
        retarget_motion(MotionSequence(30.0, src, [extract_tpose(src)]), tgt, JointMap([("nope", ["shoulder"])]))
    with pytest.raises(MappingError):
        JointMap([("shoulder", ["elbow"]), ("elbow", ["elbow"])]).validate(src, tgt)


def test_frame_local_permutation(rng):
    src, tgt, jmap = human_and_target()
    frames = [random_frame(src, rng, 0.5) for _ in range(5)]
    perm = rng.permutation(5)
    a, _ = retarget_motion(MotionSequence(30.0, src, frames), tgt, jmap)
    b, _ = retarget_motion(MotionSequence(30.0, src, [frames[k] for k in perm]), tgt, jmap)
    for k, p in enumerate(perm):
        np.testing.assert_array_equal(b.frames[k].root_pos, a.frames[p].root_pos)
        for x, y in zip(b.frames[k].joint_rot, a.frames[p].joint_rot):
            np.testing.assert_array_equal(x, y)


def arm_frame(shoulder, elbow):
    return Frame(np.array([0.0, 0.0, 1.0]), rotmath.IDENTITY.copy(), [shoulder, elbow, rotmath.IDENTITY.copy()])


def test_reduce_straight_arm():
    skel = arm_skeleton()
    sh = rotmath.from_axis_angle([0, 0, 1], 0.5)
    ang, up = reduce_to_one_dof(skel, arm_frame(sh, rotmath.IDENTITY.copy()), "shoulder", "elbow", "hand", Y)
    assert abs(ang) < 1e-9
    pos, _ = forward_kinematics(skel, arm_frame(sh, rotmath.IDENTITY.copy()))
    d = rotmath.rotate(up, [1.0, 0.0, 0.0])
    np.testing.assert_allclose(d, (pos[3] - pos[1]) / np.linalg.norm(pos[3] - pos[1]), atol=1e-9)


def test_reduce_perpendicular_forearm():
    skel = arm_skeleton()
    ang, _ = reduce_to_one_dof(skel, arm_frame(rotmath.IDENTITY.copy(), rotmath.from_axis_angle([0, 0, 1], np.pi / 2)), "shoulder", "elbow", "hand", Y)
    assert abs(abs(ang) - np.pi / 2) < 1e-9


def test_reduce_random_bent_arm_residual():
    skel = arm_skeleton()
    rng = np.random.default_rng(11)
    for _ in range(100):
        f = arm_frame(rotmath.normalize(rng.standard_normal(4)), rotmath.normalize(rng.standard_normal(4)))
        ang, up = reduce_to_one_dof(skel, f, 1, 2, 3, Y)
        assert chain_residual(skel, f, 1, 2, 3, Y, ang, up) <= 1e-6


def test_reduce_residual_shrinks_with_mismatch():
    skel = arm_skeleton()
    f = arm_frame(rotmath.from_axis_angle([1, 1, 0], 0.7), rotmath.from_axis_angle([0, 1, 1], 1.1))
    ang, up = reduce_to_one_dof(skel, f, 1, 2, 3, Y)
    res = [chain_residual(skel, f, 1, 2, 3, Y, ang, up, o1=np.array([0.3 * (1 + e), 0, 0])) for e in (0.2, 0.1, 0.05, 0.0)]
    assert all(a >= b for a, b in zip(res, res[1:]))
    assert res[-1] <= 1e-6


def test_project_sagittal_pitch_and_roll():
    planar = Skeleton([Joint("root", -1, np.zeros(3), "zero"), Joint("a", 0, np.array([0, 0, 1.0]), "one", Y.copy())], 1.0)
    src = Skeleton([Joint("root", -1, np.zeros(3), "zero"), Joint("a", 0, np.array([0, 0, 1.0]), "three")], 1.0)
    th = 0.4
    for q, want in [(rotmath.from_axis_angle(Y, th), th), (rotmath.from_axis_angle([1, 0, 0], th), 0.0)]:
        m = MotionSequence(30.0, src, [Frame(np.array([0.1, 0.2, 0.9]), rotmath.IDENTITY.copy(), [q])])
        out = project_sagittal(m, planar)
        assert abs(out.frames[0].joint_rot[0] - want) < 1e-9
        assert out.frames[0].root_pos[1] == 0.0


def test_project_sagittal_composed_matches_swing_twist():
    planar = Skeleton([Joint("root", -1, np.zeros(3), "zero"), Joint("a", 0, np.array([0, 0, 1.0]), "one", Y.copy())], 1.0)
    src = Skeleton([Joint("root", -1, np.zeros(3), "zero"), Joint("a", 0, np.array([0, 0, 1.0]), "three")], 1.0)
    q = rotmath.mul(rotmath.from_axis_angle(Y, np.radians(30)), rotmath.from_axis_angle([1, 0, 0], np.radians(10)))
    # oracle: twist = normalized projection of (w, v) onto the axis
    w, y = q[0], q[2]
    want = 2.0 * np.arctan2(y, w)
    out = project_sagittal(MotionSequence(30.0, src, [Frame(np.zeros(3), rotmath.IDENTITY.copy(), [q])]), planar)
    assert abs(out.frames[0].joint_rot[0] - want) < 1e-6


def test_project_embed_identity(rng):
    planar = Skeleton([Joint("root", -1, np.zeros(3), "zero"), Joint("a", 0, np.array([0, 0, 1.0]), "one", Y.copy())], 1.0)
    src = Skeleton([Joint("root", -1, np.zeros(3), "zero"), Joint("a", 0, np.array([0, 0, 1.0]), "three")], 1.0)
    for ang in rng.uniform(-3.0, 3.0, 50):
        out = project_sagittal(MotionSequence(30.0, src, [Frame(np.zeros(3), rotmath.IDENTITY.copy(), [embed_planar(ang)])]), planar)
        assert abs(out.frames[0].joint_rot[0] - ang) < 1e-9


def test_packaged_map_retargets_human_onto_biped(tmp_path):
    from mimicrl.retarget import load_joint_map
    from mimicrl.simworld.model import DATA_DIR

    skel = resolve_skeleton("human3d")
    rng = np.random.default_rng(5)
    frames = []
    for k in range(20):
        f = extract_tpose(skel)
        for name in ("r_hip", "l_hip", "r_knee", "l_knee"):
            f.joint_rot[skel.index(name) - 1] = rotmath.from_axis_angle(Y, rng.uniform(-0.5, 0.5))
        frames.append(f)
    src = MotionSequence(30.0, skel, frames)
    jmap = load_joint_map(DATA_DIR / "maps" / "human3d_to_biped5.json")
    tgt = resolve_skeleton("biped5")
    out, rep = retarget_motion(src, tgt, jmap)
    planar = project_sagittal(out, tgt)
    assert len(planar) == 20 and rep.frames_processed == 20
    assert all(isinstance(r, float) for r in planar.frames[5].joint_rot if not isinstance(r, np.ndarray))
