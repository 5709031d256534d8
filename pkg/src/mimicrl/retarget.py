"""
Transfer a source motion onto a target skeleton.

Rotations are transferred relative to each skeleton's T-pose:
q_target = q_tpose_target ⊗ relative_rotation(q_tpose_source, q_source).
Three-dof source joints feeding one-dof target hinges are reduced by a
two-bone IK step that keeps the end effector where the source put it.
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import rotmath
from .errors import AntiparallelAmbiguity, MappingError, UnreachableTarget
from .motion_io import Frame, MotionSequence, Skeleton, extract_tpose, forward_kinematics

PLANAR_AXIS = np.array([0.0, 1.0, 0.0])


@dataclass
class JointMap:
    pairs: list  # (source name, [target names...])
    mode: str = "full"
    targets: Optional[set] = None
    root_height_scale: float = 1.0

    @classmethod
    def from_dict(cls, d):
        mode = d.get("mode", "full")
        if mode not in ("full", "partial", "root_only"):
            raise MappingError(f"unknown joint-map mode {mode!r}")
        pairs = []
        for p in d.get("pairs", []):
            tgt = p["tgt"]
            pairs.append((p["src"], [tgt] if isinstance(tgt, str) else list(tgt)))
        targets = set(d["targets"]) if mode == "partial" else None
        if mode == "partial" and "targets" not in d:
            raise MappingError("partial mode needs a 'targets' list")
        return cls(pairs, mode, targets, float(d.get("root_height_scale", 1.0)))

    def to_dict(self):
        d = {
            "mode": self.mode,
            "root_height_scale": self.root_height_scale,
            "pairs": [{"src": s, "tgt": t[0] if len(t) == 1 else t} for s, t in self.pairs],
        }
        if self.mode == "partial":
            d["targets"] = sorted(self.targets)
        return d

    def validate(self, src: Skeleton, tgt: Skeleton):
        seen = set()
        src_names = set(src.names())
        tgt_names = set(tgt.names())
        for s, ts in self.pairs:
            if s not in src_names:
                raise MappingError(f"source joint {s!r} not in source skeleton")
            for t in ts:
                if t not in tgt_names:
                    raise MappingError(f"target joint {t!r} not in target skeleton")
                if t in seen:
                    raise MappingError(f"target joint {t!r} mapped more than once")
                seen.add(t)
        if self.targets:
            for t in self.targets:
                if t not in tgt_names:
                    raise MappingError(f"partial target {t!r} not in target skeleton")


def load_joint_map(path) -> JointMap:
    with open(path) as fh:
        return JointMap.from_dict(json.load(fh))


@dataclass
class RetargetReport:
    dropped_source_joints: list = field(default_factory=list)
    reduced_joints: list = field(default_factory=list)  # dicts {joint, max_residual_hand_error}
    untouched_target_joints: list = field(default_factory=list)
    frames_processed: int = 0

    def to_dict(self):
        return {
            "dropped_source_joints": self.dropped_source_joints,
            "reduced_joints": self.reduced_joints,
            "untouched_target_joints": self.untouched_target_joints,
            "frames_processed": self.frames_processed,
        }


def _chain_offset(skel, frm, to):
    """Offset from joint `frm` to descendant `to` in frm's frame with identity rotations between."""
    off = np.zeros(3)
    i = to
    while i != frm:
        off = off + skel.joints[i].offset
        i = skel.joints[i].parent
        if i < 0:
            raise MappingError(f"{skel.joints[to].name} is not below {skel.joints[frm].name}")
    return off


def _hinge_sign(limits, angle):
    if limits is None:
        return 1.0
    lo, hi = limits
    if lo <= angle <= hi:
        return 1.0
    if lo <= -angle <= hi:
        return -1.0
    return 1.0 if abs(angle - np.clip(angle, lo, hi)) <= abs(-angle - np.clip(-angle, lo, hi)) else -1.0


def reduce_to_one_dof(skel_src, frame, upper_joint, hinge_joint, end_joint, tgt_axis, limits=None):
    """Collapse a three-dof hinge to one dof and re-aim the upper segment.

    Returns (hinge_angle, adjusted_upper_rot) where adjusted_upper_rot is the
    upper joint's new local rotation. The end joint keeps its source position
    whenever the limb is straight in the T-pose; raises UnreachableTarget (with
    the clamped solution attached) only if the reduced chain cannot span the
    source distance.
    """
    u = skel_src.index(upper_joint) if isinstance(upper_joint, str) else upper_joint
    h = skel_src.index(hinge_joint) if isinstance(hinge_joint, str) else hinge_joint
    e = skel_src.index(end_joint) if isinstance(end_joint, str) else end_joint
    tgt_axis = np.asarray(tgt_axis, dtype=np.float64)
    tgt_axis = tgt_axis / np.linalg.norm(tgt_axis)

    pos, rot = forward_kinematics(skel_src, frame)
    S, E, H = pos[u], pos[h], pos[e]
    angle = rotmath.angle_between(E - S, H - E)
    angle = _hinge_sign(limits, angle) * angle

    o1 = _chain_offset(skel_src, u, h)
    o2 = _chain_offset(skel_src, h, e)
    local_end = o1 + rotmath.rotate(rotmath.from_axis_angle(tgt_axis, angle), o2)
    target = H - S
    parent = skel_src.joints[u].parent
    g_parent = rot[parent] if parent >= 0 else rotmath.IDENTITY

    try:
        g0 = rotmath.rotation_between(local_end, target)
    except AntiparallelAmbiguity:
        hint = np.cross(local_end, [1.0, 0.0, 0.0])
        if np.linalg.norm(hint) < 1e-9:
            hint = np.cross(local_end, [0.0, 1.0, 0.0])
        g0 = rotmath.from_axis_angle(hint, np.pi)

    # swivel about the shoulder-hand line to keep the elbow near its source position
    n = target / np.linalg.norm(target)
    e_new = rotmath.rotate(g0, o1)
    e_src = E - S
    a = e_new - np.dot(e_new, n) * n
    b = e_src - np.dot(e_src, n) * n
    if np.linalg.norm(a) > 1e-9 and np.linalg.norm(b) > 1e-9:
        phi = np.arctan2(np.dot(np.cross(a, b), n), np.dot(a, b))
        g_upper = rotmath.mul(rotmath.from_axis_angle(n, phi), g0)
    else:
        g_upper = g0
    adjusted = rotmath.mul(rotmath.conj(g_parent), g_upper)

    reach = np.linalg.norm(o1) + np.linalg.norm(o2)
    if np.linalg.norm(target) > reach + 1e-9:
        err = UnreachableTarget(f"end joint is {np.linalg.norm(target):.4f} m away, chain reaches {reach:.4f} m")
        err.solution = (angle, adjusted)
        raise err
    return angle, adjusted


def chain_residual(skel_src, frame, upper, hinge, end, tgt_axis, angle, upper_rot, o1=None, o2=None):
    """Distance between the source end joint and the reduced chain's end joint.

    `o1`/`o2` override the segment offsets to measure the error on a chain with
    different segment lengths.
    """
    pos, rot = forward_kinematics(skel_src, frame)
    if o1 is None:
        o1 = _chain_offset(skel_src, upper, hinge)
    if o2 is None:
        o2 = _chain_offset(skel_src, hinge, end)
    parent = skel_src.joints[upper].parent
    g_parent = rot[parent] if parent >= 0 else rotmath.IDENTITY
    g_upper = rotmath.mul(g_parent, upper_rot)
    g_hinge = rotmath.mul(g_upper, rotmath.from_axis_angle(tgt_axis, angle))
    tip = pos[upper] + rotmath.rotate(g_upper, o1) + rotmath.rotate(g_hinge, o2)
    return float(np.linalg.norm(tip - pos[end]))


def _transfer(tpose_tgt, tpose_src, q_src):
    return rotmath.mul(tpose_tgt, rotmath.relative_rotation(tpose_src, q_src))


def _as_quat(joint, value):
    if joint.dof == "three":
        return value
    if joint.dof == "one":
        return rotmath.from_axis_angle(joint.axis, value)
    return rotmath.IDENTITY.copy()


def retarget_motion(src: MotionSequence, tgt_skel: Skeleton, jmap: JointMap, src_tpose: Frame = None, tgt_tpose: Frame = None):
    """Retarget `src` onto `tgt_skel`; returns (MotionSequence, RetargetReport)."""
    sskel = src.skeleton
    jmap.validate(sskel, tgt_skel)
    src_tpose = src_tpose or extract_tpose(sskel)
    tgt_tpose = tgt_tpose or extract_tpose(tgt_skel)
    report = RetargetReport()

    mapped_src = {s for s, _ in jmap.pairs}
    report.dropped_source_joints = [n for n in sskel.names()[1:] if n not in mapped_src]

    src_of = {}
    for s, ts in jmap.pairs:
        for t in ts:
            src_of[t] = s

    def active(tname):
        if jmap.mode == "root_only":
            return False
        if jmap.mode == "partial":
            return tname in jmap.targets
        return True

    root_name = tgt_skel.joints[0].name
    root_active = jmap.mode == "root_only" or (jmap.mode == "full") or (jmap.mode == "partial" and root_name in jmap.targets)

    # plan per target joint: plain transfer, twist, split, or IK reduction
    plans = []
    reductions = []
    for s, ts in jmap.pairs:
        si = sskel.index(s)
        sj = sskel.joints[si]
        tis = [tgt_skel.index(t) for t in ts]
        if tis == [0]:
            continue
        tis = [ti for ti in tis if active(tgt_skel.joints[ti].name)]
        if not tis:
            continue
        if len(tis) > 1:
            plans.append(("split", si, tis))
            continue
        ti = tis[0]
        tj = tgt_skel.joints[ti]
        if tj.dof == "one" and sj.dof == "three":
            tparent = tj.parent
            sparent = sj.parent
            children = [c for c in sskel.children(si)]
            ok = (
                tparent > 0
                and tgt_skel.joints[tparent].dof == "three"
                and src_of.get(tgt_skel.joints[tparent].name) == sskel.joints[sparent].name
                and sparent > 0
                and children
            )
            if ok:
                end = children[0]
                for c in children:
                    if sskel.joints[c].name in mapped_src:
                        end = c
                        break
                reductions.append((sparent, si, end, tparent, ti))
                continue
            plans.append(("twist", si, [ti]))
        else:
            plans.append(("plain", si, [ti]))

    touched = set()
    frames = []
    reduce_err = {}
    for f in src.frames:
        out = tgt_tpose.copy()
        if root_active:
            out.root_pos = tgt_tpose.root_pos + jmap.root_height_scale * (f.root_pos - src_tpose.root_pos)
            out.root_rot = _transfer(tgt_tpose.root_rot, src_tpose.root_rot, f.root_rot)
            touched.add(0)
        for kind, si, tis in plans:
            sj = sskel.joints[si]
            q_rel = rotmath.relative_rotation(_as_quat(sj, src_tpose.joint_rot[si - 1]), _as_quat(sj, f.joint_rot[si - 1]))
            if kind == "split":
                rest = q_rel
                for ti in tis:
                    tj = tgt_skel.joints[ti]
                    ang = float(rotmath.twist_angle(rest, tj.axis))
                    out.joint_rot[ti - 1] = tgt_tpose.joint_rot[ti - 1] + ang
                    rest = rotmath.mul(rotmath.conj(rotmath.from_axis_angle(tj.axis, ang)), rest)
                    touched.add(ti)
                continue
            ti = tis[0]
            tj = tgt_skel.joints[ti]
            touched.add(ti)
            if tj.dof == "three":
                out.joint_rot[ti - 1] = rotmath.mul(_as_quat(tj, tgt_tpose.joint_rot[ti - 1]), q_rel)
            elif tj.dof == "one":
                out.joint_rot[ti - 1] = tgt_tpose.joint_rot[ti - 1] + float(rotmath.twist_angle(q_rel, tj.axis))
        for sup, shinge, send, tup, thinge in reductions:
            tj = tgt_skel.joints[thinge]
            try:
                ang, up = reduce_to_one_dof(sskel, f, sup, shinge, send, tj.axis, tj.limits)
            except UnreachableTarget as err:
                ang, up = err.solution
            out.joint_rot[thinge - 1] = tgt_tpose.joint_rot[thinge - 1] + ang
            touched.add(thinge)
            if active(tgt_skel.joints[tup].name):
                up_rel = rotmath.relative_rotation(_as_quat(sskel.joints[sup], src_tpose.joint_rot[sup - 1]), up)
                out.joint_rot[tup - 1] = rotmath.mul(tgt_tpose.joint_rot[tup - 1], up_rel)
                touched.add(tup)
            o1 = _chain_offset(tgt_skel, tup, thinge)
            tchildren = tgt_skel.children(thinge)
            o2 = _chain_offset(tgt_skel, thinge, tchildren[0]) if tchildren else _chain_offset(sskel, shinge, send)
            res = chain_residual(sskel, f, sup, shinge, send, tj.axis, ang, up, o1, o2)
            reduce_err[tj.name] = max(reduce_err.get(tj.name, 0.0), res)
        frames.append(out)

    report.reduced_joints = [{"joint": k, "max_residual_hand_error": v} for k, v in reduce_err.items()]
    report.untouched_target_joints = [j.name for i, j in enumerate(tgt_skel.joints) if i not in touched]
    report.frames_processed = len(frames)
    meta = dict(src.meta)
    return MotionSequence(src.fps, tgt_skel, frames, meta), report


def embed_planar(angle):
    """Planar hinge angle -> quaternion about the planar axis."""
    return rotmath.from_axis_angle(PLANAR_AXIS, angle)


def project_sagittal(m: MotionSequence, planar_skel: Skeleton) -> MotionSequence:
    """Reduce every rotation to its twist about the planar (y) axis."""
    sskel = m.skeleton
    src_index = {n: i for i, n in enumerate(sskel.names())}
    frames = []
    for f in m.frames:
        pitch = float(rotmath.twist_angle(f.root_rot, PLANAR_AXIS))
        root_pos = np.array([f.root_pos[0], 0.0, f.root_pos[2]])
        rots = []
        for j in planar_skel.joints[1:]:
            if j.dof == "zero":
                rots.append(0.0)
                continue
            axis = j.axis if j.axis is not None else PLANAR_AXIS
            si = src_index.get(j.name)
            if si is None or si == 0:
                rots.append(0.0 if j.dof == "one" else rotmath.IDENTITY.copy())
                continue
            q = _as_quat(sskel.joints[si], f.joint_rot[si - 1])
            ang = float(rotmath.twist_angle(q, axis))
            rots.append(ang if j.dof == "one" else rotmath.from_axis_angle(axis, ang))
        frames.append(Frame(root_pos, rotmath.pitch_quat(pitch), rots))
    return MotionSequence(m.fps, planar_skel, frames, dict(m.meta))
