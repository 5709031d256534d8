"""Skeleton / motion data model, JSON ingestion, resampling and forward kinematics."""

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from . import rotmath
from .errors import ParseError, SchemaError, ValidationError

ROOT = -1
DOF_KINDS = ("three", "one", "zero")


@dataclass
class Joint:
    name: str
    parent: int
    offset: np.ndarray
    dof: str = "three"
    axis: Optional[np.ndarray] = None
    limits: Optional[tuple] = None


@dataclass
class Skeleton:
    joints: list
    default_height: float = 0.0

    def __post_init__(self):
        self._index = {j.name: i for i, j in enumerate(self.joints)}

    def __len__(self):
        return len(self.joints)

    def index(self, name):
        return self._index[name]

    def names(self):
        return [j.name for j in self.joints]

    def children(self, i):
        return [k for k, j in enumerate(self.joints) if j.parent == i]

    def chain(self, i):
        """Joint indices from the root down to i, inclusive."""
        out = []
        while i != ROOT:
            out.append(i)
            i = self.joints[i].parent
        return out[::-1]

    def validate(self):
        if not self.joints:
            raise ValidationError("skeleton has no joints")
        if self.joints[0].parent != ROOT:
            raise ValidationError("joint 0 must be the root", joint=self.joints[0].name)
        seen = set()
        for i, j in enumerate(self.joints):
            if j.name in seen:
                raise ValidationError("duplicate joint name", joint=j.name)
            seen.add(j.name)
            if i > 0 and j.parent == ROOT:
                raise ValidationError("more than one root joint", joint=j.name)
            if i > 0 and not (0 <= j.parent < i):
                raise ValidationError("parent index must be smaller than child index", joint=j.name)
            if j.dof not in DOF_KINDS:
                raise ValidationError(f"unknown dof {j.dof!r}", joint=j.name)
            if j.dof == "one":
                if j.axis is None or abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
                    raise ValidationError("one-dof axis must be a unit vector", joint=j.name)
            if j.limits is not None and not j.limits[0] < j.limits[1]:
                raise ValidationError("limits must satisfy lo < hi", joint=j.name)
            if not np.all(np.isfinite(j.offset)):
                raise ValidationError("non-finite offset", joint=j.name)


@dataclass
class Frame:
    root_pos: np.ndarray
    root_rot: np.ndarray
    joint_rot: list = field(default_factory=list)

    def copy(self):
        rots = [r.copy() if isinstance(r, np.ndarray) else r for r in self.joint_rot]
        return Frame(self.root_pos.copy(), self.root_rot.copy(), rots)


@dataclass
class MotionSequence:
    fps: float
    skeleton: Skeleton
    frames: list
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.frames)

    @property
    def dt(self):
        return 1.0 / self.fps

    def validate(self):
        if not self.fps > 0:
            raise ValidationError("fps must be positive")
        if not self.frames:
            raise ValidationError("motion needs at least one frame")
        self.skeleton.validate()
        n = len(self.skeleton) - 1
        for fi, f in enumerate(self.frames):
            if len(f.joint_rot) != n:
                raise ValidationError(f"expected {n} joint rotations, got {len(f.joint_rot)}", frame=fi)
            for ji, (j, r) in enumerate(zip(self.skeleton.joints[1:], f.joint_rot), start=1):
                if j.dof == "three":
                    if not isinstance(r, np.ndarray) or r.shape != (4,):
                        raise ValidationError("three-dof joint needs a quaternion", joint=j.name, frame=fi)
                else:
                    if isinstance(r, np.ndarray):
                        raise ValidationError(f"{j.dof}-dof joint needs a scalar angle", joint=j.name, frame=fi)
                    if j.dof == "one" and j.limits is not None and not j.limits[0] <= r <= j.limits[1]:
                        warnings.warn(f"joint {j.name} angle {r:.4f} outside limits at frame {fi}")


def _joint_rotation(joint, value):
    if joint.dof == "three":
        return value
    if joint.dof == "one":
        return rotmath.from_axis_angle(joint.axis, value)
    return rotmath.IDENTITY.copy()


def forward_kinematics(skel: Skeleton, frame: Frame):
    """Global joint positions (J, 3) and rotations (J, 4)."""
    n = len(skel)
    pos = np.zeros((n, 3))
    rot = np.zeros((n, 4))
    pos[0] = frame.root_pos
    rot[0] = frame.root_rot
    for i in range(1, n):
        j = skel.joints[i]
        p = j.parent
        local = _joint_rotation(j, frame.joint_rot[i - 1])
        pos[i] = pos[p] + rotmath.rotate(rot[p], j.offset)
        rot[i] = rotmath.mul(rot[p], local)
    return pos, rot


def extract_tpose(skel: Skeleton) -> Frame:
    rots = []
    for j in skel.joints[1:]:
        rots.append(rotmath.IDENTITY.copy() if j.dof == "three" else 0.0)
    return Frame(np.array([0.0, 0.0, skel.default_height]), rotmath.IDENTITY.copy(), rots)


def _interp_frame(skel, a: Frame, b: Frame, t: float) -> Frame:
    root_pos = (1.0 - t) * a.root_pos + t * b.root_pos
    root_rot = rotmath.slerp(a.root_rot, b.root_rot, t)
    rots = []
    for j, ra, rb in zip(skel.joints[1:], a.joint_rot, b.joint_rot):
        if j.dof == "three":
            rots.append(rotmath.slerp(ra, rb, t))
        else:
            rots.append((1.0 - t) * ra + t * rb)
    return Frame(root_pos, root_rot, rots)


def resample(m: MotionSequence, target_fps: float) -> MotionSequence:
    if not target_fps > 0:
        raise ValueError("target_fps must be positive")
    if target_fps == m.fps:
        return MotionSequence(m.fps, m.skeleton, [f.copy() for f in m.frames], dict(m.meta))
    n_src = len(m.frames)
    duration = (n_src - 1) / m.fps
    n_out = int(math.floor(duration * target_fps + 1e-9)) + 1
    frames = []
    for k in range(n_out):
        x = k * m.fps / target_fps
        i = min(int(math.floor(x + 1e-12)), n_src - 1)
        t = x - i
        if t < 1e-12 or i == n_src - 1:
            frames.append(m.frames[i].copy())
        else:
            frames.append(_interp_frame(m.skeleton, m.frames[i], m.frames[i + 1], t))
    return MotionSequence(float(target_fps), m.skeleton, frames, dict(m.meta))


def joint_velocities(m: MotionSequence):
    """Finite-differenced local angular velocities.

    Returns a list per frame of per-joint values: a 3-vector for three-dof joints,
    a scalar for one-dof joints and 0.0 for fixed joints. Frame 0 uses the forward
    difference, every other frame the backward difference.
    """
    n = len(m.frames)
    out = []
    for fi in range(n):
        a, b = (fi, fi + 1) if fi == 0 else (fi - 1, fi)
        vel = []
        for ji, j in enumerate(m.skeleton.joints[1:]):
            if n == 1:
                vel.append(np.zeros(3) if j.dof == "three" else 0.0)
                continue
            ra, rb = m.frames[a].joint_rot[ji], m.frames[b].joint_rot[ji]
            if j.dof == "three":
                vel.append(rotmath.to_axis_angle(rotmath.relative_rotation(ra, rb)) * m.fps)
            elif j.dof == "one":
                vel.append((rb - ra) * m.fps)
            else:
                vel.append(0.0)
        out.append(vel)
    return out


# ---------------------------------------------------------------- JSON I/O


def _require(d, key, where):
    if not isinstance(d, dict) or key not in d:
        raise SchemaError(f"missing field {key!r} in {where}")
    return d[key]


def _vec(x, n, where):
    try:
        v = np.array(x, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"{where}: expected {n} numbers") from e
    if v.shape != (n,):
        raise SchemaError(f"{where}: expected {n} numbers, got shape {v.shape}")
    return v


def skeleton_from_dict(d) -> Skeleton:
    joints = []
    raw = _require(d, "joints", "skeleton")
    if not isinstance(raw, list):
        raise SchemaError("skeleton.joints must be a list")
    for i, jd in enumerate(raw):
        where = f"skeleton.joints[{i}]"
        name = _require(jd, "name", where)
        parent = _require(jd, "parent", where)
        offset = _vec(_require(jd, "offset", where), 3, where + ".offset")
        dof = _require(jd, "dof", where)
        axis = None
        if dof == "one":
            axis = _vec(_require(jd, "axis", where), 3, where + ".axis")
        limits = jd.get("limits")
        if limits is not None:
            limits = tuple(float(x) for x in _vec(limits, 2, where + ".limits"))
        if not isinstance(parent, int):
            raise SchemaError(f"{where}.parent must be an integer")
        joints.append(Joint(str(name), parent, offset, dof, axis, limits))
    skel = Skeleton(joints, float(_require(d, "default_height", "skeleton")))
    skel.validate()
    return skel


def skeleton_to_dict(skel: Skeleton) -> dict:
    joints = []
    for j in skel.joints:
        jd = {"name": j.name, "parent": j.parent, "offset": [float(x) for x in j.offset], "dof": j.dof}
        if j.dof == "one":
            jd["axis"] = [float(x) for x in j.axis]
        if j.limits is not None:
            jd["limits"] = [float(j.limits[0]), float(j.limits[1])]
        joints.append(jd)
    return {"default_height": float(skel.default_height), "joints": joints}


def motion_from_dict(d) -> MotionSequence:
    fps = _require(d, "fps", "motion")
    skel = skeleton_from_dict(_require(d, "skeleton", "motion"))
    raw = _require(d, "frames", "motion")
    if not isinstance(raw, list):
        raise SchemaError("frames must be a list")
    frames = []
    for fi, fd in enumerate(raw):
        where = f"frames[{fi}]"
        root_pos = _vec(_require(fd, "root_pos", where), 3, where + ".root_pos")
        root_rot = _vec(_require(fd, "root_rot", where), 4, where + ".root_rot")
        jr = _require(fd, "joint_rot", where)
        if not isinstance(jr, list):
            raise SchemaError(f"{where}.joint_rot must be a list")
        rots = []
        for ri, r in enumerate(jr):
            if isinstance(r, list):
                rots.append(_vec(r, 4, f"{where}.joint_rot[{ri}]"))
            elif isinstance(r, (int, float)):
                rots.append(float(r))
            else:
                raise SchemaError(f"{where}.joint_rot[{ri}] must be a quaternion or an angle")
        frames.append(Frame(root_pos, root_rot, rots))
    m = MotionSequence(float(fps), skel, frames, dict(d.get("meta", {})))
    m.validate()
    return m


def motion_to_dict(m: MotionSequence) -> dict:
    frames = []
    for f in m.frames:
        frames.append(
            {
                "root_pos": [float(x) for x in f.root_pos],
                "root_rot": [float(x) for x in f.root_rot],
                "joint_rot": [[float(x) for x in r] if isinstance(r, np.ndarray) else float(r) for r in f.joint_rot],
            }
        )
    d = {"fps": float(m.fps), "skeleton": skeleton_to_dict(m.skeleton), "frames": frames}
    if m.meta:
        d["meta"] = m.meta
    return d


def load_motion(path: Union[str, Path]) -> MotionSequence:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from e
    return motion_from_dict(d)


def save_motion(m: MotionSequence, path: Union[str, Path]):
    with open(path, "w") as fh:
        json.dump(motion_to_dict(m), fh)


def load_skeleton(path) -> Skeleton:
    try:
        with open(path) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: {e}") from e
    if "skeleton" in d:
        d = d["skeleton"]
    return skeleton_from_dict(d)
