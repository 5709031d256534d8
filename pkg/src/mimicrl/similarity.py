"""
State similarity Sim(y, s) between a reference state y and a robot state s.

Descriptors are stored flat so whole similarity matrices can be evaluated
with broadcasting. Layout per descriptor:

    [joint rotations | joint velocities | ee positions rel. root | root pos (3) | root quat (4)]

Three-dof joints contribute a quaternion (4) and an angular velocity (3);
one-dof joints contribute one angle and one rate.
"""

from dataclasses import dataclass, field, asdict

import numpy as np

from . import rotmath
from .errors import DimMismatch
from .motion_io import MotionSequence, forward_kinematics, joint_velocities


@dataclass(frozen=True)
class SimWeights:
    w_pose: float = 0.65
    w_vel: float = 0.1
    w_ee: float = 0.15
    w_root: float = 0.1
    k_pose: float = 2.0
    k_vel: float = 0.1
    k_ee: float = 40.0
    k_root: float = 10.0
    w_rot_gate: float = 0.8
    w_rot_bias: float = 0.2

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(v) for k, v in (d or {}).items()})

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class Layout:
    kinds: tuple  # "three" / "one" per non-fixed joint
    n_ee: int

    @property
    def n_rot(self):
        return sum(4 if k == "three" else 1 for k in self.kinds)

    @property
    def n_vel(self):
        return sum(3 if k == "three" else 1 for k in self.kinds)

    @property
    def size(self):
        return self.n_rot + self.n_vel + 3 * self.n_ee + 7

    @property
    def rot(self):
        return slice(0, self.n_rot)

    @property
    def vel(self):
        return slice(self.n_rot, self.n_rot + self.n_vel)

    @property
    def ee(self):
        a = self.n_rot + self.n_vel
        return slice(a, a + 3 * self.n_ee)

    @property
    def root_pos(self):
        a = self.n_rot + self.n_vel + 3 * self.n_ee
        return slice(a, a + 3)

    @property
    def root_rot(self):
        a = self.n_rot + self.n_vel + 3 * self.n_ee + 3
        return slice(a, a + 4)

    @property
    def root_x(self):
        return self.n_rot + self.n_vel + 3 * self.n_ee

    def quat_slices(self):
        out = []
        off = 0
        for k in self.kinds:
            if k == "three":
                out.append(slice(off, off + 4))
                off += 4
            else:
                off += 1
        return out

    def feature_mask(self):
        """Boolean mask dropping absolute root x (used for discriminator / critic features)."""
        m = np.ones(self.size, dtype=bool)
        m[self.root_x] = False
        return m


@dataclass
class StateDescriptor:
    joint_rot: list
    joint_vel: list
    ee_rel_pos: np.ndarray
    root_pos: np.ndarray
    root_rot: np.ndarray
    layout: Layout = field(default=None)

    def flat(self):
        parts = []
        for r in self.joint_rot:
            parts.append(np.atleast_1d(rotmath.canonicalize(r) if np.ndim(r) == 1 else np.float64(r)))
        for v in self.joint_vel:
            parts.append(np.atleast_1d(np.asarray(v, dtype=np.float64)))
        parts.append(np.asarray(self.ee_rel_pos, dtype=np.float64).ravel())
        parts.append(np.asarray(self.root_pos, dtype=np.float64))
        parts.append(rotmath.canonicalize(self.root_rot))
        return np.concatenate(parts)

    def infer_layout(self):
        kinds = tuple("three" if np.ndim(r) == 1 else "one" for r in self.joint_rot)
        return Layout(kinds, int(np.asarray(self.ee_rel_pos).reshape(-1, 3).shape[0]))


def canonicalize_flat(x, layout: Layout):
    """Canonicalize every quaternion block of flat descriptor(s)."""
    x = np.array(x, dtype=np.float64, copy=True)
    for s in layout.quat_slices() + [layout.root_rot]:
        x[..., s] = rotmath.canonicalize(x[..., s])
    return x


def _terms(y, s, layout: Layout):
    """Squared-difference sums for pose, velocity, ee, root; broadcast over leading dims."""
    d = s - y
    pose = np.sum(d[..., layout.rot] ** 2, axis=-1)
    vel = np.sum(d[..., layout.vel] ** 2, axis=-1)
    ee = np.sum(d[..., layout.ee] ** 2, axis=-1)
    root = np.sum(d[..., layout.root_pos] ** 2, axis=-1)
    return pose, vel, ee, root


def _inner(y, s, layout, w: SimWeights):
    pose, vel, ee, root = _terms(y, s, layout)
    return (
        w.w_pose * np.exp(-w.k_pose * pose)
        + w.w_vel * np.exp(-w.k_vel * vel)
        + w.w_ee * np.exp(-w.k_ee * ee)
        + w.w_root * np.exp(-w.k_root * root)
    )


def sim_flat(y, s, layout: Layout, weights: SimWeights = None, metric="humanoid"):
    """Similarity for canonicalized flat descriptors (broadcasting)."""
    w = weights or SimWeights()
    y = np.asarray(y, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if y.shape[-1] != layout.size or s.shape[-1] != layout.size:
        raise DimMismatch(f"descriptor size {y.shape[-1]}/{s.shape[-1]} != {layout.size}")
    inner = _inner(y, s, layout, w)
    if metric == "humanoid":
        return inner
    if metric == "quadruped":
        r_rot = np.maximum(0.0, np.sum(y[..., layout.root_rot] * s[..., layout.root_rot], axis=-1))
        return w.w_rot_gate * r_rot * inner + w.w_rot_bias * r_rot
    raise ValueError(f"unknown similarity metric {metric!r}")


def _check_pair(y: StateDescriptor, s: StateDescriptor):
    ly, ls = y.infer_layout(), s.infer_layout()
    if ly != ls:
        raise DimMismatch(f"descriptor layouts differ: {ly} vs {ls}")
    fy, fs = y.flat(), s.flat()
    if fy.shape != fs.shape:
        raise DimMismatch("descriptor sizes differ")
    return fy, fs, ly


def sim_humanoid(y: StateDescriptor, s: StateDescriptor, weights: SimWeights = None):
    fy, fs, layout = _check_pair(y, s)
    return float(sim_flat(fy, fs, layout, weights, "humanoid"))


def sim_quadruped(y: StateDescriptor, s: StateDescriptor, weights: SimWeights = None):
    fy, fs, layout = _check_pair(y, s)
    return float(sim_flat(fy, fs, layout, weights, "quadruped"))


def similarity_matrix(ref, traj, layout: Layout, weights: SimWeights = None, metric="humanoid"):
    """Entry (i, j) = Sim(ref[i], traj[j]) for flat descriptor arrays."""
    ref = np.atleast_2d(np.asarray(ref, dtype=np.float64))
    traj = np.atleast_2d(np.asarray(traj, dtype=np.float64))
    return sim_flat(ref[:, None, :], traj[None, :, :], layout, weights, metric)


def motion_layout(m: MotionSequence, end_effectors):
    kinds = tuple(j.dof for j in m.skeleton.joints[1:] if j.dof != "zero")
    return Layout(kinds, len(end_effectors))


def motion_descriptors(m: MotionSequence, end_effectors):
    """Flat canonicalized descriptors for every frame of a motion; returns (array, layout)."""
    skel = m.skeleton
    ee_idx = [skel.index(n) for n in end_effectors]
    layout = motion_layout(m, end_effectors)
    vels = joint_velocities(m)
    out = np.zeros((len(m.frames), layout.size))
    for fi, f in enumerate(m.frames):
        pos, _ = forward_kinematics(skel, f)
        rots, vs = [], []
        for j, r, v in zip(skel.joints[1:], f.joint_rot, vels[fi]):
            if j.dof == "zero":
                continue
            rots.append(rotmath.canonicalize(r) if j.dof == "three" else np.array([r]))
            vs.append(np.asarray(v, dtype=np.float64).reshape(-1))
        ee = (pos[ee_idx] - f.root_pos).ravel() if ee_idx else np.zeros(0)
        out[fi] = np.concatenate(rots + vs + [ee, f.root_pos, rotmath.canonicalize(f.root_rot)])
    return out, layout
