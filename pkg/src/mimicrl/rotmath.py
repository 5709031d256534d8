"""
Quaternion and vector helpers.

Quaternions are numpy arrays laid out as (w, x, y, z), right-handed, acting on
column vectors. Every function accepts a single quaternion of shape (4,) or a
batch of shape (..., 4); vectors are (..., 3).
"""

import numpy as np

from .errors import AntiparallelAmbiguity, ZeroVector

IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])

_DRIFT_TOL = 1e-6


def identity(shape=()):
    q = np.zeros(tuple(shape) + (4,))
    q[..., 0] = 1.0
    return q


def normalize(q):
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def conj(q):
    q = np.asarray(q, dtype=np.float64)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def canonicalize(q):
    """Pick the representative with w >= 0 (first nonzero component positive on ties).

    canonicalize(q) and canonicalize(-q) are bitwise identical.
    """
    q = np.asarray(q, dtype=np.float64)
    nz = q != 0.0
    first = np.argmax(nz, axis=-1)
    lead = np.take_along_axis(q, first[..., None], axis=-1)
    sign = np.where(lead < 0.0, -1.0, 1.0)
    # + 0.0 turns any -0.0 into +0.0 so that the result is bitwise unique
    return q * sign + 0.0


def mul(a, b):
    """Hamilton product a ⊗ b (apply b first, then a)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    out = np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )
    n = np.linalg.norm(out, axis=-1, keepdims=True)
    if np.any(np.abs(n - 1.0) > _DRIFT_TOL):
        out = out / n
    return out


quat_mul = mul


def rotate(q, v):
    """Rotate vector(s) v by quaternion(s) q."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    w = q[..., :1]
    u = q[..., 1:]
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def dot(a, b):
    return np.sum(np.asarray(a, dtype=np.float64) * np.asarray(b, dtype=np.float64), axis=-1)


def from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=np.float64)
    angle = np.asarray(angle, dtype=np.float64)
    axis = axis / np.linalg.norm(axis, axis=-1, keepdims=True)
    half = 0.5 * angle[..., None]
    return np.concatenate([np.cos(half), np.sin(half) * axis], axis=-1)


def to_axis_angle(q):
    """Rotation vector (axis * angle) of the shortest-arc representative, angle in [0, pi]."""
    q = canonicalize(q)
    v = q[..., 1:]
    s = np.linalg.norm(v, axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(s, q[..., :1])
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(s > 1e-12, angle / np.where(s > 1e-12, s, 1.0), 2.0)
    return v * scale


def angle_of(q):
    """Rotation angle in [0, pi]."""
    q = canonicalize(q)
    return 2.0 * np.arctan2(np.linalg.norm(q[..., 1:], axis=-1), q[..., 0])


def relative_rotation(a, b):
    """r such that a ⊗ r = b."""
    return mul(conj(a), b)


def rotation_between(u, v):
    """Minimal-angle rotation taking direction u onto direction v."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ZeroVector("rotation_between needs nonzero vectors")
    u = u / nu
    v = v / nv
    d = float(np.dot(u, v))
    if d < -1.0 + 1e-9:
        raise AntiparallelAmbiguity("vectors are antiparallel; supply a hint axis")
    q = np.concatenate([[1.0 + d], np.cross(u, v)])
    return q / np.linalg.norm(q)


def angle_between(u, v):
    """Unsigned angle between two vectors, in [0, pi]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.linalg.norm(u) == 0.0 or np.linalg.norm(v) == 0.0:
        raise ZeroVector("angle_between needs nonzero vectors")
    return float(np.arctan2(np.linalg.norm(np.cross(u, v)), np.dot(u, v)))


def twist_angle(q, axis):
    """Signed angle of the twist of q about `axis` (swing-twist decomposition)."""
    q = canonicalize(q)
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    p = np.sum(q[..., 1:] * axis, axis=-1)
    return 2.0 * np.arctan2(p, q[..., 0])


def swing_twist(q, axis):
    """Split q = swing ⊗ twist with twist about `axis`; returns (swing, twist)."""
    q = canonicalize(q)
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    twist = from_axis_angle(axis, twist_angle(q, axis))
    swing = mul(q, conj(twist))
    return swing, twist


def slerp(a, b, t):
    """Shortest-arc spherical interpolation."""
    a = canonicalize(a)
    b = canonicalize(b)
    d = dot(a, b)
    b = np.where((d < 0.0)[..., None], -b, b)
    d = np.abs(d)
    t = np.asarray(t, dtype=np.float64)[..., None]
    if np.ndim(d) == 0 and d > 1.0 - 1e-12:
        return normalize(a + t * (b - a))
    theta = np.arccos(np.clip(d, -1.0, 1.0))[..., None]
    s = np.sin(theta)
    small = s < 1e-9
    safe = np.where(small, 1.0, s)
    wa = np.where(small, 1.0 - t, np.sin((1.0 - t) * theta) / safe)
    wb = np.where(small, t, np.sin(t * theta) / safe)
    return normalize(wa * a + wb * b)


def pitch_quat(angle):
    """Rotation by `angle` about +y (the planar simulator's hinge axis)."""
    angle = np.asarray(angle, dtype=np.float64)
    half = 0.5 * angle
    z = np.zeros_like(half)
    return np.stack([np.cos(half), z, np.sin(half), z], axis=-1)
