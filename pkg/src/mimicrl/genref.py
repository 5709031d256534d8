"""
Scripted reference motions for desk-scale experiments, with optional
injected artifacts (teleport glitches, floating spans).
"""

import json
from pathlib import Path

import numpy as np

from . import __version__, rotmath
from .errors import ConfigError, SchemaError
from .motion_io import Frame, MotionSequence, extract_tpose, load_skeleton
from .simworld.model import DATA_DIR, load_model

TASKS = ("squat", "wave", "walk_back", "kick")
DEFAULT_SKELETON = {"squat": "squat3", "wave": "human3d", "walk_back": "biped5", "kick": "biped5"}
Y = np.array([0.0, 1.0, 0.0])
X = np.array([1.0, 0.0, 0.0])
Z = np.array([0.0, 0.0, 1.0])

SQUAT_PERIOD = 2.5
SQUAT_DEPTH = 0.6
# upper-body lean that keeps the squat3 centre of mass over the ankle
SQUAT_LEAN = 0.9375
TELEPORT_SHIFT = 0.8
FLOAT_RISE = 0.3


def resolve_skeleton(name_or_path):
    """A skeleton file, a packaged skeleton name, or a packaged robot name (its planar skeleton)."""
    p = Path(name_or_path)
    if p.exists():
        try:
            return load_skeleton(p)
        except SchemaError:
            return load_model(p).planar_skeleton()
    sk = DATA_DIR / "skeletons" / f"{name_or_path}.json"
    if sk.exists():
        return load_skeleton(sk)
    rb = DATA_DIR / "robots" / f"{name_or_path}.json"
    if rb.exists():
        return load_model(rb).planar_skeleton()
    raise ConfigError(f"unknown skeleton {name_or_path!r}")


def _need(skel, names, task):
    missing = [n for n in names if n not in skel.names()]
    if missing:
        raise ConfigError(f"task {task!r} needs joints {missing} in the skeleton")


def _set(skel, frame, name, angle, axis=Y):
    i = skel.index(name)
    j = skel.joints[i]
    if j.dof == "one":
        frame.joint_rot[i - 1] = float(angle)
    elif j.dof == "three":
        frame.joint_rot[i - 1] = rotmath.from_axis_angle(axis, angle)


def _squat(skel, t):
    s = 0.5 * (1.0 - np.cos(2.0 * np.pi * t / SQUAT_PERIOD))
    alpha = SQUAT_DEPTH * s
    beta = np.arcsin(SQUAT_LEAN * np.sin(alpha))
    return {"ankle": alpha, "knee": -beta - alpha}, np.zeros(3), 0.0


def _walk_back(skel, t):
    w = 2.0 * np.pi / 1.2
    ph = w * t
    ang = {
        "hip_l": 0.35 * np.sin(ph),
        "hip_r": -0.35 * np.sin(ph),
        "knee_l": 0.5 * max(0.0, np.sin(ph + 0.5 * np.pi)),
        "knee_r": 0.5 * max(0.0, -np.sin(ph + 0.5 * np.pi)),
    }
    return ang, np.array([-0.5 * t, 0.0, 0.0]), 0.0


def _kick(skel, t):
    s = np.exp(-0.5 * ((t - 1.5) / 0.25) ** 2)
    return {"hip_r": -1.1 * s, "knee_r": 0.8 * s * (1.0 - s), "hip_l": 0.0, "knee_l": 0.0}, np.zeros(3), 0.0


def _wave(skel, t):
    return {"r_shoulder": 1.2 + 0.0 * t, "r_elbow": 0.6 + 0.5 * np.sin(2.0 * np.pi * t / 0.8)}, np.zeros(3), 0.0


GENERATORS = {"squat": _squat, "wave": _wave, "walk_back": _walk_back, "kick": _kick}
AXES = {"r_shoulder": X, "r_elbow": Z}


def default_span(n_frames):
    return int(round(0.4 * n_frames)), max(2, int(round(0.1 * n_frames)))


def generate(task, frames=151, fps=30.0, skel="default", inject_teleport=False, inject_float=False, span=None):
    """Scripted motion; artifacts are recorded in meta["artifacts"] as frame spans [start, end)."""
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; expected one of {TASKS}")
    if frames < 1 or not fps > 0:
        raise ConfigError("frames must be >= 1 and fps > 0")
    skel_name = DEFAULT_SKELETON[task] if skel in (None, "default") else skel
    sk = resolve_skeleton(skel_name)
    gen = GENERATORS[task]
    probe, _, _ = gen(sk, 0.0)
    _need(sk, list(probe), task)
    tpose = extract_tpose(sk)
    out = []
    for k in range(frames):
        t = k / fps
        ang, root_delta, pitch = gen(sk, t)
        f = tpose.copy()
        f.root_pos = tpose.root_pos + root_delta
        f.root_rot = rotmath.mul(rotmath.pitch_quat(pitch), tpose.root_rot)
        for name, a in ang.items():
            _set(sk, f, name, a, AXES.get(name, Y))
        out.append(f)
    artifacts = []
    start, length = span if span else default_span(frames)
    end = min(frames, start + length)
    if inject_teleport:
        for f in out[start:end]:
            f.root_pos = f.root_pos + np.array([TELEPORT_SHIFT, 0.0, 0.0])
            f.root_rot = rotmath.mul(rotmath.pitch_quat(np.pi), f.root_rot)
        artifacts.append({"kind": "teleport", "start": start, "end": end, "shift": TELEPORT_SHIFT})
    if inject_float:
        for f in out[start:end]:
            f.root_pos = f.root_pos + np.array([0.0, 0.0, FLOAT_RISE])
        artifacts.append({"kind": "float", "start": start, "end": end, "rise": FLOAT_RISE})
    params = {"task": task, "frames": frames, "fps": fps, "skel": skel_name, "inject_teleport": inject_teleport, "inject_float": inject_float, "span": [start, length]}
    meta = {"generator": "genref", "version": __version__, "params": params, "config_hash": config_hash(params), "artifacts": artifacts}
    m = MotionSequence(float(fps), sk, out, meta)
    m.validate()
    return m


def config_hash(d):
    import hashlib

    return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]
