import numpy as np
import pytest
from hypothesis import settings

from mimicrl import rotmath
from mimicrl.motion_io import Frame, Joint, MotionSequence, Skeleton

settings.register_profile("repo", max_examples=60, deadline=None)
settings.load_profile("repo")


def qz(deg):
    return rotmath.from_axis_angle([0.0, 0.0, 1.0], np.radians(deg))


def random_quat(rng):
    return rotmath.normalize(rng.standard_normal(4))


def chain_skeleton(n_links=2, length=1.0, dof="three", axis=(1.0, 0.0, 0.0), height=1.0):
    """Root plus a straight chain along +z with joints every `length` metres."""
    joints = [Joint("root", -1, np.zeros(3), "zero")]
    for k in range(n_links):
        off = np.zeros(3) if k == 0 else np.array([0.0, 0.0, length])
        joints.append(Joint(f"j{k}", k, off, dof, np.array(axis) if dof == "one" else None))
    joints.append(Joint("tip", n_links, np.array([0.0, 0.0, length]), "zero"))
    return Skeleton(joints, height)


def arm_skeleton(l1=0.3, l2=0.25):
    """pelvis -> shoulder (3-dof) -> elbow (3-dof) -> hand, all along +x."""
    joints = [
        Joint("pelvis", -1, np.zeros(3), "zero"),
        Joint("shoulder", 0, np.array([0.0, 0.2, 0.5]), "three"),
        Joint("elbow", 1, np.array([l1, 0.0, 0.0]), "three"),
        Joint("hand", 2, np.array([l2, 0.0, 0.0]), "three"),
    ]
    return Skeleton(joints, 1.0)


def random_frame(skel, rng, scale=1.0):
    rots = []
    for j in skel.joints[1:]:
        if j.dof == "three":
            rots.append(rotmath.from_axis_angle(rng.standard_normal(3), scale * rng.uniform(-np.pi, np.pi)))
        elif j.dof == "one":
            rots.append(float(scale * rng.uniform(-1.5, 1.5)))
        else:
            rots.append(0.0)
    return Frame(rng.standard_normal(3), random_quat(rng), rots)


def random_motion(skel, rng, n_frames=5, fps=30.0):
    return MotionSequence(fps, skel, [random_frame(skel, rng) for _ in range(n_frames)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
