"""
Planar robot description.

Links rotate about +y. A planar rotation by phi maps (x, z) to
(x cos phi + z sin phi, -x sin phi + z cos phi), matching a quaternion about
+y acting on (x, 0, z).
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ValidationError
from ..motion_io import Joint, Skeleton

Y_AXIS = np.array([0.0, 1.0, 0.0])


@dataclass
class LinkJoint:
    name: str
    kp: float
    kd: float
    torque_limit: float
    limits: tuple = None
    default: float = 0.0
    action_scale: float = 0.5
    continuous: bool = False


@dataclass
class Link:
    name: str
    parent: int
    joint_pos: np.ndarray
    mass: float
    com: np.ndarray
    inertia: float
    contact_points: list = field(default_factory=list)
    joint: LinkJoint = None


@dataclass
class RobotModel:
    name: str
    links: list
    kind: str = "humanoid"
    fixed_base: bool = False
    base_anchor: np.ndarray = field(default_factory=lambda: np.zeros(2))
    default_root: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sites: list = field(default_factory=list)  # (name, link index, local pos)
    end_effectors: list = field(default_factory=list)
    allowed_contacts: list = field(default_factory=list)
    feet: list = field(default_factory=list)

    def __post_init__(self):
        self.validate()
        L = len(self.links)
        self.n_links = L
        self.n_joints = L - 1
        self.n_root = 0 if self.fixed_base else 3
        self.ndof = self.n_root + self.n_joints
        self.parent = np.array([l.parent for l in self.links])
        self.joint_pos = np.array([l.joint_pos for l in self.links])
        self.mass = np.array([l.mass for l in self.links], dtype=np.float64)
        self.com = np.array([l.com for l in self.links], dtype=np.float64)
        self.inertia = np.array([l.inertia for l in self.links], dtype=np.float64)
        # anc[k, l] true when link l is on the chain from the root to k (inclusive)
        self.anc = np.zeros((L, L), dtype=bool)
        for k in range(L):
            i = k
            while i >= 0:
                self.anc[k, i] = True
                i = self.links[i].parent
        joints = [l.joint for l in self.links[1:]]
        self.kp = np.array([j.kp for j in joints], dtype=np.float64)
        self.kd = np.array([j.kd for j in joints], dtype=np.float64)
        self.torque_limit = np.array([j.torque_limit for j in joints], dtype=np.float64)
        self.lo = np.array([j.limits[0] if j.limits else -np.inf for j in joints], dtype=np.float64)
        self.hi = np.array([j.limits[1] if j.limits else np.inf for j in joints], dtype=np.float64)
        self.default_q = np.array([j.default for j in joints], dtype=np.float64)
        self.action_scale = np.array([j.action_scale for j in joints], dtype=np.float64)
        self.continuous = np.array([j.continuous for j in joints], dtype=bool)
        self.contact_link = np.array([k for k, l in enumerate(self.links) for _ in l.contact_points], dtype=np.int64)
        self.contact_local = np.array([p for l in self.links for p in l.contact_points], dtype=np.float64).reshape(-1, 2)
        names = [l.name for l in self.links]
        allowed = {names.index(n) for n in self.allowed_contacts}
        self.contact_allowed = np.array([k in allowed for k in self.contact_link], dtype=bool)
        feet = {names.index(n) for n in self.feet} if self.feet else allowed
        self.contact_is_foot = np.array([k in feet for k in self.contact_link], dtype=bool)
        self.site_index = {s[0]: i for i, s in enumerate(self.sites)}

    def validate(self):
        if not self.links:
            raise ValidationError("robot has no links")
        if self.links[0].parent != -1:
            raise ValidationError("link 0 must be the root", joint=self.links[0].name)
        for i, l in enumerate(self.links):
            if not l.mass > 0:
                raise ValidationError("mass must be positive", joint=l.name)
            if not l.inertia > 0:
                raise ValidationError("inertia must be positive", joint=l.name)
            if i > 0:
                if not 0 <= l.parent < i:
                    raise ValidationError("parent must precede child", joint=l.name)
                if l.joint is None:
                    raise ValidationError("non-root link needs a joint", joint=l.name)
                if l.joint.limits is not None and not l.joint.limits[0] < l.joint.limits[1]:
                    raise ValidationError("limits must satisfy lo < hi", joint=l.joint.name)
        if self.kind not in ("humanoid", "quadruped"):
            raise ValidationError(f"unknown robot kind {self.kind!r}")

    @property
    def joint_names(self):
        return [l.joint.name for l in self.links[1:]]

    @property
    def link_names(self):
        return [l.name for l in self.links]

    def planar_skeleton(self) -> Skeleton:
        """Skeleton whose joints are the root link, each hinge, then each site."""
        joints = [Joint(self.links[0].name, -1, np.zeros(3), "three")]
        for l in self.links[1:]:
            lim = tuple(l.joint.limits) if l.joint.limits and not l.joint.continuous else None
            joints.append(Joint(l.joint.name, l.parent, np.array([l.joint_pos[0], 0.0, l.joint_pos[1]]), "one", Y_AXIS.copy(), lim))
        for name, link, pos in self.sites:
            joints.append(Joint(name, link, np.array([pos[0], 0.0, pos[1]]), "zero"))
        height = float(self.base_anchor[1]) if self.fixed_base else float(self.default_root[1])
        return Skeleton(joints, height)

    def ee_skeleton_names(self):
        return list(self.end_effectors)

    def to_dict(self):
        links = []
        for l in self.links:
            d = {
                "name": l.name,
                "parent": None if l.parent < 0 else self.links[l.parent].name,
                "mass": l.mass,
                "com": list(map(float, l.com)),
                "inertia": l.inertia,
                "contact_points": [list(map(float, p)) for p in l.contact_points],
            }
            if l.parent >= 0:
                d["joint_pos"] = list(map(float, l.joint_pos))
                j = l.joint
                d["joint"] = {
                    "name": j.name,
                    "kp": j.kp,
                    "kd": j.kd,
                    "torque_limit": j.torque_limit,
                    "limits": list(j.limits) if j.limits else None,
                    "default": j.default,
                    "action_scale": j.action_scale,
                    "continuous": j.continuous,
                }
            links.append(d)
        return {
            "name": self.name,
            "kind": self.kind,
            "fixed_base": self.fixed_base,
            "base_anchor": list(map(float, self.base_anchor)),
            "default_root": list(map(float, self.default_root)),
            "links": links,
            "sites": [{"name": n, "link": self.links[k].name, "pos": list(map(float, p))} for n, k, p in self.sites],
            "end_effectors": list(self.end_effectors),
            "allowed_contacts": list(self.allowed_contacts),
            "feet": list(self.feet),
        }


def model_from_dict(d) -> RobotModel:
    links = []
    names = []
    for ld in d["links"]:
        parent = -1 if ld.get("parent") is None else names.index(ld["parent"])
        joint = None
        if parent >= 0:
            jd = ld["joint"]
            lim = jd.get("limits")
            joint = LinkJoint(
                name=jd["name"],
                kp=float(jd["kp"]),
                kd=float(jd["kd"]),
                torque_limit=float(jd["torque_limit"]),
                limits=tuple(map(float, lim)) if lim else None,
                default=float(jd.get("default", 0.0)),
                action_scale=float(jd.get("action_scale", 0.5)),
                continuous=bool(jd.get("continuous", False)),
            )
        links.append(
            Link(
                name=ld["name"],
                parent=parent,
                joint_pos=np.array(ld.get("joint_pos", [0.0, 0.0]), dtype=np.float64),
                mass=float(ld["mass"]),
                com=np.array(ld.get("com", [0.0, 0.0]), dtype=np.float64),
                inertia=float(ld["inertia"]),
                contact_points=[np.array(p, dtype=np.float64) for p in ld.get("contact_points", [])],
                joint=joint,
            )
        )
        names.append(ld["name"])
    sites = [(s["name"], names.index(s["link"]), np.array(s["pos"], dtype=np.float64)) for s in d.get("sites", [])]
    return RobotModel(
        name=d.get("name", "robot"),
        links=links,
        kind=d.get("kind", "humanoid"),
        fixed_base=bool(d.get("fixed_base", False)),
        base_anchor=np.array(d.get("base_anchor", [0.0, 0.0]), dtype=np.float64),
        default_root=np.array(d.get("default_root", [0.0, 0.0, 0.0]), dtype=np.float64),
        sites=sites,
        end_effectors=list(d.get("end_effectors", [])),
        allowed_contacts=list(d.get("allowed_contacts", [])),
        feet=list(d.get("feet", [])),
    )


DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def load_model(path_or_name) -> RobotModel:
    """Load a robot JSON; bare names resolve to the packaged robots."""
    p = Path(path_or_name)
    if not p.exists():
        p = DATA_DIR / "robots" / f"{path_or_name}.json"
    with open(p) as fh:
        return model_from_dict(json.load(fh))
