"""
Domain-randomization tables and sampling.

Gaussian rows take (mean, std) and are truncated at 4 std so every row has a
closed interval. Scaling rows multiply a nominal value, additive rows add to
it. Rows flagged `ramp` are blended from their nominal value to the draw over
the first `ramp_steps` environment steps.
"""

from dataclasses import dataclass, field, replace
from math import erf, exp, pi, sqrt

import numpy as np

from .dynamics import ContactParams, PhysParams

TRUNC_SIGMAS = 4.0

TARGETS = (
    "obs",
    "action",
    "gravity",
    "body_mass",
    "trunk_mass",
    "friction",
    "restitution",
    "kd",
    "kp",
    "limit_lo",
    "limit_hi",
    "obs_gravity",
    "obs_rot",
    "obs_vel",
)
PER_STEP = ("obs", "action", "obs_gravity", "obs_rot", "obs_vel")


@dataclass(frozen=True)
class RandRow:
    target: str
    op: str  # additive | scaling
    dist: str  # uniform | gaussian
    a: float  # lower bound or mean
    b: float  # upper bound or std
    ramp: bool = False
    nominal: float = None  # value at zero randomization; defaults to 0 (additive) or 1 (scaling)

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"unknown randomization target {self.target!r}")
        if self.op not in ("additive", "scaling"):
            raise ValueError(f"unknown op {self.op!r}")
        if self.dist not in ("uniform", "gaussian"):
            raise ValueError(f"unknown distribution {self.dist!r}")
        if self.dist == "uniform" and self.b < self.a:
            raise ValueError(f"{self.target}: uniform needs a <= b")
        if self.dist == "gaussian" and self.b < 0:
            raise ValueError(f"{self.target}: std must be >= 0")

    @property
    def interval(self):
        if self.dist == "uniform":
            return (self.a, self.b)
        return (self.a - TRUNC_SIGMAS * self.b, self.a + TRUNC_SIGMAS * self.b)

    @property
    def center(self):
        return 0.5 * (self.a + self.b) if self.dist == "uniform" else self.a

    @property
    def std(self):
        if self.dist == "uniform":
            return (self.b - self.a) / np.sqrt(12.0)
        # std of a normal truncated symmetrically at +-4 sigma
        k = TRUNC_SIGMAS
        z = erf(k / sqrt(2.0))
        return self.b * sqrt(1.0 - 2.0 * k * exp(-k * k / 2.0) / (sqrt(2.0 * pi) * z))

    @property
    def base(self):
        if self.nominal is not None:
            return self.nominal
        return 0.0 if self.op == "additive" else 1.0

    def sample(self, rng, size=None):
        if self.dist == "uniform":
            if self.a == self.b:
                return np.full(size, self.a) if size is not None else self.a
            return rng.uniform(self.a, self.b, size=size)
        if self.b == 0.0:
            return np.full(size, self.a) if size is not None else self.a
        x = rng.normal(self.a, self.b, size=size)
        lo, hi = self.interval
        bad = (x < lo) | (x > hi)
        while np.any(bad):
            n_bad = int(np.sum(bad))
            redraw = rng.normal(self.a, self.b, size=n_bad)
            if np.ndim(x) == 0:
                x = redraw[0]
            else:
                x[bad] = redraw
            bad = (x < lo) | (x > hi)
        return x


def sample_row(row: RandRow, rng, size):
    return row.sample(rng, size)


HUMANOID_TABLE = (
    RandRow("obs", "additive", "gaussian", 0.0, 0.002),
    RandRow("action", "additive", "gaussian", 0.0, 0.02),
    RandRow("gravity", "additive", "gaussian", 0.0, 0.4, ramp=True),
    RandRow("body_mass", "scaling", "uniform", 0.5, 1.5),
    RandRow("friction", "scaling", "uniform", 0.7, 1.3, ramp=True),
    RandRow("restitution", "scaling", "uniform", 0.0, 0.7, ramp=True, nominal=0.0),
    RandRow("kd", "scaling", "uniform", 0.5, 1.5, ramp=True),
    RandRow("kp", "scaling", "uniform", 0.5, 1.5, ramp=True),
    RandRow("limit_lo", "additive", "gaussian", 0.0, 0.01, ramp=True),
    RandRow("limit_hi", "additive", "gaussian", 0.0, 0.01, ramp=True),
)

QUADRUPED_TABLE = (
    RandRow("obs_gravity", "additive", "uniform", -0.05, 0.05),
    RandRow("obs_rot", "additive", "uniform", -0.01, 0.01),
    RandRow("obs_vel", "additive", "uniform", -1.5, 1.5),
    RandRow("trunk_mass", "additive", "uniform", -1.0, 1.0),
    RandRow("friction", "scaling", "uniform", 0.3, 3.0),
    RandRow("kp", "scaling", "uniform", 0.7, 1.3),
    RandRow("kd", "scaling", "uniform", 0.7, 1.3),
)

PRESETS = {"none": (), "humanoid": HUMANOID_TABLE, "quadruped": QUADRUPED_TABLE}


@dataclass
class RandomizationSpec:
    rows: tuple = ()
    ramp_steps: int = 3000
    scale: float = 1.0  # shrinks every interval about its nominal (1 = table values)

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        rows = list(PRESETS[d.pop("preset", "none")])
        for rd in d.pop("rows", []):
            row = RandRow(**rd)
            rows = [r for r in rows if r.target != row.target] + [row]
        return cls(tuple(rows), int(d.pop("ramp_steps", 3000)), float(d.pop("scale", 1.0)))

    def row(self, target):
        for r in self.rows:
            if r.target == target:
                return r
        return None

    def scaled(self, row: RandRow):
        if self.scale == 1.0:
            return row
        if row.dist == "gaussian":
            return replace(row, b=row.b * self.scale)
        base = row.base
        return replace(row, a=base + self.scale * (row.a - base), b=base + self.scale * (row.b - base))


@dataclass
class RandomizationDraw:
    values: dict = field(default_factory=dict)  # physics targets -> sampled arrays
    noise: dict = field(default_factory=dict)  # per-step targets -> RandRow


def _size(target, model):
    if target in ("body_mass",):
        return model.n_links
    if target in ("kp", "kd", "limit_lo", "limit_hi"):
        return model.n_joints
    if target == "gravity":
        return 2
    return 1


def sample_randomization(spec: RandomizationSpec, rng, model) -> RandomizationDraw:
    draw = RandomizationDraw()
    for row in spec.rows:
        row = spec.scaled(row)
        if row.target in PER_STEP:
            draw.noise[row.target] = row
            continue
        draw.values[row.target] = (row, np.atleast_1d(row.sample(rng, _size(row.target, model))))
    return draw


def apply_draw(model, draw: RandomizationDraw, ramp: float, g: float, contact: ContactParams) -> PhysParams:
    """Physical parameters for a single environment under `draw` (leading dim 1)."""
    p = PhysParams.nominal(model, 1, g, contact)

    def val(target):
        if target not in draw.values:
            return None
        row, v = draw.values[target]
        r = ramp if row.ramp else 1.0
        return row.base + r * (v - row.base)

    v = val("body_mass")
    if v is not None:
        p.mass = p.mass * v[None]
        p.inertia = p.inertia * v[None]
    v = val("trunk_mass")
    if v is not None:
        new = max(p.mass[0, 0] + v[0], 1e-3)
        p.inertia[0, 0] *= new / p.mass[0, 0]
        p.mass[0, 0] = new
    v = val("gravity")
    if v is not None:
        p.gravity = p.gravity + v[None]
    v = val("friction")
    if v is not None:
        p.mu = p.mu * v
    v = val("restitution")
    if v is not None:
        p.restitution = np.clip(v, 0.0, 1.0)
    v = val("kp")
    if v is not None:
        p.kp = p.kp * v[None]
    v = val("kd")
    if v is not None:
        p.kd = p.kd * v[None]
    lo = val("limit_lo")
    hi = val("limit_hi")
    if lo is not None:
        p.lo = p.lo + lo[None]
    if hi is not None:
        p.hi = p.hi + hi[None]
    bad = ~(p.lo < p.hi)
    if np.any(bad):
        p.lo = np.where(bad, model.lo[None], p.lo)
        p.hi = np.where(bad, model.hi[None], p.hi)
    return p
