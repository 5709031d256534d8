"""Vectorized planar environments: reset, step, termination, observations, traces."""

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .. import rotmath
from ..errors import ConfigError, NonFiniteState
from ..similarity import Layout
from .dynamics import ContactParams, Dynamics, PhysParams
from .model import RobotModel
from .randomization import PER_STEP, RandomizationSpec, apply_draw, sample_randomization
from .terrain import Terrain, TerrainSpec

log = logging.getLogger(__name__)

CONTINUE, FALLEN, HORIZON = 0, 1, 2
INIT_MODES = ("default", "reference", "mixed")


@dataclass
class SimConfig:
    sim_dt: float = 1.0 / 60.0
    control_decimation: int = 2
    substeps: int = 8
    gravity: float = 9.81
    horizon: int = 300
    terrain: TerrainSpec = field(default_factory=TerrainSpec)
    randomization: RandomizationSpec = field(default_factory=RandomizationSpec)
    contact: ContactParams = field(default_factory=ContactParams)
    allowed_contacts: list = None
    init_mode: str = "default"
    reset_noise: float = 0.02
    obs_time: bool = False

    def __post_init__(self):
        if not self.sim_dt > 0:
            raise ConfigError("sim_dt must be positive")
        if self.control_decimation < 1 or self.substeps < 1:
            raise ConfigError("control_decimation and substeps must be >= 1")
        if self.init_mode not in INIT_MODES:
            raise ConfigError(f"init_mode must be one of {INIT_MODES}")

    @property
    def dt_int(self):
        return self.sim_dt / self.substeps

    @property
    def control_dt(self):
        return self.sim_dt * self.control_decimation

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        if "terrain" in d:
            t = d["terrain"]
            d["terrain"] = TerrainSpec(**t) if isinstance(t, dict) else TerrainSpec(str(t))
        if "randomization" in d:
            d["randomization"] = RandomizationSpec.from_dict(d["randomization"])
        if "contact" in d:
            d["contact"] = ContactParams(**d["contact"])
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown sim keys: {sorted(extra)}")
        return cls(**d)


def check_termination(contacts, allowed, t, horizon):
    """Per-env CONTINUE / FALLEN / HORIZON from contact flags (N, C)."""
    fallen = np.any(contacts & ~allowed[None], axis=1)
    out = np.full(contacts.shape[0], CONTINUE)
    out[np.asarray(t) >= horizon] = HORIZON
    out[fallen] = FALLEN
    return out


def reference_coordinates(model: RobotModel, motion):
    """Generalized coordinates (H+1, ndof) for a planar motion on the model's skeleton."""
    names = motion.skeleton.names()
    idx = []
    for jn in model.joint_names:
        if jn not in names:
            raise ConfigError(f"reference motion lacks joint {jn!r}")
        idx.append(names.index(jn) - 1)
    out = np.zeros((len(motion.frames), model.ndof))
    for k, f in enumerate(motion.frames):
        row = []
        if not model.fixed_base:
            pitch = float(rotmath.twist_angle(f.root_rot, [0.0, 1.0, 0.0]))
            row = [f.root_pos[0], f.root_pos[2], pitch]
        row += [float(f.joint_rot[i]) for i in idx]
        out[k] = row
    return out


class VecEnv:
    def __init__(self, model: RobotModel, cfg: SimConfig, n_envs, seed=0, task="imitate", reference_q=None):
        self.model = model
        self.cfg = cfg
        self.n = int(n_envs)
        self.task = task
        self.dyn = Dynamics(model, cfg.contact)
        self.terrain = Terrain(cfg.terrain)
        self.rngs = [np.random.default_rng([int(seed), i]) for i in range(self.n)]
        self.phys = PhysParams.nominal(model, self.n, cfg.gravity, cfg.contact)
        self.draws = [None] * self.n
        spec = cfg.randomization
        self.noise_rows = {r.target: spec.scaled(r) for r in spec.rows if r.target in PER_STEP}
        self.reference_q = reference_q
        names = model.link_names
        if cfg.allowed_contacts is not None:
            allowed = {names.index(nm) for nm in cfg.allowed_contacts}
            self.allowed = np.array([k in allowed for k in model.contact_link], dtype=bool)
        else:
            self.allowed = model.contact_allowed.copy()
        nj = model.n_joints
        self.q = np.zeros((self.n, model.ndof))
        self.qd = np.zeros((self.n, model.ndof))
        self.t = np.zeros(self.n, dtype=np.int64)
        self.prev_action = np.zeros((self.n, nj))
        self.init_kind = np.zeros(self.n, dtype=np.int64)
        self.total_steps = 0
        self.ee_sites = [model.site_index[e] for e in model.end_effectors]
        self.layout = Layout(("one",) * nj, len(self.ee_sites))
        self.obs_dim = self._obs(self.q, self.qd, np.zeros(self.n)).shape[1]
        self.act_dim = nj

    # ------------------------------------------------------------ state views
    def descriptors(self, q=None, qd=None):
        """Flat similarity descriptors (N, D) in the Layout of similarity.py."""
        q = self.q if q is None else q
        qd = self.qd if qd is None else qd
        m = self.model
        nr = m.n_root
        theta, origin = self.dyn.kinematics(q)
        sites = self.dyn.sites(theta, origin)[:, self.ee_sites]
        root = origin[:, 0]
        rel = sites - root[:, None]
        ee = np.zeros((q.shape[0], len(self.ee_sites), 3))
        ee[..., 0] = rel[..., 0]
        ee[..., 2] = rel[..., 1]
        root3 = np.stack([root[:, 0], np.zeros(q.shape[0]), root[:, 1]], axis=1)
        quat = rotmath.canonicalize(rotmath.pitch_quat(theta[:, 0]))
        return np.concatenate([q[:, nr:], qd[:, nr:], ee.reshape(q.shape[0], -1), root3, quat], axis=1)

    def _obs(self, q, qd, t, noise_rngs=None):
        m = self.model
        nr = m.n_root
        n = q.shape[0]
        theta, origin = self.dyn.kinematics(q)
        sites = self.dyn.sites(theta, origin)[:, self.ee_sites]
        root = origin[:, 0]
        rel = (sites - root[:, None]).reshape(n, -1)
        jq = q[:, nr:]
        cont = m.continuous
        jfeat = [jq[:, ~cont], np.sin(jq[:, cont]), np.cos(jq[:, cont])]
        jvel = qd[:, nr:]
        parts = []
        pitch = theta[:, 0]
        g = self.cfg.gravity
        grav = np.stack([-g * np.sin(pitch), -g * np.cos(pitch)], axis=1)
        if m.kind == "quadruped":
            parts.append(grav)
        elif not m.fixed_base:
            h, _ = self.terrain.height(root[:, 0])
            parts.append(np.stack([root[:, 1] - h, np.sin(pitch), np.cos(pitch), qd[:, 0], qd[:, 1], qd[:, 2]], axis=1))
        parts += jfeat + [jvel, rel]
        if m.kind == "quadruped":
            parts.append(self.prev_action[: n] if n == self.n else np.zeros((n, m.n_joints)))
        if self.cfg.obs_time:
            parts.append((np.asarray(t, dtype=np.float64) / self.cfg.horizon)[:, None])
        obs = np.concatenate(parts, axis=1)
        if noise_rngs is not None:
            obs = self._obs_noise(obs, noise_rngs, grav.shape[1], jq.shape[1], cont)
        return obs

    def _obs_noise(self, obs, rngs, n_grav, nj, cont):
        noise = self.noise_rows
        if not noise:
            return obs
        obs = obs.copy()
        n_jfeat = int((~cont).sum() + 2 * cont.sum())
        for i, rng in enumerate(rngs):
            row = noise.get("obs")
            if row is not None:
                obs[i] += row.sample(rng, obs.shape[1])
            if self.model.kind == "quadruped":
                if "obs_gravity" in noise:
                    obs[i, :n_grav] += noise["obs_gravity"].sample(rng, n_grav)
                if "obs_rot" in noise:
                    obs[i, n_grav : n_grav + n_jfeat] += noise["obs_rot"].sample(rng, n_jfeat)
                if "obs_vel" in noise:
                    a = n_grav + n_jfeat
                    obs[i, a : a + nj] += noise["obs_vel"].sample(rng, nj)
        return obs

    def observe(self, noisy=True):
        return self._obs(self.q, self.qd, self.t, self.rngs if noisy else None)

    # -------------------------------------------------------------- reset
    def _ramp(self):
        rs = self.cfg.randomization.ramp_steps
        return 1.0 if rs <= 0 else min(1.0, self.total_steps / rs)

    def reset(self, idx=None, observe=True):
        """Reset the given env indices (all when None); returns the full observation batch."""
        m = self.model
        idx = np.arange(self.n) if idx is None else np.asarray(idx)
        nr = m.n_root
        for i in idx:
            rng = self.rngs[i]
            draw = sample_randomization(self.cfg.randomization, rng, m)
            self.draws[i] = draw
            self.phys.assign(i, apply_draw(m, draw, self._ramp(), self.cfg.gravity, self.cfg.contact).take(0))
            mode = self.cfg.init_mode
            if mode == "mixed":
                mode = "reference" if rng.uniform() < 0.5 else "default"
            if mode == "reference" and self.reference_q is None:
                raise ConfigError("reference initialization needs a reference motion")
            q = np.zeros(m.ndof)
            qd = np.zeros(m.ndof)
            if mode == "reference":
                q[:] = self.reference_q[0]
                if len(self.reference_q) > 1:
                    qd[:] = (self.reference_q[1] - self.reference_q[0]) / self.cfg.control_dt
                self.init_kind[i] = 1
            else:
                if nr:
                    q[:3] = m.default_root
                q[nr:] = m.default_q
                self.init_kind[i] = 0
            noise = self.cfg.reset_noise
            if noise > 0 and m.n_joints:
                q[nr:] += rng.uniform(-noise, noise, size=m.n_joints)
                qd[nr:] += rng.uniform(-noise, noise, size=m.n_joints)
            q[nr:] = np.clip(q[nr:], self.phys.lo[i], self.phys.hi[i])
            if nr:
                h, _ = self.terrain.height(q[0])
                q[1] += float(h)
            self.q[i] = q
            self.qd[i] = qd
            self.t[i] = 0
            self.prev_action[i] = 0.0
        return self.observe() if observe else None

    # --------------------------------------------------------------- step
    def targets(self, actions):
        m = self.model
        a = np.asarray(actions, dtype=np.float64)
        noise = self.noise_rows.get("action")
        if noise is not None:
            a = a + np.stack([noise.sample(r, m.n_joints) for r in self.rngs])
        tgt = m.default_q + m.action_scale * a
        if m.continuous.any():
            cur = self.q[:, m.n_root :]
            tgt = np.where(m.continuous[None], cur + m.action_scale * a, tgt)
        return tgt

    def step(self, actions):
        """Advance one control step. Done envs are reset; `info` holds pre-reset values."""
        m = self.model
        cfg = self.cfg
        actions = np.asarray(actions, dtype=np.float64)
        if actions.shape != (self.n, m.n_joints):
            raise ValueError(f"actions must have shape {(self.n, m.n_joints)}")
        tgt = self.targets(actions)
        qd_prev = self.qd.copy()
        q, qd, sim = self.dyn.integrate(self.q, self.qd, tgt, self.terrain, self.phys, cfg.dt_int, cfg.control_decimation * cfg.substeps)
        finite = sim["finite"]
        q = np.where(finite[:, None], q, self.q)
        qd = np.where(finite[:, None], qd, 0.0)
        self.q, self.qd = q, qd
        self.t += 1
        self.total_steps += 1
        status = check_termination(sim["contacts"], self.allowed, self.t, cfg.horizon)
        diverged = ~finite
        if diverged.any():
            log.warning("simulation diverged in envs %s; resetting", np.flatnonzero(diverged).tolist())
        fallen = (status == FALLEN) | diverged
        timeout = (status == HORIZON) & ~fallen
        done = fallen | timeout
        obs = self.observe()
        info = {
            "desc": self.descriptors(),
            "terminal_obs": obs,
            "fallen": fallen,
            "timeout": timeout,
            "diverged": diverged,
            "done": done,
            "t": self.t.copy(),
            "torque": sim["torque"],
            "max_abs_torque": sim["max_abs_torque"],
            "contacts": sim["contacts"],
            "disallowed_contacts": np.sum(sim["contacts"] & ~self.allowed[None], axis=1),
            "slip": sim["slip"],
            "joint_acc": (qd[:, m.n_root :] - qd_prev[:, m.n_root :]) / cfg.control_dt,
            "q": q.copy(),
            "qd": qd.copy(),
            "init_kind": self.init_kind.copy(),
        }
        info["task_reward"] = self.task_reward(q, qd)
        self.prev_action = actions.copy()
        if done.any():
            ids = np.flatnonzero(done)
            self.reset(ids, observe=False)
            info["reset_desc"] = self.descriptors()[ids]
            obs = obs.copy()
            fresh = self._obs(self.q[ids], self.qd[ids], self.t[ids], [self.rngs[i] for i in ids])
            obs[ids] = fresh
        return obs, info

    def task_reward(self, q, qd):
        if self.task == "swing_hold":
            nr = self.model.n_root
            return 0.5 * (1.0 - np.cos(q[:, nr]))
        return np.zeros(q.shape[0])

    def step_single(self, action):
        """Single-env convenience step that raises on divergence."""
        obs, info = self.step(np.atleast_2d(action))
        if info["diverged"][0]:
            raise NonFiniteState("simulation diverged")
        return obs, info


def write_trace(path, rows):
    """Write a list of dict rows (same keys) as CSV."""
    if not rows:
        open(path, "w").close()
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        w.writerows(rows)


def trace_row(env: VecEnv, i, info, reward_terms=None):
    m = env.model
    nr = m.n_root
    q = info["q"][i]
    row = {"time": float(info["t"][i] * env.cfg.control_dt)}
    if nr:
        row.update({"root_x": q[0], "root_z": q[1], "pitch": q[2]})
    for k, jn in enumerate(m.joint_names):
        row[f"q_{jn}"] = q[nr + k]
    for k, jn in enumerate(m.joint_names):
        row[f"tau_{jn}"] = info["torque"][i, k]
    for k, c in enumerate(info["contacts"][i]):
        row[f"contact_{k}"] = int(c)
    for k, v in (reward_terms or {}).items():
        row[f"r_{k}"] = float(v)
    return row
