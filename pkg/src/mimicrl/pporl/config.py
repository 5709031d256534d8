"""
Training and run configuration.

A run config is a YAML file with sections: motion, robot, task, sim,
rewards, ppo, matching, eval. Named presets overlay reward/ppo settings.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from ..errors import ConfigError
from ..similarity import SimWeights
from ..simworld.env import SimConfig

AUX_TERMS = ("pl", "a", "tor", "ar", "col", "slip")


@dataclass
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.2
    lr: float = 3e-4
    epochs: int = 6
    n_envs: int = 64
    steps_per_iter: int = 16
    minibatch: int = 2048
    iterations: int = 300
    sigma2: float = 0.05
    policy_hidden: tuple = (128, 128)
    value_hidden: tuple = (128, 128)
    lam_adv: float = 1.0
    lam_me: float = 1.0
    lam_task: float = 0.0
    aux_weights: dict = field(default_factory=lambda: {k: 0.0 for k in AUX_TERMS})
    limit_margin: float = 0.05
    disc_hidden: tuple = (128, 128)
    disc_lr: float = 3e-4
    disc_updates: int = 6
    w_gp: float = 5.0
    literal_policy_term: bool = False
    critic_augment: bool = True
    value_norm: bool = True

    def __post_init__(self):
        if not (0.0 < self.gamma <= 1.0 and 0.0 <= self.gae_lambda <= 1.0):
            raise ConfigError("gamma must be in (0, 1] and gae_lambda in [0, 1]")
        if not self.clip > 0:
            raise ConfigError("clip must be positive")
        if not self.sigma2 > 0:
            raise ConfigError("sigma2 must be positive")
        if self.n_envs < 1 or self.steps_per_iter < 1 or self.epochs < 1 or self.minibatch < 1:
            raise ConfigError("n_envs, steps_per_iter, epochs and minibatch must be >= 1")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        unknown = set(self.aux_weights) - set(AUX_TERMS)
        if unknown:
            raise ConfigError(f"unknown aux reward terms {sorted(unknown)}")
        self.aux_weights = {k: float(self.aux_weights.get(k, 0.0)) for k in AUX_TERMS}
        self.policy_hidden = tuple(self.policy_hidden)
        self.value_hidden = tuple(self.value_hidden)
        self.disc_hidden = tuple(self.disc_hidden)


@dataclass
class MatchConfig:
    mode: str = "stale"  # stale | episode
    refresh_every: int = 500
    refresh_episodes: int = 8
    min_sim: float = 0.05
    metric: str = "humanoid"
    weights: SimWeights = field(default_factory=SimWeights)

    def __post_init__(self):
        if self.mode not in ("stale", "episode"):
            raise ConfigError("matching.mode must be 'stale' or 'episode'")
        if self.metric not in ("humanoid", "quadruped"):
            raise ConfigError("matching.metric must be 'humanoid' or 'quadruped'")
        if self.refresh_every < 1 or self.refresh_episodes < 1:
            raise ConfigError("refresh_every and refresh_episodes must be >= 1")


PRESETS = {
    "desk": {},
    "fullscale": {"n_envs": 4096, "lr": 5e-5, "minibatch": 32768},
    "gailfo": {"lam_me": 0.0},
    "state_err": {"lam_adv": 0.0},
    "safety": {"aux_weights": {"pl": 1e-3, "a": 1e-6, "tor": 1e-5, "ar": 1e-3, "col": 1e-3, "slip": 1e-3}},
}


def apply_preset(cfg: TrainConfig, name: str) -> TrainConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return replace(cfg, **PRESETS[name])


def _build(cls, d, where):
    d = dict(d or {})
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")
    try:
        return cls(**d)
    except TypeError as e:
        raise ConfigError(f"{where}: {e}") from e


@dataclass
class RunConfig:
    robot: str
    motion: str = None
    task: str = "imitate"
    seed: int = 0
    preset: str = "desk"
    sim: SimConfig = field(default_factory=SimConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    matching: MatchConfig = field(default_factory=MatchConfig)
    eval: dict = field(default_factory=dict)
    source: dict = field(default_factory=dict)
    base_dir: str = "."

    def resolve(self, p):
        """Paths are relative to the config file's directory."""
        if p is None:
            return None
        q = Path(p)
        if q.is_absolute() or q.exists():
            return q
        cand = Path(self.base_dir) / q
        return cand if cand.exists() else q

    def hash(self):
        blob = json.dumps(self.source, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def run_config_from_dict(d, base_dir=".") -> RunConfig:
    d = dict(d or {})
    known = {"robot", "motion", "task", "seed", "preset", "sim", "rewards", "ppo", "matching", "eval"}
    extra = set(d) - known
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    if "robot" not in d:
        raise ConfigError("config needs a 'robot'")
    try:
        sim = SimConfig.from_dict(d.get("sim"))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"sim: {e}") from e
    tdict = dict(d.get("ppo") or {})
    tdict.update(d.get("rewards") or {})
    preset = d.get("preset", "desk")
    train = apply_preset(_build(TrainConfig, tdict, "ppo/rewards"), preset)
    for k, v in tdict.items():  # explicit keys win over the preset
        setattr(train, k, v)
    train.__post_init__()
    mdict = dict(d.get("matching") or {})
    if "weights" in mdict:
        mdict["weights"] = SimWeights.from_dict(mdict["weights"])
    matching = _build(MatchConfig, mdict, "matching")
    return RunConfig(
        robot=str(d["robot"]),
        motion=d.get("motion"),
        task=str(d.get("task", "imitate")),
        seed=int(d.get("seed", 0)),
        preset=preset,
        sim=sim,
        train=train,
        matching=matching,
        eval=dict(d.get("eval") or {}),
        source=d,
        base_dir=str(base_dir),
    )


def load_run_config(path) -> RunConfig:
    p = Path(path)
    try:
        with open(p) as fh:
            d = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"{path}: {e}") from e
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return run_config_from_dict(d, p.parent)


def train_config_dict(cfg: TrainConfig):
    return asdict(cfg)
