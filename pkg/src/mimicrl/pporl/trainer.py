"""
Bulk-synchronous training loop: collect, score, GAE, PPO + discriminator updates,
periodic matching refresh, metrics CSV and checkpoints.
"""

import csv
import json
import logging
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .. import __version__
from ..adversarial import Discriminator
from ..errors import ConfigError, NonFiniteState
from ..matching import Matching, dp_optimal_matching, identity_matching, select_matching
from ..motion_io import load_motion, resample
from ..similarity import sim_flat, similarity_matrix
from ..simworld.env import VecEnv, reference_coordinates, trace_row
from ..simworld.model import load_model
from .config import RunConfig, run_config_from_dict
from .ppo import Batch, PolicyNet, ValueNet, augment_critic_obs, gae, ppo_update
from .rewards import aux_rewards, combined_reward

log = logging.getLogger(__name__)

METRIC_FIELDS = (
    "iteration",
    "mean_return",
    "mean_episode_length",
    "episodes",
    "mean_reward",
    "mean_adv_reward",
    "mean_me_reward",
    "mean_task_reward",
    "disc_accuracy",
    "matched_pairs",
    "policy_loss",
    "value_loss",
    "fallen",
    "diverged",
    "eval_return",
)


class Reference:
    """Reference motion resampled to the control rate, as coordinates and descriptors."""

    def __init__(self, motion, model, control_dt):
        fps = 1.0 / control_dt
        if abs(motion.fps - fps) > 1e-9:
            motion = resample(motion, fps)
        self.motion = motion
        self.q = reference_coordinates(model, motion)
        nr = model.n_root
        qd = np.zeros_like(self.q)
        if len(self.q) > 1:
            qd[:-1, nr:] = np.diff(self.q[:, nr:], axis=0) / control_dt
            qd[-1, nr:] = qd[-2, nr:]
        self.qd = qd
        self.artifacts = list(motion.meta.get("artifacts", []))

    def __len__(self):
        return len(self.q)


def load_reference(run: RunConfig, model):
    if run.motion is None:
        return None
    return Reference(load_motion(run.resolve(run.motion)), model, run.sim.control_dt)


def robot_path(run: RunConfig):
    p = run.resolve(run.robot)
    return p if p.exists() else run.robot


class Trainer:
    def __init__(self, run: RunConfig, out_dir=None, debug=False):
        self.run = run
        self.cfg = run.train
        self.out_dir = Path(out_dir) if out_dir else None
        self.debug = debug
        self.model = load_model(robot_path(run))
        self.ref = load_reference(run, self.model)
        if run.task == "imitate" and self.ref is None:
            raise ConfigError("imitation needs a reference motion")
        seed = run.seed
        self.env = VecEnv(self.model, run.sim, self.cfg.n_envs, seed, run.task, self.ref.q if self.ref else None)
        self.rng = np.random.default_rng([seed, 1000])
        init_rng = np.random.default_rng([seed, 2000])
        self.mask = self.env.layout.feature_mask()
        self.horizon = run.sim.horizon
        if self.ref is not None:
            self.ref_desc = self.env.descriptors(self.ref.q, self.ref.qd)
            self.ref_feat = self.ref_desc[:, self.mask]
            f = self.ref_feat
            self.ref_trans = np.concatenate([f[:-1], f[1:]], axis=1)
            self.matching = identity_matching(len(self.ref), self.horizon + 1)
        else:
            self.ref_desc = self.ref_feat = self.ref_trans = None
            self.matching = Matching([], 0.0, "none", 0.0)
        self.augment = self.cfg.critic_augment and self.ref is not None
        obs_dim = self.env.obs_dim
        critic_dim = obs_dim + (self.ref_feat.shape[1] + 1 if self.augment else 0)
        c = self.cfg
        self.policy = PolicyNet(obs_dim, self.env.act_dim, c.policy_hidden, c.sigma2, init_rng, c.lr)
        self.value = ValueNet(critic_dim, c.value_hidden, init_rng, c.lr, c.value_norm)
        self.disc = None
        if self.ref is not None:
            self.disc = Discriminator(
                self.ref_trans.shape[1], c.disc_hidden, c.w_gp, c.disc_lr, True, c.literal_policy_term, init_rng
            )
        self.iteration = 0
        self.ppo_state = {}
        self.obs = self.env.reset()
        self.desc = self.env.descriptors()
        self.ep_return = np.zeros(self.env.n)
        self.ep_desc = [[d] for d in self.desc]  # per-env episode descriptors (episode mode)
        self._m_lookup = self._lookup(self.matching)
        self.metrics = []
        # debug bookkeeping: per-env episode descriptors, summed me reward, matching version
        self._m_version = 0
        self._dbg = [([d], 0.0, 0) for d in self.desc] if debug else None

    # ------------------------------------------------------------ helpers
    def _lookup(self, m: Matching):
        arr = np.full(self.horizon + 2, -1, dtype=np.int64)
        for u, v in m.pairs:
            if v < arr.size:
                arr[v] = u
        return arr

    def critic_input(self, obs, t):
        if not self.augment:
            return obs
        return np.concatenate([obs, augment_critic_obs(t, self.matching.pairs, self.ref_feat, self.horizon)], axis=1)

    def sim(self, ref_rows, desc):
        m = self.run.matching
        return sim_flat(ref_rows, desc, self.env.layout, m.weights, m.metric)

    # ---------------------------------------------------------- collection
    def collect(self):
        env, c = self.env, self.cfg
        T, N = c.steps_per_iter, env.n
        obs_n = np.zeros((T, N, env.obs_dim))
        critic_n = np.zeros((T, N, self.value.net.in_dim))
        acts = np.zeros((T, N, env.act_dim))
        logps = np.zeros((T, N))
        vals = np.zeros((T, N))
        rew = np.zeros((T, N))
        dones = np.zeros((T, N))
        parts = {k: np.zeros((T, N)) for k in ("adv", "me", "aux", "task")}
        pol_trans = []
        finished, lengths = [], []
        n_fallen = n_div = 0
        episode_mode = self.run.matching.mode == "episode" and self.ref is not None
        seg = [[] for _ in range(N)]  # (k, t) per env for episode-mode credit
        for k in range(T):
            o = self.policy.norm.apply(self.obs, training=True)
            a, lp, _ = self.policy.sample(o, self.rng)
            cx = self.value.norm.apply(self.critic_input(self.obs, env.t), training=True)
            v = self.value.value(cx)
            prev_desc = self.desc
            prev_action = env.prev_action.copy()
            obs2, info = env.step(a)
            desc = info["desc"]
            t_after = info["t"]
            if self.disc is not None:
                tr = np.concatenate([prev_desc[:, self.mask], desc[:, self.mask]], axis=1)
                pol_trans.append(tr)
                adv = self.disc.reward(tr)
            else:
                adv = np.zeros(N)
            me = np.zeros(N)
            if self.ref is not None and not episode_mode:
                u = self._m_lookup[np.minimum(t_after, self._m_lookup.size - 1)]
                hit = u >= 0
                if hit.any():
                    me[hit] = self.sim(self.ref_desc[u[hit]], desc[hit])
            nr = self.model.n_root
            aux = aux_rewards(
                info["q"][:, nr:], info["joint_acc"], a, prev_action, info["torque"],
                info["disallowed_contacts"], info["slip"], env.phys.lo, env.phys.hi, c.limit_margin,
            )
            task = info["task_reward"]
            r = combined_reward(adv, me, aux, c.lam_adv, c.lam_me, c.aux_weights) + c.lam_task * task
            done = info["done"]
            timeout = info["timeout"]
            if timeout.any():
                ids = np.flatnonzero(timeout)
                tx = self.value.norm.normalize(self.critic_input(info["terminal_obs"][ids], t_after[ids]))
                r_boot = r.copy()
                r_boot[ids] += c.gamma * self.value.value(tx)
            else:
                r_boot = r
            obs_n[k], critic_n[k], acts[k], logps[k], vals[k] = o, cx, a, lp, v
            rew[k], dones[k] = r_boot, done
            parts["adv"][k], parts["me"][k], parts["aux"][k], parts["task"][k] = adv, me, aux @ np.array(list(c.aux_weights.values())), task
            self.ep_return += r
            if episode_mode:
                for i in range(N):
                    self.ep_desc[i].append(desc[i])
                    seg[i].append((k, int(t_after[i])))
            if self._dbg is not None and not episode_mode:
                self._debug_track(desc, me, done, t_after)
            for i in np.flatnonzero(done):
                finished.append(self.ep_return[i])
                lengths.append(int(t_after[i]))
                self.ep_return[i] = 0.0
                if episode_mode:
                    self._credit_episode(i, seg[i], rew, parts)
                    seg[i] = []
                    self.ep_desc[i] = []
            n_fallen += int(info["fallen"].sum())
            n_div += int(info["diverged"].sum())
            self.obs = obs2
            self.desc = env.descriptors()
            if self._dbg is not None:
                for i in np.flatnonzero(done):
                    self._dbg[i] = ([self.desc[i]], 0.0, self._m_version)
            if episode_mode and done.any():
                for i in np.flatnonzero(done):
                    self.ep_desc[i] = [self.desc[i]]
        if episode_mode:
            for i in range(N):
                if seg[i]:
                    self._credit_episode(i, seg[i], rew, parts)
        boot_x = self.value.norm.normalize(self.critic_input(self.obs, env.t))
        bootstrap = self.value.value(boot_x)
        adv_est, returns = gae(rew, vals, dones, bootstrap, c.gamma, c.gae_lambda)
        flat = lambda x: x.reshape(T * N, *x.shape[2:])
        batch = Batch(flat(obs_n), flat(critic_n), flat(acts), flat(logps), flat(adv_est), flat(returns))
        stats = {
            "mean_reward": float(np.mean(rew)),
            "mean_adv_reward": float(np.mean(parts["adv"])),
            "mean_me_reward": float(np.mean(parts["me"])),
            "mean_task_reward": float(np.mean(parts["task"])),
            "episodes": len(finished),
            "mean_return": float(np.mean(finished)) if finished else float("nan"),
            "mean_episode_length": float(np.mean(lengths)) if lengths else float("nan"),
            "fallen": n_fallen,
            "diverged": n_div,
        }
        pol = np.concatenate(pol_trans, axis=0) if pol_trans else None
        return batch, pol, stats

    def _debug_track(self, desc, me, done, t_after):
        """Check that an episode's summed me reward equals its matched total similarity."""
        for i in range(self.env.n):
            traj, tot, ver = self._dbg[i]
            traj.append(desc[i])
            tot += me[i]
            self._dbg[i] = (traj, tot, ver)
            if not done[i] or ver != self._m_version:
                continue
            n = int(t_after[i])
            pairs = [(u, v) for u, v in self.matching.pairs if 1 <= v <= n]
            want = sum(float(self.sim(self.ref_desc[u], traj[v])) for u, v in pairs)
            if abs(want - tot) > 1e-9 * max(1.0, abs(want)):
                raise AssertionError(f"env {i}: me reward sum {tot} != matched total {want}")

    def _credit_episode(self, i, seg, rew, parts):
        """Episode mode: DP over the episode so far, matched rewards for this segment's steps."""
        traj = np.array(self.ep_desc[i])
        S = similarity_matrix(self.ref_desc, traj, self.env.layout, self.run.matching.weights, self.run.matching.metric)
        m = dp_optimal_matching(S, self.run.matching.min_sim)
        lookup = m.traj_to_ref()
        for k, t in seg:
            u = lookup.get(t)
            if u is not None:
                val = self.cfg.lam_me * S[u, t]
                rew[k, i] += val
                parts["me"][k, i] += S[u, t]

    # ------------------------------------------------------------ matching
    def rollout_descriptors(self, n_episodes, seed, deterministic=True, sim=None, trace=False):
        """Descriptor trajectories and summaries of n_episodes fresh episodes.

        With `trace`, per-step rows of the first episode are returned in summary["trace"].
        """
        env = VecEnv(self.model, sim or self.run.sim, n_episodes, seed, self.run.task, self.ref.q if self.ref else None)
        rng = np.random.default_rng([seed, 3000])
        env.total_steps = self.env.total_steps  # same randomization ramp as training
        obs = env.reset()
        trajs = [[d] for d in env.descriptors()]
        active = np.ones(n_episodes, dtype=bool)
        fallen = np.zeros(n_episodes, dtype=bool)
        returns = np.zeros(n_episodes)
        task_sum = np.zeros(n_episodes)
        x0 = env.q[:, 0].copy() if self.model.n_root else np.zeros(n_episodes)
        xs = x0.copy()
        rows = []
        while active.any():
            o = self.policy.norm.normalize(obs)
            mu = self.policy.mean(o)
            a = mu if deterministic else mu + np.sqrt(self.policy.sigma2) * rng.standard_normal(mu.shape)
            obs, info = env.step(a)
            if trace and active[0]:
                rows.append(trace_row(env, 0, info, {"task": info["task_reward"][0]}))
            for i in np.flatnonzero(active):
                trajs[i].append(info["desc"][i])
            returns[active] += info["task_reward"][active]
            task_sum[active] += info["task_reward"][active]
            if self.model.n_root:
                xs[active] = info["q"][active, 0]
            fallen |= active & info["fallen"]
            active &= ~info["done"]
        summ = {"fallen": fallen, "length": np.array([len(t) - 1 for t in trajs]), "task_return": task_sum, "dx": xs - x0, "trace": rows}
        return [np.array(t) for t in trajs], summ

    def refresh_matching(self):
        seed = int(self.rng.integers(2**31))
        trajs, _ = self.rollout_descriptors(self.run.matching.refresh_episodes, seed)
        mc = self.run.matching
        cands = [dp_optimal_matching(similarity_matrix(self.ref_desc, tr, self.env.layout, mc.weights, mc.metric), mc.min_sim) for tr in trajs]
        self.matching, _ = select_matching(cands, self.matching)
        self._m_version += 1
        self._m_lookup = self._lookup(self.matching)
        log.info("matching refreshed: %d pairs, total %.3f", len(self.matching), self.matching.total)

    # ------------------------------------------------------------- updates
    def update_discriminator(self, pol):
        accs = []
        n = pol.shape[0]
        for _ in range(self.cfg.disc_updates):
            idx = self.rng.integers(0, self.ref_trans.shape[0], size=n)
            info = self.disc.update(self.ref_trans[idx], pol)
            accs.append(info["accuracy"])
        return float(np.mean(accs))

    def eval_return(self, n_episodes=8, seed=12345):
        _, summ = self.rollout_descriptors(n_episodes, seed, deterministic=False)
        return float(np.mean(summ["task_return"]))

    def step(self):
        batch, pol, stats = self.collect()
        ppo = ppo_update(batch, self.policy, self.value, self.cfg, self.rng, self.ppo_state)
        acc = float("nan")
        if self.disc is not None and pol is not None:
            acc = self.update_discriminator(pol)
        if not np.all(np.isfinite(self.policy.net.params)):
            raise NonFiniteState("policy parameters became non-finite")
        self.iteration += 1
        if self.ref is not None and self.run.matching.mode == "stale" and self.iteration % self.run.matching.refresh_every == 0:
            self.refresh_matching()
        row = {"iteration": self.iteration, "disc_accuracy": acc, "matched_pairs": len(self.matching)}
        row.update(stats)
        row["policy_loss"] = ppo["policy_loss"]
        row["value_loss"] = ppo["value_loss"]
        row["eval_return"] = float("nan")
        return row

    def train(self, iterations=None, eval_every=0, checkpoint_every=0):
        iterations = self.cfg.iterations if iterations is None else iterations
        if self.out_dir:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self.save(self.out_dir / "checkpoint_0000.npz")
        if eval_every:
            self.metrics.append(self._eval_row())
        for _ in range(iterations):
            row = self.step()
            if eval_every and self.iteration % eval_every == 0:
                row["eval_return"] = self.eval_return()
            self.metrics.append(row)
            if self.iteration % 50 == 0:
                log.info("iter %d: reward %.4f me %.4f adv %.4f acc %.3f pairs %d", self.iteration, row["mean_reward"], row["mean_me_reward"], row["mean_adv_reward"], row["disc_accuracy"], row["matched_pairs"])
            if self.out_dir and checkpoint_every and self.iteration % checkpoint_every == 0:
                self.save(self.out_dir / f"checkpoint_{self.iteration:04d}.npz")
        if self.out_dir:
            self.save(self.out_dir / "checkpoint_final.npz")
            self.write_metrics(self.out_dir / "metrics.csv")
        return self.metrics

    def _eval_row(self):
        row = {k: float("nan") for k in METRIC_FIELDS}
        row.update({"iteration": self.iteration, "episodes": 0, "matched_pairs": len(self.matching), "fallen": 0, "diverged": 0})
        row["eval_return"] = self.eval_return()
        return row

    # ---------------------------------------------------------- persistence
    def write_metrics(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(f"# mimicrl {__version__} config {self.run.hash()}\n")
            w = csv.DictWriter(fh, fieldnames=list(METRIC_FIELDS))
            w.writeheader()
            for row in self.metrics:
                w.writerow({k: _fmt(row.get(k)) for k in METRIC_FIELDS})

    def meta(self):
        return {
            "version": __version__,
            "config_hash": self.run.hash(),
            "config": self.run.source,
            "base_dir": self.run.base_dir,
            "iteration": self.iteration,
            "env_steps": self.env.total_steps,
            "matching": self.matching.to_dict(),
            "artifacts": self.ref.artifacts if self.ref else [],
            "train": asdict(self.cfg),
        }

    def state_dict(self):
        d = {}
        d.update(self.policy.state_dict())
        d.update(self.value.state_dict())
        if self.disc is not None:
            d.update(self.disc.state_dict())
        return d

    def save(self, path):
        d = self.state_dict()
        d["meta_json"] = np.array(json.dumps(self.meta(), default=str))
        np.savez(path, **d)

    def load_state(self, d):
        self.policy.load_state(d)
        self.value.load_state(d)
        if self.disc is not None:
            self.disc.load_state(d)
        meta = json.loads(str(d["meta_json"]))
        self.iteration = int(meta["iteration"])
        self.env.total_steps = int(meta.get("env_steps", 0))
        if meta.get("matching"):
            self.matching = Matching.from_dict(meta["matching"])
            self._m_lookup = self._lookup(self.matching)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def load_checkpoint(path, n_envs=None):
    """Rebuild a Trainer from a checkpoint file; returns (trainer, meta)."""
    with np.load(path, allow_pickle=False) as z:
        d = {k: z[k] for k in z.files}
    meta = json.loads(str(d["meta_json"]))
    run = run_config_from_dict(meta["config"], meta.get("base_dir", "."))
    if n_envs is not None:
        run.train.n_envs = int(n_envs)
    tr = Trainer(run)
    tr.load_state(d)
    return tr, meta


def read_metrics(path):
    """Rows of a metrics CSV (the leading provenance comment is skipped)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
