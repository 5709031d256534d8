"""
Fixed-variance Gaussian policy, value function, GAE and the clipped PPO update.

Losses and gradients are exposed as pure functions of a flat parameter
vector so they can be checked against finite differences.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import NonFiniteGradient, NonFiniteLoss
from ..nn import Adam, Mlp, RunningNorm

log = logging.getLogger(__name__)

LOG_2PI = np.log(2.0 * np.pi)


class PolicyNet:
    """a ~ N(mu(x), sigma2 I) with a fixed variance."""

    def __init__(self, obs_dim, act_dim, hidden=(128, 128), sigma2=0.05, rng=None, lr=3e-4):
        self.net = Mlp([obs_dim, *hidden, act_dim], rng, out_scale=0.01)
        self.norm = RunningNorm(obs_dim)
        self.sigma2 = float(sigma2)
        self.opt = Adam(self.net.n_params, lr=lr)

    @property
    def act_dim(self):
        return self.net.out_dim

    def mean(self, obs_n, params=None):
        return self.net(obs_n, params)

    def log_prob(self, mean, action):
        return gaussian_log_prob(mean, action, self.sigma2)

    def sample(self, obs_n, rng):
        mu = self.mean(obs_n)
        a = mu + np.sqrt(self.sigma2) * rng.standard_normal(mu.shape)
        return a, self.log_prob(mu, a), mu

    def state_dict(self, prefix="policy."):
        d = self.net.state_dict(prefix)
        d.update(self.norm.state_dict(prefix + "norm."))
        d.update(self.opt.state_dict(prefix + "adam."))
        d[prefix + "sigma2"] = np.array(self.sigma2)
        return d

    def load_state(self, d, prefix="policy."):
        self.net.load_state(d, prefix)
        self.norm.load_state(d, prefix + "norm.")
        self.opt.load_state(d, prefix + "adam.")
        self.sigma2 = float(d[prefix + "sigma2"])


class ValueNet:
    """V(x) on normalized inputs; optionally predicts returns in normalized units."""

    def __init__(self, in_dim, hidden=(128, 128), rng=None, lr=3e-4, value_norm=True):
        self.net = Mlp([in_dim, *hidden, 1], rng, out_scale=1.0)
        self.norm = RunningNorm(in_dim)
        self.ret_norm = RunningNorm(1, clip=np.inf) if value_norm else None
        self.opt = Adam(self.net.n_params, lr=lr)

    def _scale(self):
        if self.ret_norm is None or self.ret_norm.count < 2:
            return 0.0, 1.0
        return float(self.ret_norm.mean[0]), float(np.sqrt(self.ret_norm.var[0] + 1e-8))

    def value(self, x_n, params=None):
        mu, sd = self._scale()
        return mu + sd * self.net(x_n, params)[:, 0]

    def target(self, returns):
        """Returns mapped into the units the network predicts."""
        mu, sd = self._scale()
        return (returns - mu) / sd

    def state_dict(self, prefix="value."):
        d = self.net.state_dict(prefix)
        d.update(self.norm.state_dict(prefix + "norm."))
        d.update(self.opt.state_dict(prefix + "adam."))
        if self.ret_norm is not None:
            d.update(self.ret_norm.state_dict(prefix + "ret."))
        return d

    def load_state(self, d, prefix="value."):
        self.net.load_state(d, prefix)
        self.norm.load_state(d, prefix + "norm.")
        self.opt.load_state(d, prefix + "adam.")
        if self.ret_norm is not None:
            self.ret_norm.load_state(d, prefix + "ret.")


def gaussian_log_prob(mean, action, sigma2):
    """Exact log density of N(mean, sigma2 I), summed over the last axis."""
    d = np.asarray(action) - np.asarray(mean)
    k = d.shape[-1]
    return -0.5 * np.sum(d * d, axis=-1) / sigma2 - 0.5 * k * (LOG_2PI + np.log(sigma2))


def gae(rewards, values, dones, bootstrap, gamma=0.99, lam=0.95):
    """Advantages and returns over the leading (time) axis.

    rewards, values, dones: (T, ...); bootstrap: V(s_T) with the same trailing shape.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape):
        raise ValueError("rewards, values and dones must have equal shapes")
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    nxt_v = np.asarray(bootstrap, dtype=np.float64)
    nxt_a = np.zeros_like(nxt_v)
    for t in range(T - 1, -1, -1):
        live = 1.0 - dones[t]
        delta = rewards[t] + gamma * nxt_v * live - values[t]
        nxt_a = delta + gamma * lam * live * nxt_a
        adv[t] = nxt_a
        nxt_v = values[t]
    return adv, adv + values


def normalize_advantages(adv):
    adv = np.asarray(adv, dtype=np.float64)
    mu = adv.mean()
    sd = adv.std()
    return (adv - mu) / (sd + 1e-12) if sd > 0 else adv - mu


def clipped_surrogate(ratio, adv, eps):
    """Per-sample min(rho A, clip(rho, 1-eps, 1+eps) A)."""
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv)


def policy_loss_and_grad(policy: PolicyNet, params, obs_n, actions, logp_old, adv, eps):
    """Negative mean clipped surrogate and its gradient wrt policy parameters."""
    mu, cache = policy.net.forward(obs_n, params)
    logp = gaussian_log_prob(mu, actions, policy.sigma2)
    ratio = np.exp(logp - logp_old)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    loss = -float(np.mean(np.minimum(unclipped, clipped)))
    n = obs_n.shape[0]
    active = unclipped <= clipped  # gradient flows only through the unclipped branch
    d_ratio = np.where(active, -adv, 0.0) / n
    d_logp = d_ratio * ratio
    d_mu = d_logp[:, None] * (actions - mu) / policy.sigma2
    grad, _ = policy.net.backward(cache, d_mu)
    info = {"clip_frac": float(np.mean(np.abs(ratio - 1.0) > eps)), "approx_kl": float(np.mean(logp_old - logp))}
    return loss, grad, info


def value_loss_and_grad(value: ValueNet, params, x_n, targets):
    """Unclipped mean squared error on (normalized) targets."""
    y, cache = value.net.forward(x_n, params)
    err = y[:, 0] - targets
    loss = float(np.mean(err * err))
    grad, _ = value.net.backward(cache, (2.0 * err / err.size)[:, None])
    return loss, grad


@dataclass
class Batch:
    obs_n: np.ndarray
    critic_n: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    adv: np.ndarray
    returns: np.ndarray


def ppo_update(batch: Batch, policy: PolicyNet, value: ValueNet, cfg, rng, state=None):
    """Epochs of shuffled minibatch updates. Returns loss statistics.

    On a non-finite loss or gradient the minibatch is skipped and, the first
    time only, both learning rates are halved.
    """
    state = state if state is not None else {}
    n = batch.obs_n.shape[0]
    adv = normalize_advantages(batch.adv)
    if value.ret_norm is not None:
        value.ret_norm.update(batch.returns[:, None])
    targets = value.target(batch.returns)
    mb = min(cfg.minibatch, n)
    stats = {"policy_loss": [], "value_loss": [], "clip_frac": [], "approx_kl": []}
    skipped = 0
    for _ in range(cfg.epochs):
        perm = rng.permutation(n)
        for s in range(0, n, mb):
            idx = perm[s : s + mb]
            try:
                pl, pg, info = policy_loss_and_grad(policy, policy.net.params, batch.obs_n[idx], batch.actions[idx], batch.logp[idx], adv[idx], cfg.clip)
                vl, vg = value_loss_and_grad(value, value.net.params, batch.critic_n[idx], targets[idx])
                if not (np.isfinite(pl) and np.isfinite(vl)):
                    raise NonFiniteLoss(f"non-finite loss (policy {pl}, value {vl})")
                new_p = policy.opt.step(policy.net.params, pg)
                new_v = value.opt.step(value.net.params, vg)
            except (NonFiniteLoss, NonFiniteGradient) as err:
                skipped += 1
                log.warning("PPO minibatch skipped: %s", err)
                if not state.get("lr_halved"):
                    policy.opt.lr *= 0.5
                    value.opt.lr *= 0.5
                    state["lr_halved"] = True
                continue
            policy.net.params = new_p
            value.net.params = new_v
            stats["policy_loss"].append(pl)
            stats["value_loss"].append(vl)
            stats["clip_frac"].append(info["clip_frac"])
            stats["approx_kl"].append(info["approx_kl"])
    out = {k: float(np.mean(v)) if v else float("nan") for k, v in stats.items()}
    out["skipped"] = skipped
    return out


def augment_critic_obs(t, pairs, ref_features, horizon):
    """Features of the next matched reference frame and the normalized time to reach it.

    pairs: sorted (u, v) list. For the smallest v >= t use (ref_features[u], (v - t) / horizon);
    with no future pair fall back to the final reference frame and 0.
    """
    t = np.atleast_1d(np.asarray(t, dtype=np.int64))
    vs = np.array([v for _, v in pairs], dtype=np.int64)
    us = np.array([u for u, _ in pairs], dtype=np.int64)
    k = np.searchsorted(vs, t, side="left") if vs.size else np.zeros(t.size, dtype=np.int64)
    has = k < vs.size
    kk = np.minimum(k, max(vs.size - 1, 0))
    u = np.where(has, us[kk] if vs.size else 0, ref_features.shape[0] - 1)
    dt = np.where(has, (vs[kk] - t) / float(horizon) if vs.size else 0.0, 0.0)
    return np.concatenate([ref_features[u], dt[:, None]], axis=1)
