"""Transition discriminator, its loss with a zero-centered gradient penalty, and the adversarial reward."""

import numpy as np

from .nn import Adam, Mlp, RunningNorm

EPS = 1e-4


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class Discriminator:
    def __init__(self, in_dim, hidden=(256, 128), w_gp=5.0, lr=3e-4, use_norm=True, literal_policy_term=False, rng=None):
        self.net = Mlp([in_dim, *hidden, 1], rng, out_scale=1.0)
        self.norm = RunningNorm(in_dim) if use_norm else None
        self.w_gp = float(w_gp)
        self.use_norm = use_norm
        self.literal_policy_term = literal_policy_term
        self.opt = Adam(self.net.n_params, lr=lr)

    @property
    def in_dim(self):
        return self.net.in_dim

    def _prep(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return self.norm.normalize(x) if self.norm is not None else x

    def logit(self, x, params=None):
        return self.net(self._prep(x), params)[:, 0]

    def prob(self, x, params=None):
        return np.clip(sigmoid(self.logit(x, params)), EPS, 1.0 - EPS)

    def reward(self, x):
        """Adversarial reward -log(1 - D) per transition row."""
        return -np.log(1.0 - self.prob(x))

    def observe(self, ref_x, pol_x):
        if self.norm is not None:
            self.norm.update(ref_x)
            self.norm.update(pol_x)

    def loss_and_grad(self, ref_x, pol_x, params=None):
        """Returns (loss, grad, info). Inputs are raw transition features."""
        p = self.net.params if params is None else params
        xr = self._prep(ref_x)
        xp = self._prep(pol_x)
        nr, npol = xr.shape[0], xp.shape[0]

        zr, cr = self.net.forward(xr, p)
        zp, cp = self.net.forward(xp, p)
        sr = sigmoid(zr[:, 0])
        sp = sigmoid(zp[:, 0])
        dr = np.clip(sr, EPS, 1.0 - EPS)
        dp = np.clip(sp, EPS, 1.0 - EPS)
        inr = (sr > EPS) & (sr < 1.0 - EPS)
        inp = (sp > EPS) & (sp < 1.0 - EPS)

        ref_term = float(np.mean(-np.log(dr)))
        g_zr = np.where(inr, -(1.0 - sr), 0.0) / nr
        if self.literal_policy_term:
            pol_term = float(np.mean(-(1.0 - np.log(dp))))
            g_zp = np.where(inp, 1.0 - sp, 0.0) / npol
        else:
            pol_term = float(np.mean(-np.log(1.0 - dp)))
            g_zp = np.where(inp, sp, 0.0) / npol

        grad = self.net.backward(cr, g_zr[:, None])[0] + self.net.backward(cp, g_zp[:, None])[0]
        loss = ref_term + pol_term
        gp = 0.0
        if self.w_gp > 0.0:
            gp, g_gp, _ = self.net.input_grad_penalty(xr, p)
            loss += self.w_gp * gp
            grad = grad + self.w_gp * g_gp
        acc = 0.5 * (float(np.mean(dr > 0.5)) + float(np.mean(dp < 0.5)))
        info = {"data_term": ref_term + pol_term, "gp": gp, "accuracy": acc}
        return loss, grad, info

    def update(self, ref_x, pol_x):
        self.observe(ref_x, pol_x)
        loss, grad, info = self.loss_and_grad(ref_x, pol_x)
        self.net.params = self.opt.step(self.net.params, grad)
        info["loss"] = loss
        return info

    def state_dict(self, prefix="disc."):
        d = self.net.state_dict(prefix)
        d.update(self.opt.state_dict(prefix + "adam."))
        if self.norm is not None:
            d.update(self.norm.state_dict(prefix + "norm."))
        return d

    def load_state(self, d, prefix="disc."):
        self.net.load_state(d, prefix)
        self.opt.load_state(d, prefix + "adam.")
        if self.norm is not None:
            self.norm.load_state(d, prefix + "norm.")


def disc_loss(D: Discriminator, ref_pairs, policy_pairs):
    loss, grad, _ = D.loss_and_grad(ref_pairs, policy_pairs)
    return loss, grad


def grad_penalty(D: Discriminator, ref_pairs):
    """Mean squared input-gradient norm of the logit at (normalized) reference inputs."""
    return D.net.input_grad_penalty(D._prep(ref_pairs))[0]


def adv_reward(D: Discriminator, s_prev, s_curr):
    x = np.concatenate([np.atleast_2d(s_prev), np.atleast_2d(s_curr)], axis=-1)
    r = D.reward(x)
    return float(r[0]) if r.shape[0] == 1 else r


def transition_features(desc, mask):
    """Rows (d_t ⊕ d_{t+1}) from a (T+1, D) descriptor array, dropping masked-out columns."""
    f = desc[:, mask]
    return np.concatenate([f[:-1], f[1:]], axis=1)
