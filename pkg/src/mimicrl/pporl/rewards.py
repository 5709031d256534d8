"""Reward combination, auxiliary safety terms and pure-RL baseline task rewards."""

import numpy as np

from ..errors import UnknownTask
from .config import AUX_TERMS

BASELINE_TASKS = ("RunBackward", "Kick")


def combined_reward(adv, me, aux=None, lam_adv=1.0, lam_me=1.0, aux_weights=None):
    """lam_adv * adv + lam_me * me + sum_k w_k * aux_k (broadcasts over envs)."""
    r = lam_adv * np.asarray(adv, dtype=np.float64) + lam_me * np.asarray(me, dtype=np.float64)
    if aux is not None and aux_weights is not None:
        w = np.array([aux_weights.get(k, 0.0) for k in AUX_TERMS]) if isinstance(aux_weights, dict) else np.asarray(aux_weights)
        r = r + np.asarray(aux, dtype=np.float64) @ w
    return r


def aux_rewards(q, joint_acc, action, prev_action, torque, disallowed_contacts, slip_sq, lo, hi, margin=0.05):
    """Six safety terms per env, ordered as AUX_TERMS; all are <= 0.

    q: joint angles (N, J); joint_acc: (N, J); slip_sq: sum of squared
    tangential foot speeds in contact (N,).
    """
    q = np.atleast_2d(q)
    over = np.maximum(0.0, q - (hi - margin)) + np.maximum(0.0, (lo + margin) - q)
    over = np.where(np.isfinite(over), over, 0.0)
    r_pl = -np.sum(over**2, axis=1)
    r_a = -np.sum(np.atleast_2d(joint_acc) ** 2, axis=1)
    r_tor = -np.sum(np.atleast_2d(torque) ** 2, axis=1)
    r_ar = -np.sum((np.atleast_2d(action) - np.atleast_2d(prev_action)) ** 2, axis=1)
    r_col = -np.asarray(disallowed_contacts, dtype=np.float64).reshape(-1)
    r_slip = -np.asarray(slip_sq, dtype=np.float64).reshape(-1)
    return np.stack([r_pl, r_a, r_tor, r_ar, r_col, r_slip], axis=1)


def baseline_task_reward(task, state, history=None):
    """Pure-RL baseline rewards.

    RunBackward: -(v . heading) where state has "velocity" and "heading".
    Kick: max(0, h_t - max_{s<t} h_s) with state["foot_height"] and the
    history of previous foot heights.
    """
    if task == "RunBackward":
        v = np.asarray(state["velocity"], dtype=np.float64)
        heading = np.asarray(state.get("heading", [1.0, 0.0]), dtype=np.float64)
        return float(-np.dot(v, heading))
    if task == "Kick":
        h = float(state["foot_height"])
        if not history:
            return 0.0
        return max(0.0, h - max(history))
    raise UnknownTask(f"unknown baseline task {task!r}; expected one of {BASELINE_TASKS}")
