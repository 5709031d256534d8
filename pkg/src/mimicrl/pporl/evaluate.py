"""
Policy evaluation: survival, matched similarity, artifact exclusion and
per-task success predicates, optionally per terrain.
"""

from dataclasses import replace

import numpy as np

from ..matching import dp_optimal_matching
from ..similarity import similarity_matrix
from ..simworld.terrain import KINDS, TerrainSpec
from .trainer import Trainer

DEFAULT_THRESHOLDS = {"min_similarity": 0.5, "walk_back_distance": 1.0, "kick_height": 0.3, "swing_hold_return": 0.5}


def artifact_frames(artifacts, kind="teleport"):
    out = set()
    for a in artifacts:
        if a.get("kind") == kind:
            out.update(range(int(a["start"]), int(a["end"])))
    return out


def episode_success(task_kind, ep, thresholds):
    """Success predicate on one episode summary (pure function of the recorded trace)."""
    th = {**DEFAULT_THRESHOLDS, **(thresholds or {})}
    if task_kind in ("squat", "wave", "imitate"):
        return (not ep["fallen"]) and ep["similarity"] >= th["min_similarity"]
    if task_kind == "walk_back":
        return (not ep["fallen"]) and -ep["dx"] >= th["walk_back_distance"]
    if task_kind == "kick":
        return ep["max_foot_rise"] >= th["kick_height"]
    if task_kind == "swing_hold":
        return ep["task_return"] / max(ep["length"], 1) >= th["swing_hold_return"]
    raise ValueError(f"no success predicate for task kind {task_kind!r}")


def evaluate_block(tr: Trainer, episodes, seed, terrain=None, deterministic=True):
    run = tr.run
    sim = run.sim if terrain is None else replace(run.sim, terrain=TerrainSpec(terrain, run.sim.terrain.seed))
    if episodes == 0:
        return {"episodes": 0}
    trajs, summ = tr.rollout_descriptors(episodes, seed, deterministic, sim)
    task_kind = run.eval.get("task_kind", run.task)
    eps = []
    tele = artifact_frames(tr.ref.artifacts) if tr.ref is not None else set()
    mc = run.matching
    for i, traj in enumerate(trajs):
        ep = {
            "fallen": bool(summ["fallen"][i]),
            "length": int(summ["length"][i]),
            "task_return": float(summ["task_return"][i]),
            "dx": float(summ["dx"][i]),
            "max_foot_rise": 0.0,
        }
        if tr.ref is not None:
            S = similarity_matrix(tr.ref_desc, traj, tr.env.layout, mc.weights, mc.metric)
            m = dp_optimal_matching(S, mc.min_sim)
            ep["similarity"] = m.total / len(tr.ref)
            ep["pairs"] = len(m)
            ep["excludes_teleport"] = not any(u in tele for u, _ in m.pairs)
            ee = traj[:, tr.env.layout.ee].reshape(len(traj), -1, 3)
            ep["max_foot_rise"] = float(np.max(ee[:, :, 2]) - np.min(ee[:, :, 2])) if ee.size else 0.0
        ep["success"] = bool(episode_success(task_kind, ep, run.eval.get("thresholds")))
        eps.append(ep)
    rep = {
        "episodes": episodes,
        "success_rate": float(np.mean([e["success"] for e in eps])),
        "survival_rate": float(np.mean([(not e["fallen"]) and e["length"] >= run.sim.horizon for e in eps])),
        "mean_episode_length": float(np.mean([e["length"] for e in eps])),
        "mean_task_return": float(np.mean([e["task_return"] for e in eps])),
    }
    if tr.ref is not None:
        rep["mean_similarity"] = float(np.mean([e["similarity"] for e in eps]))
        rep["mean_matched_pairs"] = float(np.mean([e["pairs"] for e in eps]))
        if tele:
            rep["teleport_excluded_rate"] = float(np.mean([e["excludes_teleport"] for e in eps]))
    return rep


def evaluate(tr: Trainer, episodes=100, seed=777, terrains=None, deterministic=True):
    """Report dict; with `terrains` one block per terrain kind ("all" expands to every kind)."""
    if terrains is None:
        return evaluate_block(tr, episodes, seed, None, deterministic)
    if terrains == "all" or terrains == ["all"]:
        terrains = list(KINDS)
    return {"terrains": {t: evaluate_block(tr, episodes, seed, t, deterministic) for t in terrains}}
