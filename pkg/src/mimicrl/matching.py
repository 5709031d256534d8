"""
Optimal monotone matching between reference frames (rows) and trajectory
states (columns) of a similarity matrix S.

Totals are always accumulated as a right fold S[u0] + (S[u1] + (...)) so
that the DP value and an exhaustive enumeration agree bit for bit.
"""

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NoValidMatching, TooLarge

log = logging.getLogger(__name__)

BRUTE_FORCE_MAX_CELLS = 49


@dataclass
class Matching:
    pairs: list = field(default_factory=list)
    total: float = 0.0
    source: str = "dp"
    total_unfiltered: float = None

    def __post_init__(self):
        self.pairs = [(int(u), int(v)) for u, v in self.pairs]
        self.validate()

    def validate(self):
        for (u0, v0), (u1, v1) in zip(self.pairs, self.pairs[1:]):
            if not (u1 > u0 and v1 > v0):
                raise ValueError(f"matching is not strictly increasing at {(u0, v0)} -> {(u1, v1)}")
        if self.pairs and (self.pairs[0][0] < 0 or self.pairs[0][1] < 0):
            raise ValueError("negative index in matching")

    def __len__(self):
        return len(self.pairs)

    def to_dict(self):
        return {
            "pairs": [list(p) for p in self.pairs],
            "total_similarity": self.total,
            "total_unfiltered": self.total_unfiltered,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d):
        return cls([tuple(p) for p in d["pairs"]], float(d["total_similarity"]), d.get("source", "dp"), d.get("total_unfiltered"))

    def to_json(self):
        return json.dumps(self.to_dict())

    def ref_to_traj(self):
        return dict(self.pairs)

    def traj_to_ref(self):
        return {v: u for u, v in self.pairs}


def fold_total(S, pairs):
    tot = 0.0
    for u, v in reversed(pairs):
        tot = S[u, v] + tot
    return float(tot)


def _suffix_table(S):
    n, m = S.shape
    g = np.zeros((n + 1, m + 1))
    for i in range(n - 1, -1, -1):
        take = S[i] + g[i + 1, 1:]
        best = np.maximum(g[i + 1, :m], take)
        g[i, :m] = np.maximum.accumulate(best[::-1])[::-1]
    return g


def dp_optimal_matching(S, min_sim=0.0):
    """Maximum-total strictly increasing matching; lexicographically smallest on ties.

    Pairs with S[u, v] < min_sim are dropped after optimization.
    """
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or min(S.shape) < 1:
        raise ValueError("similarity matrix must be 2-D and nonempty")
    if not np.all(np.isfinite(S)):
        raise ValueError("similarity matrix must be finite")
    n, m = S.shape
    g = _suffix_table(S)
    pairs = []
    i = j = 0
    while i < n and j < m and g[i, j] > 0.0:
        target = g[i, j]
        found = None
        for u in range(i, n):
            cand = S[u, j:] + g[u + 1, j + 1 :]
            hit = np.flatnonzero(cand == target)
            if hit.size:
                found = (u, j + int(hit[0]))
                break
        if found is None:  # unreachable for a consistent table
            raise RuntimeError("DP reconstruction failed")
        pairs.append(found)
        i, j = found[0] + 1, found[1] + 1
    raw = fold_total(S, pairs)
    kept = [p for p in pairs if S[p] >= min_sim]
    res = Matching(kept, fold_total(S, kept), "dp", raw)
    if not kept:
        log.warning("optimal matching is empty after filtering at %.3f", min_sim)
    return res


def _enumerate(n, m, i, j, prefix):
    yield prefix
    for u in range(i, n):
        for v in range(j, m):
            yield from _enumerate(n, m, u + 1, v + 1, prefix + [(u, v)])


def brute_force_matching(S):
    """Exhaustive maximum over all strictly increasing pair sets (test oracle)."""
    S = np.asarray(S, dtype=np.float64)
    n, m = S.shape
    if n * m > BRUTE_FORCE_MAX_CELLS:
        raise TooLarge(f"{n}x{m} matrix exceeds the enumeration bound of {BRUTE_FORCE_MAX_CELLS} cells")
    best, best_pairs = -np.inf, []
    for pairs in _enumerate(n, m, 0, 0, []):
        tot = fold_total(S, pairs)
        if tot > best:
            best, best_pairs = tot, pairs
    return Matching(best_pairs, best, "brute_force", best)


def matched_reward(t, m: Matching, S):
    """Sim(y_u, s_t) if (u, t) is a matched pair, else 0."""
    for u, v in m.pairs:
        if v == t:
            return float(S[u, v])
    return 0.0


def matched_rewards(m: Matching, S, n_steps):
    """Vector of matched_reward(t) for t in [0, n_steps)."""
    r = np.zeros(n_steps)
    for u, v in m.pairs:
        if v < n_steps:
            r[v] = S[u, v]
    return r


def identity_matching(n_ref, n_traj, S=None):
    k = min(n_ref, n_traj)
    pairs = [(i, i) for i in range(k)]
    tot = fold_total(S, pairs) if S is not None else 0.0
    return Matching(pairs, tot, "identity", tot)


def initial_state_matching(sims_to_y0, n_ref, S=None, threshold=0.5):
    """u_i = i, v_i = i + t0 with t0 the first step whose similarity to y_0 reaches `threshold`."""
    sims = np.asarray(sims_to_y0, dtype=np.float64)
    hits = np.flatnonzero(sims >= threshold)
    if hits.size == 0:
        return Matching([], 0.0, "initial_state", 0.0)
    t0 = int(hits[0])
    k = min(n_ref, len(sims) - t0)
    pairs = [(i, i + t0) for i in range(k)]
    tot = fold_total(S, pairs) if S is not None else 0.0
    return Matching(pairs, tot, "initial_state", tot)


def select_matching(candidates, previous=None):
    """Pick the matching with the most pairs (ties: larger total, then earlier episode)."""
    best = None
    best_idx = -1
    for k, mt in enumerate(candidates):
        if not mt.pairs:
            continue
        if best is None or (len(mt), mt.total) > (len(best), best.total):
            best, best_idx = mt, k
    if best is None:
        if previous is not None:
            warnings.warn("every refreshed matching is empty; keeping the previous matching")
            return previous, -1
        raise NoValidMatching("every episode produced an empty matching")
    return best, best_idx


def refresh_matching(rollout_fn, n_episodes, min_sim=0.05, previous=None):
    """Run `n_episodes` rollouts (rollout_fn(k) -> similarity matrix), DP each, keep the best."""
    cands = [dp_optimal_matching(rollout_fn(k), min_sim) for k in range(n_episodes)]
    return select_matching(cands, previous)


def ascii_alignment(m: Matching, n_ref, n_traj, max_cells=60):
    """Rows = reference frames, columns = trajectory steps, '#' marks matched cells."""
    sr = max(1, int(np.ceil(n_ref / max_cells)))
    st = max(1, int(np.ceil(n_traj / max_cells)))
    rows = (n_ref + sr - 1) // sr
    cols = (n_traj + st - 1) // st
    grid = [["." for _ in range(cols)] for _ in range(rows)]
    for u, v in m.pairs:
        grid[u // sr][v // st] = "#"
    header = f"ref {n_ref} x traj {n_traj} (cell = {sr}x{st})"
    return "\n".join([header] + ["".join(r) for r in grid])
