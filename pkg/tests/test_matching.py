import itertools
import time

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mimicrl.errors import NoValidMatching, TooLarge
from mimicrl.matching import (
    Matching,
    ascii_alignment,
    brute_force_matching,
    dp_optimal_matching,
    identity_matching,
    initial_state_matching,
    matched_reward,
    matched_rewards,
    refresh_matching,
    select_matching,
)


def test_diagonal_example():
    m = dp_optimal_matching(np.array([[1.0, 0.0], [0.0, 1.0]]), 0.0)
    assert m.pairs == [(0, 0), (1, 1)] and m.total == 2.0


def test_two_pairs_beat_single():
    m = dp_optimal_matching(np.array([[0.9, 0.1], [0.95, 0.2]]), 0.0)
    assert m.pairs == [(0, 0), (1, 1)]
    assert m.total == pytest.approx(1.1, abs=1e-12)
    assert brute_force_matching(np.array([[0.9, 0.1], [0.95, 0.2]])).total == m.total


def test_skips_unrealistic_frame():
    S = np.array([[0.1, 0.9], [0.2, 0.1]])
    m = dp_optimal_matching(S, 0.0)
    assert m.pairs == [(0, 1)] and m.total == pytest.approx(0.9)
    assert brute_force_matching(S).total == m.total


def test_brute_force_small_cases():
    assert brute_force_matching(np.array([[0.3]])).pairs == [(0, 0)]
    m = brute_force_matching(np.zeros((3, 3)))
    assert m.pairs == [] and m.total == 0.0
    with pytest.raises(TooLarge):
        brute_force_matching(np.zeros((7, 8)))


def test_all_binary_3x3():
    for bits in itertools.product([0.0, 1.0], repeat=9):
        S = np.array(bits).reshape(3, 3)
        assert dp_optimal_matching(S).total == brute_force_matching(S).total


def test_filter_applied_after_optimization():
    S = np.array([[0.04, 0.0], [0.0, 0.9]])
    m = dp_optimal_matching(S, 0.05)
    assert m.pairs == [(1, 1)]
    assert m.total_unfiltered == pytest.approx(0.94)


def test_lexicographic_tie_break():
    m = dp_optimal_matching(np.ones((1, 3)))
    assert m.pairs == [(0, 0)]


@given(st.integers(0, 2**31 - 1))
def test_dp_monotone_in_entries(seed):
    rng = np.random.default_rng(seed)
    S = rng.uniform(size=(rng.integers(1, 7), rng.integers(1, 7)))
    base = dp_optimal_matching(S).total_unfiltered
    i, j = rng.integers(S.shape[0]), rng.integers(S.shape[1])
    S2 = S.copy()
    S2[i, j] += rng.uniform(0, 1)
    assert dp_optimal_matching(S2).total_unfiltered >= base


@given(st.integers(0, 2**31 - 1), st.floats(0.0, 0.5))
def test_structural_monotonicity(seed, min_sim):
    rng = np.random.default_rng(seed)
    S = rng.uniform(size=(rng.integers(1, 12), rng.integers(1, 12)))
    m = dp_optimal_matching(S, min_sim)
    us = [u for u, _ in m.pairs]
    vs = [v for _, v in m.pairs]
    assert us == sorted(set(us)) and vs == sorted(set(vs))
    assert all(S[p] >= min_sim for p in m.pairs)
    r = matched_rewards(m, S, S.shape[1])
    assert np.count_nonzero(r) <= len(m.pairs)
    assert sum(matched_reward(t, m, S) for t in range(S.shape[1])) == pytest.approx(m.total)


def test_invalid_matching_rejected():
    with pytest.raises(ValueError):
        Matching([(0, 1), (1, 1)])


def test_matched_reward_examples():
    S = np.zeros((2, 4))
    S[0, 2] = 0.7
    m = Matching([(0, 2)], 0.7)
    assert [matched_reward(t, m, S) for t in range(4)] == [0.0, 0.0, 0.7, 0.0]
    ident = identity_matching(4, 4, np.ones((4, 4)))
    assert all(matched_reward(t, ident, np.ones((4, 4))) == 1.0 for t in range(4))


def test_initial_state_matching():
    m = initial_state_matching([0.2, 0.4, 0.6, 0.9], n_ref=5)
    assert m.pairs == [(0, 2), (1, 3)]
    assert initial_state_matching([0.1, 0.3], 5).pairs == []
    assert initial_state_matching([1.0, 0.2, 0.3], 2).pairs == [(0, 0), (1, 1)]


def test_refresh_selects_most_pairs():
    five = np.eye(5)
    three = np.zeros((5, 5))
    three[[0, 1, 2], [0, 1, 2]] = 1.0
    mats = [three, five, three]
    best, idx = refresh_matching(lambda k: mats[k], 3)
    assert idx == 1 and len(best) == 5


def test_refresh_identity_on_identical_episodes():
    best, _ = refresh_matching(lambda k: np.eye(6), 4)
    assert best.pairs == [(i, i) for i in range(6)]


def test_refresh_all_empty_keeps_previous():
    prev = identity_matching(3, 3)
    with pytest.warns(UserWarning):
        best, idx = refresh_matching(lambda k: np.zeros((3, 3)), 2, previous=prev)
    assert best is prev and idx == -1
    with pytest.raises(NoValidMatching):
        select_matching([Matching([])])


def test_runtime_300x300():
    S = np.random.default_rng(0).uniform(size=(300, 300))
    dp_optimal_matching(S)
    t = time.perf_counter()
    dp_optimal_matching(S)
    assert time.perf_counter() - t < 0.05


def test_ascii_alignment_diagonal():
    txt = ascii_alignment(identity_matching(4, 4), 4, 4)
    assert txt.splitlines()[1:] == ["#...", ".#..", "..#.", "...#"]


def test_json_roundtrip():
    m = dp_optimal_matching(np.eye(3))
    assert Matching.from_dict(m.to_dict()).pairs == m.pairs
