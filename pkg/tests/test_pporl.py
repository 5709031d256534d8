import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mimicrl.errors import ConfigError, UnknownTask
from mimicrl.genref import generate
from mimicrl.motion_io import save_motion
from mimicrl.pporl.config import PRESETS, TrainConfig, apply_preset, run_config_from_dict
from mimicrl.pporl.ppo import (
    Batch,
    PolicyNet,
    ValueNet,
    augment_critic_obs,
    clipped_surrogate,
    gae,
    gaussian_log_prob,
    normalize_advantages,
    ppo_update,
)
from mimicrl.pporl.rewards import aux_rewards, baseline_task_reward, combined_reward
from mimicrl.pporl.trainer import Trainer, read_metrics


def test_gae_hand_unrolled():
    adv, ret = gae(np.array([1.0, 1.0]), np.array([0.5, 0.5]), np.array([0.0, 1.0]), 0.0, 0.99, 0.95)
    assert adv[1] == pytest.approx(0.5, abs=1e-12)
    assert adv[0] == pytest.approx(1.46525, abs=1e-12)
    np.testing.assert_allclose(ret, adv + 0.5)


def test_gae_lambda_zero_is_td(rng):
    r, v = rng.standard_normal(6), rng.standard_normal(6)
    d = np.zeros(6)
    adv, _ = gae(r, v, d, 0.7, 0.9, 0.0)
    nxt = np.r_[v[1:], 0.7]
    np.testing.assert_allclose(adv, r + 0.9 * nxt - v, atol=1e-15)


def test_gae_zero():
    adv, _ = gae(np.zeros(4), np.zeros(4), np.zeros(4), 0.0)
    assert np.all(adv == 0.0)


def test_surrogate_examples():
    assert clipped_surrogate(1.5, 1.0, 0.2) == pytest.approx(1.2)
    assert clipped_surrogate(0.5, -1.0, 0.2) == pytest.approx(-0.8)
    assert clipped_surrogate(1.0, -0.37, 0.2) == -0.37


@given(st.floats(1.21, 10.0), st.floats(0.01, 10.0))
def test_clipped_never_exceeds_unclipped(ratio, a):
    assert clipped_surrogate(ratio, a, 0.2) <= ratio * a


def test_log_prob_closed_form(rng):
    s2 = 0.05
    for _ in range(100):
        mu, a = rng.standard_normal((2, 3))
        want = sum(-0.5 * np.log(2 * np.pi * s2) - (x - m) ** 2 / (2 * s2) for x, m in zip(a, mu))
        assert abs(gaussian_log_prob(mu, a, s2) - want) < 1e-12


def test_advantage_normalization(rng):
    z = normalize_advantages(rng.standard_normal(1000) * 7 + 3)
    assert abs(z.mean()) < 1e-10 and abs(z.std() - 1.0) < 1e-6


def test_augment_critic_obs_examples():
    feats = np.arange(12.0).reshape(6, 2)
    pairs = [(0, 2), (5, 9)]
    out = augment_critic_obs([0, 9, 10], pairs, feats, 10)
    np.testing.assert_allclose(out[0], [0, 1, 0.2])
    np.testing.assert_allclose(out[1], [10, 11, 0.0])
    np.testing.assert_allclose(out[2], [10, 11, 0.0])
    np.testing.assert_allclose(augment_critic_obs([3], [], feats, 10)[0], [10, 11, 0.0])


def test_combined_reward_examples():
    assert combined_reward(0.6931, 0.7) == pytest.approx(1.3931)
    assert combined_reward(0.6931, 0.7, lam_me=0.0) == pytest.approx(0.6931)
    assert combined_reward(0.6931, 0.7, lam_adv=0.0) == pytest.approx(0.7)
    aux = np.array([[-1.0, 0, 0, 0, 0, -2.0]])
    assert combined_reward(0.0, 0.0, aux, aux_weights={"pl": 0.5, "slip": 0.25})[0] == pytest.approx(-1.0)


def aux_case(**kw):
    base = dict(q=np.zeros((1, 2)), joint_acc=np.zeros((1, 2)), action=np.zeros((1, 2)), prev_action=np.zeros((1, 2)),
                torque=np.zeros((1, 2)), disallowed_contacts=np.zeros(1), slip_sq=np.zeros(1), lo=np.full(2, -1.0), hi=np.full(2, 1.0), margin=0.05)
    base.update(kw)
    return aux_rewards(**base)[0]


def test_aux_examples():
    assert np.all(aux_case() == 0.0)
    r = aux_case(q=np.array([[1.05, 0.0]]))
    assert r[0] == pytest.approx(-0.01)
    assert aux_case(slip_sq=np.array([0.3**2]))[5] == pytest.approx(-0.09)
    assert aux_case(disallowed_contacts=np.array([2]))[4] == -2.0
    assert aux_case(action=np.array([[0.1, 0.2]]))[3] == pytest.approx(-0.05)


def test_baseline_task_rewards():
    assert baseline_task_reward("RunBackward", {"velocity": [-1.2, 0.0], "heading": [1.0, 0.0]}) == pytest.approx(1.2)
    assert baseline_task_reward("Kick", {"foot_height": 0.5}, [0.1, 0.4]) == pytest.approx(0.1)
    assert baseline_task_reward("Kick", {"foot_height": 0.45}, [0.1, 0.4, 0.5]) == 0.0
    assert baseline_task_reward("RunBackward", {"velocity": [0.0, 0.0]}) == 0.0
    assert baseline_task_reward("Kick", {"foot_height": 0.2}, [0.2, 0.2]) == 0.0
    with pytest.raises(UnknownTask):
        baseline_task_reward("Fly", {})


def test_presets():
    assert apply_preset(TrainConfig(), "gailfo").lam_me == 0.0
    assert apply_preset(TrainConfig(), "state_err").lam_adv == 0.0
    p = apply_preset(TrainConfig(), "fullscale")
    assert (p.n_envs, p.lr, p.minibatch) == (4096, 5e-5, 32768)
    assert set(PRESETS) >= {"desk", "fullscale", "gailfo", "state_err", "safety"}
    with pytest.raises(ConfigError):
        apply_preset(TrainConfig(), "nope")
    with pytest.raises(ConfigError):
        TrainConfig(gamma=1.5)
    with pytest.raises(ConfigError):
        run_config_from_dict({"robot": "squat3", "bogus": 1})


def test_explicit_keys_beat_preset():
    run = run_config_from_dict({"robot": "squat3", "preset": "gailfo", "rewards": {"lam_me": 0.3}})
    assert run.train.lam_me == 0.3


def test_ppo_update_reduces_policy_loss(rng):
    pol = PolicyNet(3, 2, (16,), rng=rng, lr=1e-3)
    val = ValueNet(3, (16,), rng=rng, lr=1e-3)
    obs = rng.standard_normal((256, 3))
    a, lp, _ = pol.sample(obs, rng)
    adv = a[:, 0] - a[:, 1]
    batch = Batch(obs, obs, a, lp, adv, adv)
    cfg = TrainConfig(minibatch=64, epochs=4)
    stats = ppo_update(batch, pol, val, cfg, rng)
    assert stats["skipped"] == 0 and np.isfinite(stats["policy_loss"])
    new_lp = pol.log_prob(pol.mean(obs), a)
    # surrogate is 0 at ratio 1, so a positive value means the update improved it
    assert np.mean(np.exp(new_lp - lp) * normalize_advantages(adv)) > 0.0


def test_nonfinite_minibatch_skipped_and_lr_halved(rng):
    pol = PolicyNet(3, 1, (8,), rng=rng)
    val = ValueNet(3, (8,), rng=rng)
    obs = rng.standard_normal((16, 3))
    a, lp, _ = pol.sample(obs, rng)
    ret = np.full(16, np.nan)
    state = {}
    stats = ppo_update(Batch(obs, obs, a, lp, np.ones(16), ret), pol, val, TrainConfig(minibatch=8, epochs=1, value_norm=False), rng, state)
    assert stats["skipped"] == 2 and state["lr_halved"]
    assert pol.opt.lr == pytest.approx(1.5e-4)


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("tiny")
    save_motion(generate("squat", frames=31, inject_teleport=True), d / "squat.json")
    return {
        "robot": "squat3",
        "motion": str(d / "squat.json"),
        "seed": 3,
        "sim": {"horizon": 12},
        "ppo": {"n_envs": 4, "steps_per_iter": 8, "minibatch": 16, "epochs": 2, "policy_hidden": [16], "value_hidden": [16], "disc_hidden": [16], "disc_updates": 2},
        "matching": {"refresh_every": 2, "refresh_episodes": 2, "metric": "quadruped"},
    }


def test_zero_iterations_writes_initial_checkpoint(tiny_run, tmp_path):
    tr = Trainer(run_config_from_dict(tiny_run), tmp_path)
    tr.train(0)
    assert (tmp_path / "checkpoint_0000.npz").exists() and (tmp_path / "checkpoint_final.npz").exists()
    assert read_metrics(tmp_path / "metrics.csv") == []
    assert (tmp_path / "metrics.csv").read_text().startswith("# mimicrl")


def test_identical_seeds_identical_metrics(tiny_run, tmp_path):
    texts = []
    for k in range(2):
        out = tmp_path / str(k)
        Trainer(run_config_from_dict(tiny_run), out).train(3)
        texts.append((out / "metrics.csv").read_bytes())
        a = np.load(out / "checkpoint_final.npz")
        texts.append(a["policy.params"].tobytes())
    assert texts[0] == texts[2] and texts[1] == texts[3]


def test_debug_reward_bookkeeping(tiny_run):
    tr = Trainer(run_config_from_dict(tiny_run), debug=True)
    for _ in range(5):
        tr.step()
    assert tr.iteration == 5 and len(tr.matching) > 0


def test_episode_matching_mode(tiny_run):
    d = dict(tiny_run, matching={"mode": "episode", "metric": "quadruped"})
    row = Trainer(run_config_from_dict(d)).step()
    assert row["mean_me_reward"] > 0.0


def test_checkpoint_roundtrip(tiny_run, tmp_path):
    from mimicrl.pporl.trainer import load_checkpoint

    tr = Trainer(run_config_from_dict(tiny_run), tmp_path)
    tr.train(2)
    tr2, meta = load_checkpoint(tmp_path / "checkpoint_final.npz", n_envs=2)
    assert meta["iteration"] == 2 and tr2.env.total_steps == tr.env.total_steps
    np.testing.assert_array_equal(tr2.policy.net.params, tr.policy.net.params)
    assert tr2.matching.pairs == tr.matching.pairs
