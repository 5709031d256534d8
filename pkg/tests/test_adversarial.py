import numpy as np
import pytest

from mimicrl.adversarial import EPS, Discriminator, adv_reward, disc_loss, grad_penalty, transition_features


def zero_disc(in_dim=4, **kw):
    D = Discriminator(in_dim, hidden=(5,), use_norm=False, **kw)
    D.net.params[:] = 0.0
    return D


def test_half_probability_data_term():
    D = zero_disc(w_gp=0.0)
    x = np.ones((3, 4))
    loss, _ = disc_loss(D, x, x)
    assert abs(loss - 2 * np.log(2)) < 1e-9


def test_separated_limit():
    # one ReLU unit and a linear head drive the logit to +50 on ref and -50 on policy
    D = Discriminator(1, hidden=(1,), use_norm=False, w_gp=0.0)
    D.net.params[:] = [1.0, 0.0, 100.0, -50.0]
    loss, _ = disc_loss(D, np.array([[1.0]]), np.array([[0.0]]))
    assert loss == pytest.approx(-2 * np.log(1 - EPS), abs=1e-12)
    assert loss < 3e-4


def test_grad_penalty_zero_and_linear():
    D = zero_disc()
    assert grad_penalty(D, np.ones((3, 4))) == 0.0
    D = Discriminator(3, hidden=(), use_norm=False)
    w = np.array([0.5, -1.0, 2.0])
    D.net.params[:] = np.concatenate([w, [0.3]])
    assert grad_penalty(D, np.random.default_rng(0).standard_normal((4, 3))) == pytest.approx(w @ w, abs=1e-15)


def test_grad_penalty_matches_fd(rng):
    D = Discriminator(4, hidden=(8, 6), use_norm=False, rng=rng)
    x = rng.standard_normal((5, 4))
    h = 1e-5
    sq = np.zeros(5)
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        sq += ((D.logit(x + e) - D.logit(x - e)) / (2 * h)) ** 2
    assert grad_penalty(D, x) == pytest.approx(sq.mean(), rel=1e-3)


def test_adv_reward_values():
    D = zero_disc()
    assert adv_reward(D, np.zeros(2), np.zeros(2)) == pytest.approx(np.log(2), abs=1e-9)
    D.net.params[-1] = -100.0
    assert adv_reward(D, np.zeros(2), np.zeros(2)) == pytest.approx(-np.log(1 - EPS), abs=1e-12)
    D.net.params[-1] = 100.0
    assert adv_reward(D, np.zeros(2), np.zeros(2)) == pytest.approx(9.21034, abs=1e-4)


def test_adv_reward_monotone_in_logit():
    D = zero_disc()
    rs = []
    for b in np.linspace(-12, 12, 50):
        D.net.params[-1] = b
        rs.append(D.reward(np.zeros((1, 4)))[0])
    assert np.all(np.diff(rs) >= 0) and rs[0] >= 0 and rs[-1] <= 9.2104


def test_literal_policy_term_flag():
    D = zero_disc(w_gp=0.0, literal_policy_term=True)
    loss, _ = disc_loss(D, np.zeros((1, 4)), np.zeros((1, 4)))
    assert loss == pytest.approx(np.log(2) - (1 - np.log(0.5)), abs=1e-12)


def test_transition_features_drop_masked():
    desc = np.arange(12.0).reshape(4, 3)
    f = transition_features(desc, np.array([True, False, True]))
    np.testing.assert_array_equal(f[0], [0, 2, 3, 5])
    assert f.shape == (3, 4)


def test_checkpoint_roundtrip(rng):
    D = Discriminator(4, hidden=(6,), rng=rng)
    D.update(rng.standard_normal((8, 4)), rng.standard_normal((8, 4)))
    E = Discriminator(4, hidden=(6,))
    E.load_state(D.state_dict())
    x = rng.standard_normal((3, 4))
    np.testing.assert_array_equal(D.prob(x), E.prob(x))
