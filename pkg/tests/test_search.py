import numpy as np
import pytest

from secureqml import encryption as enc
from secureqml import qnn
from secureqml import search as se
from secureqml.errors import ConfigurationError

from helpers import mnist2


@pytest.fixture(scope="module")
def tiny():
    train, test = mnist2()
    rng = np.random.default_rng(0)
    train = train.subset(rng.choice(len(train), 64, replace=False))
    test = test.subset(rng.choice(len(test), 40, replace=False))
    key = enc.generate_key(4, 1, seed=3)
    return key, enc.encrypt_dataset(train, key), enc.encrypt_dataset(test, key)


def _cfg(key, **kw):
    base = dict(episodes=3, max_layers=2, train=qnn.TrainConfig(epochs=2, batch_size=32), seed=0)
    base.update(kw)
    return se.SearchConfig(key, **base)


def test_policy_distributions_valid():
    pol = se.ControllerPolicy.init(8, seed=0)
    for p in se.step_distributions(pol, [0, 3, 5, 1]):
        assert np.all(p > 0) and abs(p.sum() - 1) < 1e-9


def test_saturated_policy_picks_identity():
    pol = se.ControllerPolicy.init(8, seed=0)
    pol.b_out[qnn.IDENTITY] = 1e6
    choices, lps = se.sample_architecture(pol, 5, 1)
    assert choices == [5] * 5 and all(abs(lp) < 1e-12 for lp in lps)


def test_sampling_deterministic():
    pol = se.ControllerPolicy.init(8, seed=1)
    assert se.sample_architecture(pol, 4, 7) == se.sample_architecture(pol, 4, 7)


def test_sampling_frequencies_match_softmax():
    pol = se.ControllerPolicy.init(6, seed=2, scale=1.0)
    rng = np.random.default_rng(3)
    n = 10_000
    draws = np.array([se.sample_architecture(pol, 2, rng)[0] for _ in range(n)])
    p1 = se.step_distributions(pol, [0, 0])[0]
    p2 = sum(p1[a] * se.step_distributions(pol, [a, 0])[1] for a in range(6))
    for step, p in ((0, p1), (1, p2)):
        freq = np.bincount(draws[:, step], minlength=6) / n
        sigma = np.sqrt(p * (1 - p) / n)
        assert np.all(np.abs(freq - p) <= 3 * sigma + 1e-12)


def test_sequence_log_prob_matches_sampled_log_probs():
    pol = se.ControllerPolicy.init(8, seed=4)
    choices, lps = se.sample_architecture(pol, 4, 5)
    assert pol.sequence_log_prob(choices) == pytest.approx(sum(lps), abs=1e-12)


def test_compute_reward_examples():
    assert se.compute_reward(0.95, 0.90, 40, 0.1, 40) == pytest.approx(-0.05)
    assert se.compute_reward(0.95, 0.90, 40, 0.0, 40) == pytest.approx(0.05)
    assert se.compute_reward(0.95, 0.90, 0, 0.1, 40) == pytest.approx(0.05)


def test_update_policy_zero_and_positive_reward():
    pol = se.ControllerPolicy.init(8, seed=6)
    choices = [1, 4, 2]
    same = se.update_policy(pol, choices, 0.0, 0.01)
    assert all(np.array_equal(a, b) for a, b in zip(same.params().values(), pol.params().values()))
    up = se.update_policy(pol, choices, 0.5, 0.01)
    assert up.sequence_log_prob(choices) > pol.sequence_log_prob(choices)


def test_controller_gradient_matches_finite_differences():
    pol = se.ControllerPolicy.init(4, seed=7, scale=0.5)
    choices = [2, 0, 5, 3]
    grads = pol.log_prob_gradient(choices)
    h = 1e-6
    worst = 0.0
    for name, arr in pol.params().items():
        for idx in np.ndindex(arr.shape):
            plus, minus = pol.copy(), pol.copy()
            getattr(plus, name)[idx] += h
            getattr(minus, name)[idx] -= h
            fd = (plus.sequence_log_prob(choices) - minus.sequence_log_prob(choices)) / (2 * h)
            worst = max(worst, abs(fd - grads[name][idx]))
    assert worst < 1e-5


def test_search_config_validation(tiny):
    key = tiny[0]
    with pytest.raises(ConfigurationError):
        se.SearchConfig(key, episodes=0)
    with pytest.raises(ConfigurationError):
        se.SearchConfig(key, lam=-1)
    assert se.SearchConfig(key).l_base == 32.0  # 4 layers x (4 Ry + 4 CNOT) on the data qubits


def test_search_single_episode(tiny):
    key, tr, te = tiny
    res = se.search(_cfg(key, episodes=1), tr, te)
    assert len(res.log) == 1 and res.best is res.log[0]
    assert res.best.reward == pytest.approx(-0.1 * res.best.length / 32.0, abs=1e-12)


def test_search_rejects_wrong_key(tiny):
    key, tr, te = tiny
    other = enc.generate_key(4, 1, seed=99)
    with pytest.raises(ConfigurationError):
        se.search(_cfg(other), tr, te)


def test_search_invariants_and_determinism(tiny):
    key, tr, te = tiny
    cfg = _cfg(key, episodes=5)
    a, b = se.search(cfg, tr, te), se.search(cfg, tr, te)
    assert se.episode_log_csv(a.log) == se.episode_log_csv(b.log)
    accs = [r.accuracy for r in a.log]
    for r in a.log:
        assert r.reward == pytest.approx(r.accuracy - r.baseline - cfg.lam * r.length / cfg.l_base, abs=1e-12)
        assert min(accs) <= r.baseline <= max(accs)
    best = max(a.log, key=lambda r: (r.accuracy, -r.length))
    assert (a.best.accuracy, a.best.length) == (best.accuracy, best.length)
    assert qnn.evaluate_accuracy(a.model, te) == a.best.accuracy
    lines = se.episode_log_csv(a.log).splitlines()
    assert lines[0] == "episode,choices,A,L,R,b,log_prob" and len(lines) == 6


def test_large_lambda_prefers_short_circuits(tiny):
    key, tr, te = tiny
    heavy = se.search(_cfg(key, episodes=6, lam=10.0, controller_lr=0.5), tr, te)
    free = se.search(_cfg(key, episodes=6, lam=0.0, controller_lr=0.5), tr, te)
    assert heavy.best_by_reward().length <= free.best_by_reward().length
