"""Architecture search over layer designs with a recurrent REINFORCE controller.

Each episode samples one design id per layer, trains the child on the
encrypted training set, and scores it on the encrypted test set. The reward
``R = A - b - lam * L / L_base`` trades accuracy against circuit length, with
``b`` an exponential moving average of past accuracies.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import circuit as qc
from . import qnn
from .data import Dataset
from .encryption import SecurityKey
from .errors import ConfigurationError

START_TOKEN = qnn.N_DESIGNS


@dataclass
class ControllerPolicy:
    """Single-layer tanh RNN: ``h_t = tanh(E[x_t] + W h_{t-1} + b)``, ``logits_t = V h_t + c``."""

    embed: np.ndarray   # (N_DESIGNS + 1, H), last row is the start token
    w_hh: np.ndarray    # (H, H)
    b_h: np.ndarray     # (H,)
    w_out: np.ndarray   # (N_DESIGNS, H)
    b_out: np.ndarray   # (N_DESIGNS,)

    NAMES = ("embed", "w_hh", "b_h", "w_out", "b_out")

    @classmethod
    def init(cls, hidden_size=32, seed=None, scale=0.1) -> "ControllerPolicy":
        rng = np.random.default_rng(seed)
        h = hidden_size
        return cls(rng.normal(0, scale, (qnn.N_DESIGNS + 1, h)), rng.normal(0, scale, (h, h)),
                   np.zeros(h), rng.normal(0, scale, (qnn.N_DESIGNS, h)), np.zeros(qnn.N_DESIGNS))

    @property
    def hidden_size(self) -> int:
        return self.b_h.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in self.NAMES}

    def copy(self) -> "ControllerPolicy":
        return ControllerPolicy(*(getattr(self, k).copy() for k in self.NAMES))

    def _run(self, choices):
        """Hidden states and step distributions when feeding ``choices`` (teacher forcing)."""
        h = np.zeros(self.hidden_size)
        tokens = [START_TOKEN, *choices[:-1]]
        hs, probs = [h], []
        for tok in tokens:
            h = np.tanh(self.embed[tok] + self.w_hh @ h + self.b_h)
            hs.append(h)
            probs.append(qnn.softmax(self.w_out @ h + self.b_out))
        return tokens, hs, probs

    def sequence_log_prob(self, choices) -> float:
        _, _, probs = self._run(list(choices))
        return float(sum(math.log(p[a]) for p, a in zip(probs, choices)))

    def log_prob_gradient(self, choices) -> dict[str, np.ndarray]:
        """Gradient of ``sum_t log p_t[choice_t]`` by backpropagation through time."""
        choices = list(choices)
        tokens, hs, probs = self._run(choices)
        grads = {k: np.zeros_like(v) for k, v in self.params().items()}
        dh_next = np.zeros(self.hidden_size)
        for t in range(len(choices) - 1, -1, -1):
            g = -probs[t]
            g[choices[t]] += 1.0
            grads["w_out"] += np.outer(g, hs[t + 1])
            grads["b_out"] += g
            dh = self.w_out.T @ g + dh_next
            dz = dh * (1.0 - hs[t + 1] ** 2)
            grads["embed"][tokens[t]] += dz
            grads["b_h"] += dz
            grads["w_hh"] += np.outer(dz, hs[t])
            dh_next = self.w_hh.T @ dz
        return grads


def sample_architecture(policy: ControllerPolicy, max_layers: int, rng) -> tuple[list[int], list[float]]:
    """Draw ``max_layers`` ids, feeding each draw back as the next input."""
    rng = np.random.default_rng(rng)
    h = np.zeros(policy.hidden_size)
    tok = START_TOKEN
    choices, log_probs = [], []
    for _ in range(max_layers):
        h = np.tanh(policy.embed[tok] + policy.w_hh @ h + policy.b_h)
        p = qnn.softmax(policy.w_out @ h + policy.b_out)
        a = int(rng.choice(qnn.N_DESIGNS, p=p))
        choices.append(a)
        log_probs.append(float(math.log(p[a])))
        tok = a
    return choices, log_probs


def step_distributions(policy: ControllerPolicy, choices) -> list[np.ndarray]:
    return policy._run(list(choices))[2]


@dataclass
class SearchConfig:
    key: SecurityKey
    episodes: int = 50
    max_layers: int = 4
    lam: float = 0.1
    l_base: float | None = None
    vanilla_choices: tuple[int, ...] = (0, 0, 0, 0)
    baseline_decay: float = 0.9
    controller_lr: float = 0.01
    hidden_size: int = 32
    seed: int = 0
    train: qnn.TrainConfig = field(default_factory=qnn.TrainConfig)

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigurationError("episodes must be at least 1")
        if self.lam < 0:
            raise ConfigurationError("lambda must be non-negative")
        if self.max_layers < 1:
            raise ConfigurationError("max_layers must be at least 1")
        if self.l_base is None:
            vanilla = qnn.build_ansatz(self.vanilla_choices, self.key.n_data_qubits)
            self.l_base = float(qc.metrics(vanilla.circuit).gate_count)
        if not self.l_base > 0:
            raise ConfigurationError("L_base must be positive")

    def to_dict(self):
        return {"key_fingerprint": self.key.fingerprint, "episodes": self.episodes,
                "max_layers": self.max_layers, "lambda": self.lam, "l_base": self.l_base,
                "vanilla_choices": list(self.vanilla_choices), "baseline_decay": self.baseline_decay,
                "controller_lr": self.controller_lr, "hidden_size": self.hidden_size,
                "seed": self.seed, "train": self.train.to_dict()}


@dataclass
class EpisodeRecord:
    episode: int
    choices: list[int]
    log_probs: list[float]
    accuracy: float
    length: int
    reward: float
    baseline: float


def compute_reward(accuracy, baseline, length, lam, l_base) -> float:
    return accuracy - baseline - lam * length / l_base


def update_policy(policy: ControllerPolicy, choices, reward, lr) -> ControllerPolicy:
    """REINFORCE ascent ``theta += lr * R * grad sum_t log p_t``."""
    out = policy.copy()
    if reward == 0.0:
        return out
    for name, g in policy.log_prob_gradient(choices).items():
        setattr(out, name, getattr(out, name) + lr * reward * g)
    return out


@dataclass
class SearchResult:
    best: EpisodeRecord
    model: qnn.ParamCircuit
    log: list[EpisodeRecord]
    policy: ControllerPolicy

    def best_by_reward(self) -> EpisodeRecord:
        return max(self.log, key=lambda r: (r.reward, -r.length, -r.episode))


def _check_encrypted(ds: Dataset, key: SecurityKey, what):
    if ds.encrypted_with != key.fingerprint:
        raise ConfigurationError(
            f"{what} set was encrypted with {ds.encrypted_with!r}, search key is {key.fingerprint!r}")


def search(cfg: SearchConfig, train_set: Dataset, test_set: Dataset, progress=None) -> SearchResult:
    """Run ``cfg.episodes`` sample/train/score/update rounds; best = highest accuracy, then shortest."""
    _check_encrypted(train_set, cfg.key, "training")
    _check_encrypted(test_set, cfg.key, "test")
    root = np.random.SeedSequence(cfg.seed)
    ctrl_seed, sample_seq, child_seq = root.spawn(3)
    policy = ControllerPolicy.init(cfg.hidden_size, np.random.default_rng(ctrl_seed))
    sampler = np.random.default_rng(sample_seq)
    child_seeds = np.random.default_rng(child_seq).integers(2**31, size=cfg.episodes)
    n_qubits = train_set.n_qubits
    log, models = [], []
    baseline = None
    for ep in range(cfg.episodes):
        choices, log_probs = sample_architecture(policy, cfg.max_layers, sampler)
        seed = int(child_seeds[ep])
        child = qnn.build_ansatz(choices, n_qubits, seed)
        tcfg = qnn.TrainConfig(**{**cfg.train.to_dict(), "seed": seed})
        trained = qnn.train(child, train_set, tcfg).model
        acc = qnn.evaluate_accuracy(trained, test_set)
        length = qc.metrics(trained.bound()).gate_count
        if baseline is None:
            baseline = acc
        reward = compute_reward(acc, baseline, length, cfg.lam, cfg.l_base)
        rec = EpisodeRecord(ep, choices, log_probs, acc, length, reward, baseline)
        log.append(rec)
        models.append(trained)
        policy = update_policy(policy, choices, reward, cfg.controller_lr)
        baseline = cfg.baseline_decay * baseline + (1 - cfg.baseline_decay) * acc
        if progress:
            progress(rec)
    best = max(log, key=lambda r: (r.accuracy, -r.length, -r.episode))
    return SearchResult(best, models[best.episode], log, policy)


def episode_log_csv(log) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["episode", "choices", "A", "L", "R", "b", "log_prob"])
    for r in log:
        w.writerow([r.episode, "-".join(map(str, r.choices)), repr(r.accuracy), r.length,
                    repr(r.reward), repr(r.baseline), repr(float(sum(r.log_probs)))])
    return buf.getvalue()
