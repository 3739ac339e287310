"""Variational classifiers built from a small pool of layer designs.

Logits are the Z expectations of the first ``C`` qubits; the loss is softmax
cross-entropy. Gradients come from the parameter-shift rule, evaluated with
cached prefix states and suffix unitaries so one batch costs a handful of
dense matrix products per parameter instead of a full re-simulation.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import circuit as qc
from .data import Dataset
from .errors import ConfigurationError
from .simulator import apply_matrix, gate_matrix, simulate_batch, z_expectations_from_probs

N_DESIGNS = 6
IDENTITY = 5

# four-term rule for CRX, whose generator has eigenvalues {0, +-1/2}
_CRX_C1 = (math.sqrt(2) + 1) / (4 * math.sqrt(2))
_CRX_C2 = (math.sqrt(2) - 1) / (4 * math.sqrt(2))


# -- designs ------------------------------------------------------------------

def _ring(n):
    return [(q, (q + 1) % n) for q in range(n)] if n > 1 else []


def design_gates(design: int, n_qubits: int, offset: int = 0) -> tuple[list[qc.Gate], int]:
    """Gate template of one layer; parameters take slots ``offset ..``."""
    n = n_qubits
    slots = iter(range(offset, offset + 3 * n))
    if design == 0:
        gates = [qc.ry(q, 0.0, next(slots)) for q in range(n)]
        gates += [qc.cnot(a, b) for a, b in _ring(n)]
    elif design == 1:
        gates = [g for q in range(n) for g in (qc.ry(q, 0.0, next(slots)), qc.rz(q, 0.0, next(slots)))]
        gates += [qc.cz(a, b) for a, b in _ring(n)]
    elif design == 2:
        gates = [qc.ry(q, 0.0, next(slots)) for q in range(n)]
        gates += [qc.crx(a, b, 0.0, next(slots)) for a, b in _ring(n)]
    elif design == 3:
        gates = [qc.h(q) for q in range(n)]
        gates += [qc.rz(q, 0.0, next(slots)) for q in range(n)]
        gates += [qc.cnot(q, q + 1) for q in range(n - 1)]
    elif design == 4:
        gates = [qc.ry(q, 0.0, next(slots)) for q in range(n)]
        gates += [qc.cz(a, b) for a in range(n) for b in range(a + 1, n)]
    elif design == IDENTITY:
        gates = []
    else:
        raise ConfigurationError(f"unknown design id {design}; valid ids are 0..{N_DESIGNS - 1}")
    used = sum(1 for g in gates if g.param_id is not None)
    return gates, used


def design_param_count(design: int, n_qubits: int) -> int:
    return design_gates(design, n_qubits)[1]


@dataclass
class ParamCircuit:
    circuit: qc.Circuit
    theta: np.ndarray
    choices: tuple[int, ...]
    seed: int | None = None

    @property
    def n_qubits(self) -> int:
        return self.circuit.n_qubits

    @property
    def n_params(self) -> int:
        return self.theta.shape[0]

    def bound(self) -> qc.Circuit:
        return self.circuit.bind(self.theta)

    def copy(self) -> "ParamCircuit":
        return ParamCircuit(self.circuit, self.theta.copy(), self.choices, self.seed)


def build_ansatz(choices, n_qubits: int, seed=None) -> ParamCircuit:
    """Concatenate the chosen layers; theta starts uniform in [-0.1, 0.1]."""
    choices = tuple(int(c) for c in choices)
    if n_qubits < 1:
        raise ConfigurationError("an ansatz needs at least one qubit")
    gates, offset = [], 0
    for design in choices:
        layer, used = design_gates(design, n_qubits, offset)
        gates += layer
        offset += used
    theta = np.random.default_rng(seed).uniform(-0.1, 0.1, size=offset)
    return ParamCircuit(qc.Circuit(n_qubits, tuple(gates)), theta, choices, seed)


def embed_model(model: ParamCircuit, n_qubits: int) -> ParamCircuit:
    """Run ``model`` on the first qubits of a wider register, identity elsewhere."""
    return ParamCircuit(qc.embed(model.circuit, n_qubits), model.theta.copy(), model.choices, model.seed)


# -- forward / loss -----------------------------------------------------------

def _check_classes(model, n_classes):
    if n_classes < 1 or n_classes > model.n_qubits:
        raise ConfigurationError(f"{n_classes} classes need at least as many qubits, model has {model.n_qubits}")


def _as_batch(states, n_qubits):
    states = np.asarray(states)
    if states.ndim == 1:
        states = states[None, :]
    if states.shape[1] != 1 << n_qubits:
        raise ConfigurationError(f"state length {states.shape[1]} does not match {n_qubits} model qubits")
    return states.astype(complex)


def _logits_of_states(out, n_classes, n_qubits):
    return z_expectations_from_probs(np.abs(out) ** 2, range(n_classes), n_qubits)


def forward(model: ParamCircuit, states, n_classes: int) -> np.ndarray:
    """Logits for one state (vector result) or a batch (one row per state)."""
    _check_classes(model, n_classes)
    single = np.asarray(states).ndim == 1
    out = simulate_batch(model.bound(), _as_batch(states, model.n_qubits))
    logits = _logits_of_states(out, n_classes, model.n_qubits)
    return logits[0] if single else logits


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss(logits, label) -> float:
    """Cross-entropy of ``softmax(logits)`` at ``label``."""
    z = np.asarray(logits, dtype=np.float64)
    m = z.max()
    return float(m + math.log(np.exp(z - m).sum()) - z[int(label)])


def batch_loss(logits, labels) -> float:
    z = np.asarray(logits, dtype=np.float64)
    m = z.max(axis=1)
    lse = m + np.log(np.exp(z - m[:, None]).sum(axis=1))
    return float(np.mean(lse - z[np.arange(len(labels)), labels]))


def loss_logit_gradient(logits, labels) -> np.ndarray:
    """d(mean CE)/d(logits) for a batch."""
    p = softmax(logits)
    p[np.arange(len(labels)), labels] -= 1.0
    return p / len(labels)


# -- parameter shift ----------------------------------------------------------

def logit_jacobian(model: ParamCircuit, states, n_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """``(logits (B, C), jac (B, C, P))`` via parameter shift.

    Every tagged rotation is shifted in place: the state just before it is
    cached from one forward sweep, and the product of all later gates is
    cached as a dense matrix, so ``f(theta_j +- s)`` is one gate application
    and one matmul.
    """
    _check_classes(model, n_classes)
    n = model.n_qubits
    psi = _as_batch(states, n)
    gates = model.bound().gates
    prefix = []
    for g in gates:
        prefix.append(psi)
        psi = apply_matrix(psi, gate_matrix(g), g.qubits, n)
    logits = _logits_of_states(psi, n_classes, n)

    dim = 1 << n
    jac = np.zeros(logits.shape + (model.n_params,))
    # suffix[j] = U_{G-1} ... U_{j+1}; built right to left as S <- S @ U_j
    suffix = np.eye(dim, dtype=complex)
    tagged = [model.circuit.gates[j].param_id for j in range(len(gates))]
    for j in range(len(gates) - 1, -1, -1):
        g = gates[j]
        pid = tagged[j]
        if pid is not None:
            def shifted(s, g=g, j=j):
                gs = g.with_angle(g.angle + s)
                out = apply_matrix(prefix[j], gate_matrix(gs), g.qubits, n) @ suffix.T
                return _logits_of_states(out, n_classes, n)

            if g.kind is qc.GateKind.CRX:
                h = math.pi / 2
                d = (_CRX_C1 * (shifted(h) - shifted(-h))
                     - _CRX_C2 * (shifted(3 * h) - shifted(-3 * h)))
            else:
                d = (shifted(math.pi / 2) - shifted(-math.pi / 2)) / 2
            jac[:, :, pid] += d
        # right-multiplying by U_j acts on the rows of S with U_j^T
        suffix = apply_matrix(suffix, gate_matrix(g).T, g.qubits, n)
    return logits, jac


def parameter_shift_gradients(model: ParamCircuit, states, labels, n_classes: int):
    """``(mean loss, gradient)`` over a batch."""
    labels = np.asarray(labels, dtype=np.int64)
    logits, jac = logit_jacobian(model, states, n_classes)
    g_logits = loss_logit_gradient(logits, labels)
    return batch_loss(logits, labels), np.einsum("bc,bcp->p", g_logits, jac)


# -- training -----------------------------------------------------------------

@dataclass
class TrainConfig:
    batch_size: int = 64
    epochs: int = 20
    learning_rate: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 0 or self.learning_rate < 0:
            raise ConfigurationError(f"invalid training configuration {self}")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1 and self.adam_eps > 0):
            raise ConfigurationError(f"invalid Adam hyperparameters in {self}")

    def to_dict(self):
        return asdict(self)


class Adam:
    def __init__(self, size, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params, grad):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad ** 2
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class EpochStats:
    epoch: int
    loss: float
    train_acc: float
    test_acc: float | None = None


@dataclass
class TrainResult:
    model: ParamCircuit
    history: list[EpochStats] = field(default_factory=list)


def _check_dataset(model, ds: Dataset, n_classes):
    if ds.n_qubits != model.n_qubits:
        raise ConfigurationError(f"dataset lives on {ds.n_qubits} qubits, model on {model.n_qubits}")
    _check_classes(model, n_classes)


def train(model: ParamCircuit, ds: Dataset, cfg: TrainConfig, test: Dataset | None = None,
          n_classes: int | None = None) -> TrainResult:
    """Minibatch Adam on the mean cross-entropy; shuffling uses ``cfg.seed``."""
    n_classes = ds.n_classes if n_classes is None else n_classes
    _check_dataset(model, ds, n_classes)
    if len(ds) == 0:
        raise ConfigurationError("cannot train on an empty dataset")
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.n_params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    features = ds.features.astype(complex)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(ds))
        losses, weights = [], []
        for start in range(0, len(ds), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            if model.n_params:
                value, grad = parameter_shift_gradients(model, features[idx], ds.labels[idx], n_classes)
                model.theta = opt.step(model.theta, grad)
            else:
                value = batch_loss(forward(model, features[idx], n_classes), ds.labels[idx])
            losses.append(value)
            weights.append(len(idx))
        test_acc = evaluate_accuracy(model, test, n_classes) if test is not None else None
        history.append(EpochStats(epoch, float(np.average(losses, weights=weights)),
                                  evaluate_accuracy(model, ds, n_classes), test_acc))
    return TrainResult(model, history)


def predict(model: ParamCircuit, features, n_classes: int) -> np.ndarray:
    # argmax returns the first maximum, i.e. ties go to the lowest class
    return np.argmax(forward(model, np.atleast_2d(features), n_classes), axis=1)


def evaluate_accuracy(model: ParamCircuit, ds: Dataset, n_classes: int | None = None) -> float:
    n_classes = ds.n_classes if n_classes is None else n_classes
    if len(ds) == 0:
        return 0.0
    _check_dataset(model, ds, n_classes)
    return float(np.mean(predict(model, ds.features, n_classes) == ds.labels))


# -- files --------------------------------------------------------------------

MODEL_HEADER = "# secureqml model v1"


def model_to_text(model: ParamCircuit, n_classes: int, cfg: TrainConfig | None = None, extra=None) -> str:
    lines = [
        MODEL_HEADER,
        "choices " + " ".join(str(c) for c in model.choices),
        f"n_qubits {model.n_qubits}",
        f"n_classes {n_classes}",
        f"seed {model.seed if model.seed is not None else 'none'}",
        "config " + json.dumps(cfg.to_dict() if cfg else None, sort_keys=True),
        "extra " + json.dumps(extra or {}, sort_keys=True),
        f"theta {model.n_params}",
    ]
    lines += [repr(float(t)) for t in model.theta]
    return "\n".join(lines) + "\n"


def model_from_text(text: str) -> tuple[ParamCircuit, int, dict]:
    """``(model, n_classes, meta)``; ``meta`` holds the config and extra fields."""
    lines = text.splitlines()
    if not lines or lines[0] != MODEL_HEADER:
        raise ConfigurationError("not a model file")
    head = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("theta"):
        key, _, value = lines[i].partition(" ")
        head[key] = value
        i += 1
    try:
        count = int(lines[i].split()[1])
        theta = np.array([float(v) for v in lines[i + 1:i + 1 + count]])
        choices = [int(c) for c in head["choices"].split()]
        n_qubits = int(head["n_qubits"])
        n_classes = int(head["n_classes"])
        seed = None if head["seed"] == "none" else int(head["seed"])
        meta = {"config": json.loads(head.get("config", "null")), "extra": json.loads(head.get("extra", "{}"))}
    except (IndexError, KeyError, ValueError) as exc:
        raise ConfigurationError(f"malformed model file: {exc}") from None
    model = build_ansatz(choices, n_qubits, seed)
    if theta.shape[0] != model.n_params:
        raise ConfigurationError(f"model file has {theta.shape[0]} parameters, architecture needs {model.n_params}")
    model.theta = theta
    return model, n_classes, meta


def history_to_csv(history) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "loss", "train_acc", "test_acc"])
    for h in history:
        w.writerow([h.epoch, repr(h.loss), repr(h.train_acc), "" if h.test_acc is None else repr(h.test_acc)])
    return buf.getvalue()
