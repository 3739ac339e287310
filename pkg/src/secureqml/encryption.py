"""Secret-key encryption of amplitude-encoded states.

The key holds one rotation angle per secure qubit and a random CNOT network.
Encryption tensors the data state with the secure-qubit state
``|Q> = (x)_k [cos(d_k/2), sin(d_k/2)]`` (secure qubits are the least
significant ones) and then permutes basis states with the CNOT network.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from . import circuit as qc
from .data import Dataset
from .errors import ConfigurationError

ANGLE_LOW = math.pi / 8
ANGLE_HIGH = 7 * math.pi / 8


@dataclass(frozen=True)
class SecurityKey:
    n_data_qubits: int
    n_secure_qubits: int
    delta: tuple[float, ...]
    # (control, target) for CNOT, (qubit,) for X
    perm_gates: tuple[tuple[int, ...], ...]
    seed: int | None = None
    fingerprint: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "delta", tuple(float(d) for d in self.delta))
        object.__setattr__(self, "perm_gates", tuple(tuple(int(q) for q in g) for g in self.perm_gates))
        n = self.n_qubits
        if self.n_data_qubits < 1:
            raise ConfigurationError("a key needs at least one data qubit")
        if self.n_secure_qubits < 1:
            raise ConfigurationError("a key needs at least one secure qubit")
        if len(self.delta) != self.n_secure_qubits:
            raise ConfigurationError(f"{self.n_secure_qubits} secure qubits need as many angles")
        for g in self.perm_gates:
            if len(g) not in (1, 2) or len(set(g)) != len(g) or not all(0 <= q < n for q in g):
                raise ConfigurationError(f"invalid permutation gate {g} on {n} qubits")
        expected = self._digest()
        if self.fingerprint and self.fingerprint != expected:
            raise ConfigurationError("key fingerprint does not match its contents")
        object.__setattr__(self, "fingerprint", expected)

    @property
    def n_qubits(self) -> int:
        return self.n_data_qubits + self.n_secure_qubits

    @property
    def secure_qubits(self) -> list[int]:
        return list(range(self.n_data_qubits, self.n_qubits))

    def _digest(self) -> str:
        body = json.dumps(
            [self.n_data_qubits, self.n_secure_qubits, [repr(d) for d in self.delta],
             [list(g) for g in self.perm_gates], self.seed],
            separators=(",", ":"),
        )
        return hashlib.sha256(body.encode()).hexdigest()[:16]

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_data_qubits": self.n_data_qubits,
                "n_secure_qubits": self.n_secure_qubits,
                "delta": list(self.delta),
                "perm_gates": [list(g) for g in self.perm_gates],
                "seed": self.seed,
                "fingerprint": self.fingerprint,
            },
            indent=2,
        ) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "SecurityKey":
        try:
            raw = json.loads(text)
            return cls(raw["n_data_qubits"], raw["n_secure_qubits"], raw["delta"],
                       raw["perm_gates"], raw.get("seed"), raw.get("fingerprint", ""))
        except (KeyError, TypeError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"malformed key file: {exc}") from None


def generate_key(n_data_qubits, n_secure_qubits, n_perm_gates=None, seed=None, allow_x=False):
    """Sample a key: angles uniform in [pi/8, 7pi/8), CNOTs uniform over ordered pairs.

    ``n_perm_gates`` defaults to ``2 * (N + M)``. With ``allow_x`` a random
    number of X gates is interleaved, reaching permutations that move ``|0...0>``.
    """
    if n_secure_qubits < 1:
        raise ConfigurationError("at least one secure qubit is required for encryption")
    if n_data_qubits < 1:
        raise ConfigurationError("at least one data qubit is required")
    n = n_data_qubits + n_secure_qubits
    if n_perm_gates is None:
        n_perm_gates = 2 * n
    if n_perm_gates < 0:
        raise ConfigurationError("n_perm_gates must be non-negative")
    rng = np.random.default_rng(seed)
    delta = rng.uniform(ANGLE_LOW, ANGLE_HIGH, size=n_secure_qubits)
    gates = []
    for pair in rng.integers(n * (n - 1), size=n_perm_gates):
        control, rest = divmod(int(pair), n - 1)
        target = rest + (rest >= control)
        gates.append((control, target))
    if allow_x:
        for _ in range(int(rng.integers(1, n + 1))):
            gates.insert(int(rng.integers(len(gates) + 1)), (int(rng.integers(n)),))
    return SecurityKey(n_data_qubits, n_secure_qubits, tuple(delta), tuple(gates), seed)


def scaling_vector(delta) -> np.ndarray:
    """Secure-register state ``(x)_k [cos(d_k/2), sin(d_k/2)]``, first angle most significant."""
    delta = np.atleast_1d(np.asarray(delta, dtype=np.float64))
    if delta.size < 1:
        raise ValueError("need at least one angle")
    return reduce(np.kron, [np.array([math.cos(d / 2), math.sin(d / 2)]) for d in delta])


def permutation_indices(key: SecurityKey) -> np.ndarray:
    """``perm[i]`` is the basis state that basis state ``i`` is sent to.

    Computed by running the CNOT/X network on classical bit strings.
    """
    n = key.n_qubits
    idx = np.arange(1 << n)
    for g in key.perm_gates:
        if len(g) == 1:
            idx = idx ^ (1 << (n - 1 - g[0]))
        else:
            c, t = g
            idx = idx ^ (((idx >> (n - 1 - c)) & 1) << (n - 1 - t))
    return idx


def permutation_matrix(key: SecurityKey) -> np.ndarray:
    perm = permutation_indices(key)
    p = np.zeros((perm.size, perm.size))
    p[perm, np.arange(perm.size)] = 1.0
    return p


def permutation_circuit(key: SecurityKey) -> qc.Circuit:
    gates = [qc.x(g[0]) if len(g) == 1 else qc.cnot(*g) for g in key.perm_gates]
    return qc.Circuit(key.n_qubits, tuple(gates))


def build_encryption_circuit(key: SecurityKey) -> qc.Circuit:
    """One Ry per secure qubit followed by the permutation network."""
    rot = [qc.ry(q, d) for q, d in zip(key.secure_qubits, key.delta)]
    return qc.Circuit(key.n_qubits, tuple(rot)).append(*permutation_circuit(key).gates)


def encrypt_reference(x, key: SecurityKey) -> np.ndarray:
    """Closed form ``P (x (x) Q)`` without building a circuit."""
    x = np.asarray(x)
    if x.shape != (1 << key.n_data_qubits,):
        raise ValueError(f"expected a vector of length {1 << key.n_data_qubits}, got {x.shape}")
    return encrypt_features(x[None, :], key)[0]


def encrypt_features(features, key: SecurityKey) -> np.ndarray:
    """Row-wise :func:`encrypt_reference` for a batch of data vectors."""
    features = np.asarray(features)
    q = scaling_vector(key.delta)
    amortized = (features[:, :, None] * q[None, None, :]).reshape(features.shape[0], -1)
    out = np.empty_like(amortized)
    out[:, permutation_indices(key)] = amortized
    return out


def encrypt_dataset(ds: Dataset, key: SecurityKey) -> Dataset:
    if ds.encrypted_with is not None:
        raise ConfigurationError("dataset is already encrypted")
    if ds.n_qubits != key.n_data_qubits:
        raise ConfigurationError(f"key expects {key.n_data_qubits} data qubits, dataset has {ds.n_qubits}")
    return Dataset(encrypt_features(ds.features, key), ds.labels.copy(), ds.n_data_qubits,
                   ds.n_classes, key.fingerprint)
