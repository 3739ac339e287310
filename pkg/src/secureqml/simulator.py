"""Dense statevector simulation.

States are plain complex numpy vectors of length ``2**n``; batches are 2-D
arrays with one state per row. Qubit 0 is the most significant index bit.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .circuit import Circuit, Gate, GateKind
from .config import STATE_ATOL, UNITARY_QUBIT_CAP
from .errors import ResourceError, SimulationError

_X = np.array([[0, 1], [1, 0]], dtype=complex)
_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
_CZ = np.diag([1, 1, 1, -1]).astype(complex)


def rx_matrix(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]])


def ry_matrix(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def rz_matrix(theta):
    return np.diag([np.exp(-0.5j * theta), np.exp(0.5j * theta)])


def crx_matrix(theta):
    m = np.eye(4, dtype=complex)
    m[2:, 2:] = rx_matrix(theta)
    return m


def gate_matrix(gate: Gate) -> np.ndarray:
    """The 2x2 or 4x4 matrix of a gate in its own qubit order (first qubit = MSB)."""
    kind = gate.kind
    if kind is GateKind.RX:
        return rx_matrix(gate.angle)
    if kind is GateKind.RY:
        return ry_matrix(gate.angle)
    if kind is GateKind.RZ:
        return rz_matrix(gate.angle)
    if kind is GateKind.X:
        return _X
    if kind is GateKind.H:
        return _H
    if kind is GateKind.CNOT:
        return _CNOT
    if kind is GateKind.CZ:
        return _CZ
    if kind is GateKind.CRX:
        return crx_matrix(gate.angle)
    raise SimulationError(f"no matrix for {kind.value}")


def apply_matrix(states: np.ndarray, matrix: np.ndarray, qubits, n_qubits: int) -> np.ndarray:
    """Apply a 1- or 2-qubit matrix to every row of ``states`` (shape ``(K, 2**n)``)."""
    k = states.shape[0]
    if len(qubits) == 1:
        q = qubits[0]
        psi = states.reshape(k, 1 << q, 2, 1 << (n_qubits - q - 1))
        return np.einsum("ab,kibj->kiaj", matrix, psi).reshape(k, -1)
    a, b = qubits
    psi = states.reshape((k,) + (2,) * n_qubits)
    psi = np.moveaxis(psi, (a + 1, b + 1), (-2, -1))
    shape = psi.shape
    psi = psi.reshape(shape[:-2] + (4,)) @ matrix.T
    psi = np.moveaxis(psi.reshape(shape), (-2, -1), (a + 1, b + 1))
    return psi.reshape(k, -1)


def apply_gate(states: np.ndarray, gate: Gate, n_qubits: int) -> np.ndarray:
    if gate.is_barrier:
        return states
    return apply_matrix(states, gate_matrix(gate), gate.qubits, n_qubits)


def simulate_batch(c: Circuit, states: np.ndarray) -> np.ndarray:
    """Evolve each row of ``states`` through ``c``."""
    states = np.asarray(states, dtype=complex)
    if states.ndim != 2 or states.shape[1] != 1 << c.n_qubits:
        raise SimulationError(
            f"batch of shape {states.shape} does not match a {c.n_qubits}-qubit circuit"
        )
    out = states
    for g in c.gates:
        out = apply_gate(out, g, c.n_qubits)
    return out.copy() if out is states else out


def simulate(c: Circuit, init: np.ndarray) -> np.ndarray:
    init = np.asarray(init, dtype=complex)
    if init.ndim != 1 or init.shape[0] != 1 << c.n_qubits:
        raise SimulationError(
            f"state of length {init.shape} does not match a {c.n_qubits}-qubit circuit"
        )
    norm = np.linalg.norm(init)
    if abs(norm - 1.0) > STATE_ATOL:
        raise SimulationError(f"initial state is not normalized (norm={norm!r})")
    return simulate_batch(c, init[None, :])[0]


def zero_state(n_qubits: int) -> np.ndarray:
    s = np.zeros(1 << n_qubits, dtype=complex)
    s[0] = 1.0
    return s


def basis_state(n_qubits: int, index: int) -> np.ndarray:
    s = np.zeros(1 << n_qubits, dtype=complex)
    s[index] = 1.0
    return s


def unitary_of(c: Circuit, cap: int = UNITARY_QUBIT_CAP) -> np.ndarray:
    if c.n_qubits > cap:
        raise ResourceError(f"{c.n_qubits} qubits exceeds the dense-unitary cap of {cap}")
    dim = 1 << c.n_qubits
    # row k of the result is U e_k, i.e. column k of U
    return simulate_batch(c, np.eye(dim, dtype=complex)).T


@lru_cache(maxsize=None)
def _z_signs(n_qubits: int) -> np.ndarray:
    idx = np.arange(1 << n_qubits)
    bits = (idx[:, None] >> (n_qubits - 1 - np.arange(n_qubits))[None, :]) & 1
    return 1.0 - 2.0 * bits


def z_expectations_from_probs(probs: np.ndarray, qubits, n_qubits: int) -> np.ndarray:
    """``<Z_q>`` for each ``q`` in ``qubits``; ``probs`` may be a vector or a batch."""
    signs = _z_signs(n_qubits)[:, list(qubits)]
    return probs @ signs


def z_expectations(s: np.ndarray, qubits) -> np.ndarray:
    s = np.asarray(s)
    n = _n_qubits_of(s)
    qubits = list(qubits)
    if any(q < 0 or q >= n for q in qubits):
        raise SimulationError(f"qubit indices {qubits} out of range for {n} qubits")
    return z_expectations_from_probs(np.abs(s) ** 2, qubits, n)


def marginal_probabilities(s: np.ndarray, keep) -> np.ndarray:
    """Probabilities over the kept qubits (ascending index order, lowest index = MSB)."""
    s = np.asarray(s)
    n = _n_qubits_of(s)
    keep = sorted(set(int(q) for q in keep))
    if not keep:
        raise SimulationError("marginal over an empty qubit set")
    if keep[0] < 0 or keep[-1] >= n:
        raise SimulationError(f"qubit indices {keep} out of range for {n} qubits")
    probs = (np.abs(s) ** 2).reshape((2,) * n)
    drop = tuple(q for q in range(n) if q not in keep)
    return probs.sum(axis=drop).reshape(-1) if drop else probs.reshape(-1)


def _n_qubits_of(s: np.ndarray) -> int:
    dim = s.shape[-1]
    n = dim.bit_length() - 1
    if dim < 2 or 1 << n != dim:
        raise SimulationError(f"state length {dim} is not a power of two")
    return n


def dump_state(s: np.ndarray) -> str:
    """One ``real imag`` pair per line."""
    s = np.asarray(s, dtype=complex)
    return "".join(f"{a.real:.17g} {a.imag:.17g}\n" for a in s)


def load_state(text: str) -> np.ndarray:
    rows = [line.split() for line in text.splitlines() if line.strip()]
    return np.array([complex(float(r), float(i)) for r, i in rows])
