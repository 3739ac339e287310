from functools import lru_cache
from pathlib import Path

import numpy as np

from secureqml import circuit as qc
from secureqml import data

ONE_QUBIT = ("rx", "ry", "rz", "x", "h")
TWO_QUBIT = ("cnot", "cz", "crx")


def random_circuit(rng, n_qubits, n_gates, barriers=False):
    gates = []
    kinds = ONE_QUBIT + (TWO_QUBIT if n_qubits > 1 else ())
    for _ in range(n_gates):
        if barriers and rng.random() < 0.1:
            gates.append(qc.barrier(n_qubits))
            continue
        kind = kinds[rng.integers(len(kinds))]
        angle = rng.uniform(-np.pi, np.pi)
        if kind in TWO_QUBIT:
            a, b = rng.choice(n_qubits, size=2, replace=False)
            g = {"cnot": lambda: qc.cnot(a, b), "cz": lambda: qc.cz(a, b),
                 "crx": lambda: qc.crx(a, b, angle)}[kind]()
        else:
            q = int(rng.integers(n_qubits))
            g = {"rx": lambda: qc.rx(q, angle), "ry": lambda: qc.ry(q, angle),
                 "rz": lambda: qc.rz(q, angle), "x": lambda: qc.x(q),
                 "h": lambda: qc.h(q)}[kind]()
        gates.append(g)
    return qc.Circuit(n_qubits, tuple(gates))


def random_state(rng, n_qubits):
    v = rng.normal(size=1 << n_qubits) + 1j * rng.normal(size=1 << n_qubits)
    return v / np.linalg.norm(v)


def random_unitary(rng, dim):
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def phase_distance(a, b):
    """Max entrywise |a - e^{i phi} b| with phi fixed by the largest entry of b."""
    k = np.argmax(np.abs(b))
    phase = a.flat[k] / b.flat[k]
    phase /= abs(phase)
    return np.max(np.abs(a - phase * b))


DATA_DIR = Path(__file__).resolve().parents[1] / "data"
MNIST2 = (3, 6)
MNIST3 = (0, 1, 2)


@lru_cache(maxsize=None)
def mnist(classes, split):
    x, y = data.load_idx(DATA_DIR / f"mnist5k-{split}-images-idx3-ubyte.gz",
                         DATA_DIR / f"mnist5k-{split}-labels-idx1-ubyte.gz", classes)
    return data.make_dataset(x, y, len(classes))


def mnist2():
    return mnist(MNIST2, "train"), mnist(MNIST2, "test")
