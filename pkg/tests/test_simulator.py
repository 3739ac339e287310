import numpy as np
import pytest
from functools import reduce

from secureqml import circuit as qc
from secureqml import simulator as sim
from secureqml.errors import ResourceError, SimulationError

from helpers import random_circuit, random_state

I2 = np.eye(2)
P0 = np.diag([1.0, 0.0])
P1 = np.diag([0.0, 1.0])
X = np.array([[0, 1], [1, 0]])
Z = np.diag([1.0, -1.0])


def _rot(axis, t):
    pauli = {"x": X, "y": np.array([[0, -1j], [1j, 0]]), "z": Z}[axis]
    return np.cos(t / 2) * I2 - 1j * np.sin(t / 2) * pauli


def _on(n, ops):
    """Kronecker product with ``ops[q]`` on qubit q (default identity), qubit 0 leftmost."""
    return reduce(np.kron, [ops.get(q, I2) for q in range(n)])


def embedded(gate, n):
    k = gate.kind.value
    if k in ("rx", "ry", "rz"):
        return _on(n, {gate.qubits[0]: _rot(k[1], gate.angle)})
    if k == "x":
        return _on(n, {gate.qubits[0]: X})
    if k == "h":
        return _on(n, {gate.qubits[0]: np.array([[1, 1], [1, -1]]) / np.sqrt(2)})
    c, t = gate.qubits
    target = {"cnot": X, "cz": Z}.get(k)
    if target is None:
        target = _rot("x", gate.angle)
    return _on(n, {c: P0}) + _on(n, {c: P1, t: target})


def kron_unitary(c):
    u = np.eye(1 << c.n_qubits, dtype=complex)
    for g in c.gates:
        if not g.is_barrier:
            u = embedded(g, c.n_qubits) @ u
    return u


def test_simulate_examples():
    s = sim.zero_state(2)
    assert np.allclose(sim.simulate(qc.Circuit(2), s), s)
    out = sim.simulate(qc.Circuit(1, (qc.ry(0, np.pi / 2),)), sim.zero_state(1))
    assert np.allclose(out, [0.7071067811865476, 0.7071067811865476])


def test_simulate_errors():
    with pytest.raises(SimulationError):
        sim.simulate(qc.Circuit(2), sim.zero_state(3))
    with pytest.raises(SimulationError):
        sim.simulate(qc.Circuit(1), np.array([1.0, 1.0]))


def test_unitary_examples():
    assert np.allclose(sim.unitary_of(qc.Circuit(1)), np.eye(2))
    u = sim.unitary_of(qc.Circuit(2, (qc.cnot(0, 1),)))
    expected = np.eye(4)[[0, 1, 3, 2]]
    assert np.array_equal(u.real, expected) and not u.imag.any()
    with pytest.raises(ResourceError):
        sim.unitary_of(qc.Circuit(3), cap=2)


@pytest.mark.parametrize("seed", range(6))
def test_unitary_matches_kronecker_oracle(seed):
    rng = np.random.default_rng(seed)
    c = random_circuit(rng, 3, 25, barriers=True)
    u = sim.unitary_of(c)
    assert np.allclose(u, kron_unitary(c), atol=1e-12)
    assert np.allclose(u.conj().T @ u, np.eye(8), atol=1e-9)


def test_every_gate_on_every_basis_state():
    gates = [qc.rx(1, 0.7), qc.ry(0, -1.3), qc.rz(2, 2.1), qc.x(1), qc.h(2),
             qc.cnot(2, 0), qc.cnot(0, 1), qc.cz(0, 2), qc.crx(1, 2, 0.9), qc.crx(2, 0, -2.2)]
    for g in gates:
        c = qc.Circuit(3, (g,))
        ref = embedded(g, 3)
        for k in range(8):
            assert np.allclose(sim.simulate(c, sim.basis_state(3, k)), ref[:, k], atol=1e-12)


def test_norm_preservation_random_circuits():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 6))
        c = random_circuit(rng, n, int(rng.integers(0, 41)), barriers=True)
        out = sim.simulate(c, random_state(rng, n))
        worst = max(worst, abs(np.linalg.norm(out) - 1))
    assert worst < 1e-9


def test_barriers_are_neutral():
    rng = np.random.default_rng(8)
    for _ in range(50):
        n = int(rng.integers(1, 6))
        c = random_circuit(rng, n, 30, barriers=True)
        assert np.allclose(sim.unitary_of(c), sim.unitary_of(c.without_barriers()), atol=0)


def test_unitary_of_compose():
    rng = np.random.default_rng(9)
    for _ in range(20):
        a, b = random_circuit(rng, 4, 15), random_circuit(rng, 4, 15)
        lhs = sim.unitary_of(qc.compose(a, b))
        assert np.max(np.abs(lhs - sim.unitary_of(b) @ sim.unitary_of(a))) < 1e-8


def test_z_expectations():
    assert np.allclose(sim.z_expectations(sim.zero_state(1), [0]), [1.0])
    s = sim.simulate(qc.Circuit(1, (qc.ry(0, np.pi / 2),)), sim.zero_state(1))
    assert np.allclose(sim.z_expectations(s, [0]), [0.0], atol=1e-12)
    rng = np.random.default_rng(10)
    s = random_state(rng, 4)
    rho = np.outer(s, s.conj())
    for q in range(4):
        trace = np.trace(rho @ _on(4, {q: Z})).real
        assert np.isclose(sim.z_expectations(s, [q])[0], trace, atol=1e-12)


def test_marginal_probabilities():
    rng = np.random.default_rng(11)
    psi, phi = random_state(rng, 2), random_state(rng, 1)
    s = np.kron(psi, phi)
    assert np.allclose(sim.marginal_probabilities(s, {0, 1}), np.abs(psi) ** 2)
    assert np.allclose(sim.marginal_probabilities(s, [2, 1, 0]), np.abs(s) ** 2)
    with pytest.raises(SimulationError):
        sim.marginal_probabilities(s, [])

    s = random_state(rng, 4)
    rho = np.outer(s, s.conj()).reshape([4, 4, 4, 4])
    reduced = np.einsum("aibi->ab", rho)  # trace out qubits 2,3
    p = sim.marginal_probabilities(s, {0, 1})
    assert np.allclose(p, np.diag(reduced).real, atol=1e-12)
    assert abs(p.sum() - 1) < 1e-9


def test_state_text_round_trip():
    s = random_state(np.random.default_rng(12), 3)
    assert np.array_equal(sim.load_state(sim.dump_state(s)), s)
