import math

import numpy as np
import pytest

from secureqml import circuit as qc
from secureqml import compiler as cp
from secureqml import data
from secureqml import encryption as enc
from secureqml.errors import PassError
from secureqml.simulator import simulate, unitary_of, zero_state

from helpers import phase_distance, random_circuit


def _key_and_circuits(rng, n, m, seed, n_gates=8):
    key = enc.generate_key(n, m, seed=seed)
    dcirc = qc.embed(random_circuit(rng, n, n_gates, False), n + m)
    return key, dcirc, enc.build_encryption_circuit(key)


def test_insert_dummies_shape():
    key = enc.SecurityKey(2, 1, (1.2,), ((0, 2),))
    c = enc.build_encryption_circuit(key)
    out = cp.insert_dummies(c, [2], seed=0)
    on_secure = [g for g in out.gates if 2 in g.qubits or g.kind is qc.GateKind.BARRIER]
    kinds = [g.kind.value for g in on_secure]
    assert kinds == ["ry", "cnot", "barrier", "cnot", "ry", "cnot"]
    a, b = on_secure[0].angle, on_secure[4].angle
    assert 0 < a < 1.2 and math.isclose(a + b, 1.2)
    assert on_secure[1] == on_secure[3] and on_secure[1].qubits[0] == 2
    assert on_secure[1].qubits[1] in (0, 1)
    assert phase_distance(unitary_of(out), unitary_of(c)) < 1e-12


def test_insert_dummies_zero_angle_keeps_pair():
    c = qc.Circuit(3, (qc.ry(2, 0.0),))
    out = cp.insert_dummies(c, [2], seed=1)
    assert [g.kind.value for g in out.gates] == ["cnot", "barrier", "cnot"]


def test_insert_dummies_several_pairs_and_seeds():
    c = enc.build_encryption_circuit(enc.generate_key(3, 2, seed=2))
    out = cp.insert_dummies(c, [3, 4], seed=3, dummy_pairs=3)
    assert sum(g.kind is qc.GateKind.BARRIER for g in out.gates) == 6
    assert phase_distance(unitary_of(out), unitary_of(c)) < 1e-12
    other = cp.insert_dummies(c, [3, 4], seed=4, dummy_pairs=3)
    assert not qc.structurally_equal(out, other)


def test_insert_dummies_errors():
    with pytest.raises(PassError):
        cp.insert_dummies(qc.Circuit(3, (qc.rz(2, 0.1),)), [2], seed=0)
    with pytest.raises(PassError):
        cp.insert_dummies(qc.Circuit(3, (qc.ry(2, 0.1), qc.ry(2, 0.2))), [2], seed=0)


def test_partition_single_qubit_segment():
    c = qc.Circuit(3, (qc.ry(0, 1), qc.rz(1, 2), qc.ry(0, 3), qc.h(2), qc.rx(1, 4)))
    (seg,) = cp.partition(c)
    assert [b.qubits for b in seg] == [(0,), (1,), (2,)]
    assert [len(b.gates) for b in seg] == [2, 2, 1]


def test_partition_connected_pair_is_one_block():
    c = qc.Circuit(2, (qc.ry(0, 0.3), qc.cnot(0, 1), qc.ry(1, 0.5)))
    (seg,) = cp.partition(c)
    assert len(seg) == 1 and seg[0].qubits == (0, 1) and len(seg[0].gates) == 3
    c = qc.Circuit(2, (qc.ry(0, 0.3), qc.ry(1, 0.5), qc.cnot(0, 1)))
    assert len(cp.partition(c)[0]) == 1


def test_partition_splits_at_barriers():
    c = qc.Circuit(2, (qc.cnot(0, 1), qc.barrier(2), qc.cnot(0, 1)))
    segs = cp.partition(c)
    assert len(segs) == 2 and all(len(s) == 1 for s in segs)


def _blocks_unitary(blocks, n):
    gates = [g for b in blocks for g in b.gates]
    return unitary_of(qc.Circuit(n, tuple(gates)))


@pytest.mark.parametrize("block_size", [2, 3])
def test_partition_preserves_segment_unitary(block_size):
    rng = np.random.default_rng(5)
    for _ in range(60):
        n = int(rng.integers(2, 6))
        c = random_circuit(rng, n, int(rng.integers(1, 25)), True)
        segs = cp.partition(c, block_size)
        for seg, raw in zip(segs, cp.segments(c)):
            assert sorted(map(repr, (g for b in seg for g in b.gates))) == sorted(map(repr, raw))
            assert all(len(b.qubits) <= block_size for b in seg)
            assert all(set(g.qubits) <= set(b.qubits) for b in seg for g in b.gates)
            ref = unitary_of(qc.Circuit(n, tuple(raw)))
            assert np.allclose(_blocks_unitary(seg, n), ref, atol=1e-10)
        blk = segs[0][0] if segs[0] else None
        if blk is not None:
            assert np.allclose(blk.unitary, unitary_of(blk.local_circuit()))


def test_partition_rejects_bad_block_size():
    with pytest.raises(PassError):
        cp.partition(qc.Circuit(2, (qc.cnot(0, 1),)), block_size=1)


def test_break_cancellations():
    gates = [qc.cnot(0, 1), qc.cnot(0, 1), qc.ry(2, 0.1), qc.cnot(1, 2), qc.cnot(1, 2)]
    out = cp.break_cancellations(gates)
    assert not cp.has_adjacent_cancelling_cnots(qc.Circuit(3, tuple(out)))
    assert phase_distance(unitary_of(qc.Circuit(3, tuple(out))),
                          unitary_of(qc.Circuit(3, tuple(gates)))) < 1e-12
    # an intervening gate on either wire means no rewrite
    kept = [qc.cnot(0, 1), qc.rz(1, 0.2), qc.cnot(0, 1)]
    assert cp.break_cancellations(kept) == kept


@pytest.mark.parametrize("block_size", [2, 3])
def test_obfuscate_semantics_100_runs(block_size):
    rng = np.random.default_rng(6)
    worst = 0.0
    for i in range(100 if block_size == 2 else 25):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        key, dcirc, ecirc = _key_and_circuits(rng, n, m, 100 + i, int(rng.integers(0, 12)))
        out = cp.obfuscate(dcirc, ecirc, seed=i, block_size=block_size)
        worst = max(worst, cp.equivalence_residual(out, qc.compose(dcirc, ecirc)))
        assert {g.kind.value for g in out.gates} <= {"cnot", "ry", "rz"}
        assert all(v >= 2 for v in cp.two_qubit_counts(out, key.secure_qubits).values())
        assert not cp.has_adjacent_cancelling_cnots(out)
    assert worst < 1e-8


def test_obfuscate_seed_changes_structure_not_unitary():
    rng = np.random.default_rng(7)
    key, dcirc, ecirc = _key_and_circuits(rng, 3, 1, 7)
    a = cp.obfuscate(dcirc, ecirc, seed=1)
    b = cp.obfuscate(dcirc, ecirc, seed=2)
    assert not qc.structurally_equal(a, b)
    assert cp.equivalence_residual(a, b) < 1e-8
    assert qc.structurally_equal(a, cp.obfuscate(dcirc, ecirc, seed=1))


def test_trivial_data_circuit_single_secure_qubit():
    key = enc.generate_key(2, 1, n_perm_gates=0, seed=8)
    ecirc = enc.build_encryption_circuit(key)
    out = cp.obfuscate(qc.Circuit(3, ()), ecirc, seed=0)
    assert cp.two_qubit_counts(out, [2])[2] >= 2


def test_zero_angle_key_still_obfuscated():
    key = enc.SecurityKey(2, 1, (0.0,), ((2, 0), (1, 2)))
    out = cp.obfuscate(qc.Circuit(3, ()), enc.build_encryption_circuit(key), seed=0)
    assert cp.two_qubit_counts(out, [2])[2] >= 2


def test_obfuscated_encryption_matches_reference():
    rng = np.random.default_rng(9)
    worst = 0.0
    for i in range(20):
        n, m = int(rng.integers(2, 5)), int(rng.integers(1, 3))
        key = enc.generate_key(n, m, seed=200 + i)
        x = data.to_amplitudes(rng.random(1 << n))
        dcirc = qc.embed(data.synthesize_encoding(x), n + m)
        out = cp.obfuscate(dcirc, enc.build_encryption_circuit(key), seed=i)
        state = simulate(out, zero_state(n + m))
        ref = enc.encrypt_reference(x, key)
        worst = max(worst, phase_distance(state, ref))
    assert worst < 1e-8


def test_obfuscate_qubit_mismatch():
    with pytest.raises(PassError):
        cp.obfuscate(qc.Circuit(2, ()), qc.Circuit(3, (qc.ry(2, 0.1),)), seed=0)
