import math

import numpy as np
import pytest

from secureqml import circuit as qc
from secureqml import data
from secureqml import encryption as enc
from secureqml import simulator as sim
from secureqml.errors import ConfigurationError

FIG3_Q = [0.4045, 0.7006, 0.2939, 0.5090]


def encrypt_via_circuit(x, key):
    full = qc.compose(qc.embed(data.synthesize_encoding(x), key.n_qubits),
                      enc.build_encryption_circuit(key))
    return sim.simulate(full, sim.zero_state(key.n_qubits))


def random_unit(rng, n):
    return data.to_amplitudes(rng.random(1 << n))


def test_generate_key_deterministic():
    a = enc.generate_key(4, 2, seed=11)
    b = enc.generate_key(4, 2, seed=11)
    assert a == b and a.fingerprint == b.fingerprint
    assert enc.generate_key(4, 2, seed=12).fingerprint != a.fingerprint
    assert len(a.perm_gates) == 2 * 6


def test_generate_key_angle_range_and_pairs():
    key = enc.generate_key(3, 1000, n_perm_gates=0, seed=3)
    d = np.array(key.delta)
    assert np.all(d >= math.pi / 8) and np.all(d < 7 * math.pi / 8)
    key = enc.generate_key(2, 1, n_perm_gates=3000, seed=4)
    pairs = {g for g in key.perm_gates}
    assert pairs == {(a, b) for a in range(3) for b in range(3) if a != b}
    counts = np.array([sum(1 for g in key.perm_gates if g == p) for p in sorted(pairs)])
    assert counts.min() > 400  # 6 ordered pairs, ~500 each


def test_generate_key_errors():
    with pytest.raises(ConfigurationError):
        enc.generate_key(4, 0, seed=1)


def test_identity_permutation():
    key = enc.generate_key(3, 1, n_perm_gates=0, seed=5)
    assert np.array_equal(enc.permutation_indices(key), np.arange(16))


def test_scaling_vector_examples():
    q = enc.scaling_vector([2 * math.pi / 5, 2 * math.pi / 3])
    assert np.allclose(q, FIG3_Q, atol=5e-5)
    assert np.array_equal(np.round(q, 1), [0.4, 0.7, 0.3, 0.5])
    assert np.allclose(enc.scaling_vector([0.0]), [1, 0])
    assert np.allclose(enc.scaling_vector([math.pi]), [0, 1], atol=1e-15)


def test_zero_angle_key_interleaves_zeros():
    key = enc.SecurityKey(2, 1, (0.0,), ())
    x = np.array([0.1, 0.3, 0.5, 0.8])
    x = x / np.linalg.norm(x)
    expected = np.zeros(8)
    expected[::2] = x
    assert np.allclose(enc.encrypt_reference(x, key), expected)
    assert np.allclose(encrypt_via_circuit(x, key), expected, atol=1e-12)


def test_reference_with_worked_example_scaling_groups():
    key = enc.SecurityKey(2, 2, (2 * math.pi / 5, 2 * math.pi / 3), ())
    x = random_unit(np.random.default_rng(0), 2)
    s2 = enc.encrypt_reference(x, key).reshape(4, 4)
    assert np.allclose(s2, np.outer(x, FIG3_Q), atol=5e-5)


def test_example_instance_is_a_permutation():
    key = enc.SecurityKey(2, 2, (2 * math.pi / 5, 2 * math.pi / 3),
                          ((2, 0), (3, 1), (0, 3), (1, 2)))
    x = random_unit(np.random.default_rng(1), 2)
    s2 = np.kron(x, enc.scaling_vector(key.delta))
    s3 = encrypt_via_circuit(x, key)
    assert np.allclose(np.sort(s3.real), np.sort(s2), atol=1e-12)
    assert not np.allclose(s3.real, s2)


def test_circuit_is_unitary():
    key = enc.generate_key(4, 2, seed=6)
    u = sim.unitary_of(enc.build_encryption_circuit(key))
    assert np.allclose(u.conj().T @ u, np.eye(64), atol=1e-9)


def test_permutation_validity_100_keys():
    rng = np.random.default_rng(7)
    for i in range(100):
        key = enc.generate_key(int(rng.integers(1, 5)), int(rng.integers(1, 3)), seed=i,
                               allow_x=bool(i % 2))
        u = sim.unitary_of(enc.permutation_circuit(key))
        assert np.array_equal(np.abs(u), np.abs(u).round())
        assert np.all(np.abs(u).sum(axis=0) == 1) and np.all(np.abs(u).sum(axis=1) == 1)
        assert np.allclose(u, enc.permutation_matrix(key))


def test_cnot_only_fixes_all_zero_state_but_x_moves_it():
    key = enc.generate_key(3, 2, seed=8)
    assert enc.permutation_indices(key)[0] == 0
    moved = [enc.permutation_indices(enc.generate_key(3, 2, seed=s, allow_x=True))[0] for s in range(20)]
    assert any(m != 0 for m in moved)


def test_group_ratio_preserved_before_permutation():
    rng = np.random.default_rng(9)
    key = enc.generate_key(3, 2, n_perm_gates=0, seed=9)
    x = random_unit(rng, 3)
    groups = enc.encrypt_reference(x, key).reshape(8, 4)
    norms = np.linalg.norm(groups, axis=1)
    for i in range(8):
        for j in range(8):
            if x[j] > 1e-12:
                assert np.isclose(norms[i] / norms[j], x[i] / x[j])


def test_dual_path_agreement_200():
    rng = np.random.default_rng(10)
    worst = 0.0
    for i in range(200):
        n, m = int(rng.integers(2, 5)), int(rng.integers(1, 3))
        key = enc.generate_key(n, m, seed=1000 + i)
        x = random_unit(rng, n)
        ref = enc.encrypt_reference(x, key)
        assert abs(np.linalg.norm(ref) - 1) < 1e-9
        worst = max(worst, np.max(np.abs(encrypt_via_circuit(x, key) - ref)))
    assert worst < 1e-9


def test_key_json_round_trip_and_tamper():
    key = enc.generate_key(4, 1, seed=12, allow_x=True)
    back = enc.SecurityKey.from_json(key.to_json())
    assert back == key and back.fingerprint == key.fingerprint
    tampered = key.to_json().replace(repr(key.delta[0])[:6], "0.1234", 1)
    with pytest.raises(ConfigurationError):
        enc.SecurityKey.from_json(tampered)


def test_encrypt_dataset():
    rng = np.random.default_rng(13)
    ds = data.Dataset(np.stack([random_unit(rng, 4) for _ in range(5)]), [0, 1, 0, 1, 1], 4, 2)
    key = enc.generate_key(4, 1, seed=13)
    e = enc.encrypt_dataset(ds, key)
    assert e.n_qubits == 5 and e.encrypted_with == key.fingerprint
    assert np.allclose(e.features[2], enc.encrypt_reference(ds.features[2], key))
    with pytest.raises(ConfigurationError):
        enc.encrypt_dataset(e, key)
