"""
Encrypting one image and hiding the encryption inside the compiled circuit
==========================================================================

Run from the repository root:  python3 demos/01_encrypt_and_compile.py
"""
from pathlib import Path

import numpy as np

from secureqml import circuit as qc
from secureqml import compiler, data, threat
from secureqml import encryption as enc
from secureqml.simulator import simulate, zero_state

DATA = Path(__file__).resolve().parents[1] / "data"

# one "3" from the shipped MNIST subset, average-pooled to 4x4 -> 16 amplitudes on 4 qubits
images, labels = data.load_idx(DATA / "mnist5k-test-images-idx3-ubyte.gz",
                               DATA / "mnist5k-test-labels-idx1-ubyte.gz", [3, 6], limit=1)
x = data.preprocess(images, 4, 4)[0]
print("pooled image (amplitudes):")
print(np.round(x.reshape(4, 4), 3))

# the key: one secure qubit with angle delta, plus a random CNOT permutation over all 5 qubits
key = enc.generate_key(4, 1, seed=7)
print("\nsecure angle", np.round(key.delta, 4), " permutation CNOTs", key.perm_gates)

# the secure qubit is Ry(delta)|0>; tensoring it in spreads every amplitude over two scaled copies
print("secure-qubit state", np.round(enc.scaling_vector(key.delta), 4))

# circuit route and closed-form route give the same encrypted state
dcirc = data.synthesize_encoding(x)
ecirc = enc.build_encryption_circuit(key)
full = qc.compose(qc.embed(dcirc, 5), ecirc)
via_circuit = simulate(full, zero_state(5))
print("\ncircuit vs reference:", np.max(np.abs(via_circuit - enc.encrypt_reference(x, key))))

# what an attacker sees by measuring the data qubits
rec = threat.attacker_reconstruct(via_circuit, 4, 1)
print("\nreconstruction from the data-qubit marginal:")
print(np.round(rec.reshape(4, 4), 3))
print(f"PSNR {threat.psnr(x, rec):.2f} dB (a perfect copy would give {threat.psnr(x, x):.0f})")

# without obfuscation the Ry(delta) and the CNOT list sit at the end of the circuit in plain view
print("\nencryption gates, as submitted naively:")
print(qc.serialize(ecirc))

# merge encoding + encryption into 2-qubit blocks and re-synthesize each block
obf = compiler.obfuscate(qc.embed(dcirc, 5), ecirc, seed=11)
m_in, m_out = qc.metrics(full), qc.metrics(obf)
print(f"before: {m_in.gate_count} gates, depth {m_in.depth};  after: {m_out.gate_count} gates, depth {m_out.depth}")
print("two-qubit gates per qubit after compilation:", compiler.two_qubit_counts(obf, range(5)))
print("unitary residual (mod global phase):", compiler.equivalence_residual(obf, full))
