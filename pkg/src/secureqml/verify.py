"""Invariant checks runnable from the command line (``secureqml verify``).

Each check draws its own random cases from ``seed`` and compares two
independent routes to the same quantity.
"""
from __future__ import annotations

import math

import numpy as np

from . import circuit as qc
from . import compiler, data, decompose, encryption as enc, qnn, search as se
from .simulator import simulate, unitary_of, zero_state


def _unitary(rng, dim):
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _circuit(rng, n, count):
    gates = []
    for _ in range(count):
        if n > 1 and rng.random() < 0.4:
            a, b = (int(v) for v in rng.choice(n, 2, replace=False))
            gates.append(qc.crx(a, b, rng.uniform(-3, 3)) if rng.random() < 0.3 else qc.cnot(a, b))
        else:
            q = int(rng.integers(n))
            gates.append([qc.rx, qc.ry, qc.rz][int(rng.integers(3))](q, rng.uniform(-3, 3)))
    return qc.Circuit(n, tuple(gates))


def _result(worst, tol, what):
    return {"passed": bool(worst < tol), "value": float(worst), "detail": f"{what}: max error {worst:.3g} (tol {tol:g})"}


def check_encryption(rng, count):
    worst = 0.0
    for i in range(count):
        n, m = int(rng.integers(2, 5)), int(rng.integers(1, 3))
        key = enc.generate_key(n, m, seed=int(rng.integers(2**31)))
        x = data.to_amplitudes(rng.random(1 << n))
        circ = qc.compose(qc.embed(data.synthesize_encoding(x), n + m), enc.build_encryption_circuit(key))
        worst = max(worst, float(np.max(np.abs(simulate(circ, zero_state(n + m)) - enc.encrypt_reference(x, key)))))
    return _result(worst, 1e-9, f"{count} circuit vs reference encryptions")


def check_scaling_vector(rng, count):
    q = enc.scaling_vector([2 * math.pi / 5, 2 * math.pi / 3])
    worst = float(np.max(np.abs(q - [0.4045, 0.7006, 0.2939, 0.5090])))
    return _result(worst, 5e-5, "worked-example secure-qubit state")


def check_decomposition(rng, count):
    worst = 0.0
    for dim in (2, 4):
        for _ in range(count):
            u = _unitary(rng, dim)
            worst = max(worst, decompose.phase_distance(unitary_of(decompose.decompose_block(u)), u))
    res = _result(worst, 1e-8, f"{count} random 2x2 and 4x4 re-syntheses")
    cx = unitary_of(qc.Circuit(2, (qc.cnot(0, 1),)))
    counts = (decompose.cnot_count(cx), decompose.cnot_count(np.kron(_unitary(rng, 2), _unitary(rng, 2))))
    if counts != (1, 0):
        res["passed"] = False
        res["detail"] += f"; CNOT counts for CNOT/local inputs were {counts}"
    return res


def check_compiler(rng, count):
    worst, bad = 0.0, 0
    for i in range(count):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 3))
        key = enc.generate_key(n, m, seed=int(rng.integers(2**31)))
        dcirc = qc.embed(_circuit(rng, n, int(rng.integers(0, 10))), n + m)
        ecirc = enc.build_encryption_circuit(key)
        out = compiler.obfuscate(dcirc, ecirc, seed=int(rng.integers(2**31)))
        worst = max(worst, compiler.equivalence_residual(out, qc.compose(dcirc, ecirc)))
        bad += not compiler.predicate_holds(out, key.secure_qubits)
    res = _result(worst, 1e-8, f"{count} obfuscations")
    if bad:
        res["passed"] = False
        res["detail"] += f"; {bad} outputs violate the obfuscation predicate"
    return res


def check_gradients(rng, count):
    worst, done = 0.0, 0
    while done < count:
        n = int(rng.integers(2, 7))
        model = qnn.build_ansatz(rng.integers(0, 6, size=3), n)
        if not 0 < model.n_params <= 12:
            continue
        model.theta = rng.uniform(-math.pi, math.pi, model.n_params)
        states = rng.normal(size=(3, 1 << n)) + 1j * rng.normal(size=(3, 1 << n))
        states /= np.linalg.norm(states, axis=1, keepdims=True)
        labels = rng.integers(0, 2, size=3)
        _, grad = qnn.parameter_shift_gradients(model, states, labels, 2)
        h = 1e-5
        for p in range(model.n_params):
            vals = []
            for s in (h, -h):
                shifted = model.copy()
                shifted.theta[p] += s
                vals.append(qnn.batch_loss(qnn.forward(shifted, states, 2), labels))
            worst = max(worst, abs(grad[p] - (vals[0] - vals[1]) / (2 * h)))
        done += 1
    return _result(worst, 1e-6, f"{count} parameter-shift vs finite-difference gradients")


def check_controller(rng, count):
    pol = se.ControllerPolicy.init(4, seed=int(rng.integers(2**31)), scale=0.5)
    choices = [int(c) for c in rng.integers(0, 6, size=4)]
    grads = pol.log_prob_gradient(choices)
    worst, h = 0.0, 1e-6
    for name, arr in pol.params().items():
        for idx in np.ndindex(arr.shape):
            plus, minus = pol.copy(), pol.copy()
            getattr(plus, name)[idx] += h
            getattr(minus, name)[idx] -= h
            fd = (plus.sequence_log_prob(choices) - minus.sequence_log_prob(choices)) / (2 * h)
            worst = max(worst, abs(fd - grads[name][idx]))
    return _result(worst, 1e-5, "controller backpropagation vs finite differences")


CHECKS = {
    "encryption": (check_encryption, 200, 30),
    "scaling_vector": (check_scaling_vector, 1, 1),
    "decomposition": (check_decomposition, 500, 50),
    "compiler": (check_compiler, 100, 15),
    "gradients": (check_gradients, 50, 8),
    "controller": (check_controller, 1, 1),
}


def run_all(seed, quick=False) -> dict:
    root = np.random.SeedSequence(seed)
    out = {}
    for (name, (fn, full, small)), child in zip(CHECKS.items(), root.spawn(len(CHECKS))):
        out[name] = fn(np.random.default_rng(child), small if quick else full)
    return out
