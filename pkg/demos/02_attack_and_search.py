"""
Who can still classify the encrypted data?
==========================================

Trains the user's model on plain MNIST {3, 6}, then compares, on data
encrypted with one secure qubit:

- the plain model used as-is on the data qubits,
- an attacker's model trained on plain data,
- a model found by architecture search on the encrypted data.

Takes about 15 seconds.  Run from the repository root:
    python3 demos/02_attack_and_search.py
"""
from pathlib import Path

import numpy as np

from secureqml import data, qnn, threat
from secureqml import encryption as enc
from secureqml import search as se

DATA = Path(__file__).resolve().parents[1] / "data"


def load(split):
    x, y = data.load_idx(DATA / f"mnist5k-{split}-images-idx3-ubyte.gz",
                         DATA / f"mnist5k-{split}-labels-idx1-ubyte.gz", [3, 6])
    return data.make_dataset(x, y, 2)


train, test = load("train"), load("test")
print(len(train), "train /", len(test), "test samples on", train.n_qubits, "qubits")

cfg = qnn.TrainConfig(epochs=10)
user = qnn.train(qnn.build_ansatz([0, 0, 0, 0], 4, seed=0), train, cfg).model
print(f"\nuser model on plain data: {qnn.evaluate_accuracy(user, test):.2%}")

key = enc.generate_key(4, 1, seed=1)
etrain, etest = enc.encrypt_dataset(train, key), enc.encrypt_dataset(test, key)

# same model, secure qubit left untouched
print(f"same model on encrypted data: {qnn.evaluate_accuracy(qnn.embed_model(user, 5), etest):.2%}")

# the attacker trains on plain images it already owns (secure qubit in |0>), then runs on stolen states
padded = data.Dataset(np.kron(train.features, [1.0, 0.0]), train.labels, 4, 2)
attacker = qnn.train(qnn.build_ansatz([0, 0, 0, 0], 5, seed=1), padded, cfg).model
print(f"attacker on encrypted data: {qnn.evaluate_accuracy(attacker, etest):.2%}")
rec = threat.attacker_reconstruct(etest.features, 4, 1)
print(f"attacker reconstruction PSNR: {threat.mean_psnr(test.features, rec):.2f} dB")

# the key holder searches for an architecture that works on its own encrypted data
res = se.search(se.SearchConfig(key, episodes=8, train=cfg, seed=1), etrain, etest,
                progress=lambda r: print(f"  episode {r.episode}: {r.choices} A={r.accuracy:.3f} L={r.length}"))
print(f"searched model {res.best.choices}: {res.best.accuracy:.2%}")
