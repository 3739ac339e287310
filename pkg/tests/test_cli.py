import json
import logging
import os

import pytest

from secureqml import data
from secureqml.cli import main

from helpers import DATA_DIR


def _idx(split):
    return [f"--images={DATA_DIR / f'mnist5k-{split}-images-idx3-ubyte.gz'}",
            f"--labels={DATA_DIR / f'mnist5k-{split}-labels-idx1-ubyte.gz'}"]


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(["keygen", "--n", "4", "--m", "1", "--seed", "7", "-o", "key.json"]) == 0
    assert main(["prepare-data", *_idx("train"), "--classes", "3,6", "--limit", "60", "-o", "train.cache"]) == 0
    assert main(["prepare-data", *_idx("test"), "--classes", "3,6", "--limit", "30", "-o", "test.cache"]) == 0
    return tmp_path


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main(["frobnicate"]) == 1
    assert main(["keygen", "--n", "4", "--m", "1", "-o", str(tmp_path / "k.json")]) == 1  # no --seed
    assert main(["train", "--dataset", "x", "--seed", "1", "--choices", "a,b", "-o", "m.txt"]) in (1, 2)
    assert "usage" in capsys.readouterr().err
    assert not (tmp_path / "k.json").exists()


def test_runtime_errors_exit_2(tmp_path):
    assert main(["encrypt", "--key", str(tmp_path / "missing.json"), "--dataset", "x", "-o", "y"]) == 2
    assert main(["keygen", "--n", "4", "--m", "0", "--seed", "1", "-o", str(tmp_path / "k.json")]) == 2


def test_keygen_file_mode_and_manifest(work):
    key = work / "key.json"
    assert (key.stat().st_mode & 0o777) == 0o600
    man = json.loads((work / "key.json.manifest.json").read_text())
    assert man["command"] == "keygen" and man["seeds"] == {"seed": 7}
    assert set(man) >= {"argv", "config", "inputs", "outputs", "version", "duration_s"}


def test_world_readable_key_warns(work, caplog):
    os.chmod(work / "key.json", 0o644)
    with caplog.at_level(logging.WARNING, logger="secureqml"):
        assert main(["encrypt", "--key", "key.json", "--dataset", "test.cache", "-o", "enc.cache"]) == 0
    assert any("world-readable" in r.message for r in caplog.records)


def test_encrypt_twice_identical(work):
    for out in ("a.cache", "b.cache"):
        assert main(["encrypt", "--key", "key.json", "--dataset", "test.cache", "-o", out]) == 0
    assert (work / "a.cache").read_bytes() == (work / "b.cache").read_bytes()
    ds = data.load_dataset(work / "a.cache")
    assert ds.n_qubits == 5 and ds.encrypted_with is not None


def test_obfuscate_verification_report(work):
    assert main(["obfuscate", "--key", "key.json", "--dataset", "test.cache", "--index", "3",
                 "--seed", "1", "--emit-verification", "-o", "obf.txt"]) == 0
    rep = json.loads((work / "obf.txt.verify.json").read_text())
    assert rep["passed"] and rep["residual"] < 1e-8
    assert all(v >= 2 for v in rep["secure_two_qubit_gates"].values())
    assert main(["obfuscate", "--key", "key.json", "--dataset", "test.cache", "--index", "999",
                 "--seed", "1", "-o", "bad.txt"]) == 2


def test_train_evaluate_and_rerun(work, capsys):
    assert main(["encrypt", "--key", "key.json", "--dataset", "test.cache", "-o", "enc.cache"]) == 0
    assert main(["train", "--dataset", "train.cache", "--test", "test.cache", "--choices", "0,0",
                 "--epochs", "2", "--seed", "3", "-o", "model.txt"]) == 0
    assert (work / "model.txt.history.csv").exists()
    assert main(["evaluate", "--model", "model.txt", "--dataset", "enc.cache", "-o", "eval.json"]) == 0
    assert json.loads((work / "eval.json").read_text())["embedded_on_data_qubits"] is True
    capsys.readouterr()
    assert main(["rerun", "model.txt.manifest.json"]) == 0
    assert "byte-identically" in capsys.readouterr().out
    (work / "eval.json").write_text("tampered")
    assert main(["rerun", "eval.json.manifest.json"]) == 0  # regenerated from inputs
    (work / "enc.cache").write_bytes(b"")
    assert main(["rerun", "eval.json.manifest.json"]) == 2
