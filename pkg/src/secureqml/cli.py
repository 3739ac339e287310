"""Command-line entry point: one subcommand per pipeline stage.

Every output file gets a ``<output>.manifest.json`` with the argv, resolved
configuration, seeds and input/output hashes; ``rerun`` replays a manifest
and checks that the outputs come out byte-identical.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import stat
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import circuit as qc
from . import compiler, data, encryption as enc, qnn, search as se, threat
from .errors import ConfigurationError, SecureQMLError

log = logging.getLogger("secureqml")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


# -- file helpers -------------------------------------------------------------

def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def atomic_write(path, payload, mode=None):
    """Write to a sibling temp file and rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(payload, str):
        payload = payload.encode()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        if mode is not None:
            os.chmod(tmp, mode)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _warn_if_world_readable(path):
    if Path(path).stat().st_mode & stat.S_IROTH:
        log.warning("key file %s is world-readable; restrict it with chmod 600", path)


def _read_key(path) -> enc.SecurityKey:
    _warn_if_world_readable(path)
    return enc.SecurityKey.from_json(Path(path).read_text())


def _parse_ints(text, what):
    try:
        return [int(t) for t in str(text).replace(",", " ").split()]
    except ValueError:
        raise UsageError(f"{what} must be a comma-separated list of integers, got {text!r}") from None


class Run:
    """Collects inputs/outputs of one command and writes the manifests."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.inputs: dict[str, str] = {}
        self.outputs: list[Path] = []
        self.config: dict = {}
        self.extra: dict = {}
        self.start = time.perf_counter()

    def input(self, path):
        self.inputs[str(path)] = _sha256(path)
        return path

    def write(self, path, payload, mode=None):
        atomic_write(path, payload, mode)
        self.outputs.append(Path(path))

    def finish(self):
        seeds = {k: v for k, v in vars(self.args).items() if "seed" in k and k != "func"}
        outputs = {str(p): _sha256(p) for p in self.outputs}
        manifest = {
            "command": self.args.command,
            "argv": self.argv,
            "cwd": os.getcwd(),
            "config": self.config,
            "seeds": seeds,
            "inputs": self.inputs,
            "outputs": outputs,
            "version": __version__,
            "duration_s": round(time.perf_counter() - self.start, 3),
            **self.extra,
        }
        text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        for p in self.outputs:
            atomic_write(str(p) + ".manifest.json", text)


# -- commands -----------------------------------------------------------------

def cmd_keygen(run: Run):
    a = run.args
    key = enc.generate_key(a.n, a.m, a.perm_gates, a.seed, a.allow_x)
    run.config = {"n": a.n, "m": a.m, "perm_gates": len(key.perm_gates), "allow_x": a.allow_x}
    run.write(a.output, key.to_json(), mode=0o600)
    _warn_if_world_readable(a.output)
    print(f"key {key.fingerprint} written to {a.output}")


def cmd_prepare_data(run: Run):
    a = run.args
    classes = _parse_ints(a.classes, "--classes")
    pool = _parse_ints(a.pool.replace("x", ","), "--pool")
    if len(pool) != 2:
        raise UsageError("--pool takes HxW, e.g. 4x4")
    images, labels = data.load_idx(run.input(a.images), run.input(a.labels), classes, a.limit)
    ds = data.make_dataset(images, labels, len(classes), *pool)
    run.config = {"classes": classes, "pool": pool, "limit": a.limit, "count": len(ds)}
    run.write(a.output, data.dataset_to_bytes(ds))
    print(f"{len(ds)} samples on {ds.n_qubits} qubits written to {a.output}")


def cmd_encrypt(run: Run):
    a = run.args
    key = _read_key(run.input(a.key))
    ds = data.load_dataset(run.input(a.dataset))
    out = enc.encrypt_dataset(ds, key)
    run.config = {"key_fingerprint": key.fingerprint}
    run.write(a.output, data.dataset_to_bytes(out))
    print(f"{len(out)} samples encrypted onto {out.n_qubits} qubits -> {a.output}")


def cmd_obfuscate(run: Run):
    a = run.args
    key = _read_key(run.input(a.key))
    if a.circuit:
        dcirc = qc.parse(Path(run.input(a.circuit)).read_text())
    elif a.dataset:
        ds = data.load_dataset(run.input(a.dataset))
        if ds.encrypted_with is not None:
            raise ConfigurationError("obfuscate needs the plain dataset, this one is encrypted")
        if not 0 <= a.index < len(ds):
            raise ConfigurationError(f"--index {a.index} out of range for {len(ds)} samples")
        dcirc = data.synthesize_encoding(ds.features[a.index])
    else:
        raise UsageError("obfuscate needs --circuit or --dataset")
    if dcirc.n_qubits != key.n_data_qubits:
        raise ConfigurationError(f"data circuit has {dcirc.n_qubits} qubits, key expects {key.n_data_qubits}")
    dcirc = qc.embed(dcirc, key.n_qubits)
    ecirc = enc.build_encryption_circuit(key)
    out = compiler.obfuscate(dcirc, ecirc, a.seed, a.block_size, a.dummy_pairs, key.secure_qubits)
    run.config = {"block_size": a.block_size, "dummy_pairs": a.dummy_pairs, "key_fingerprint": key.fingerprint}
    run.write(a.output, qc.serialize(out))
    m = qc.metrics(out)
    print(f"{m.gate_count} gates, depth {m.depth} -> {a.output}")
    if a.emit_verification:
        residual = compiler.equivalence_residual(out, qc.compose(dcirc, ecirc))
        report = {"residual": residual, "tolerance": 1e-8, "passed": residual < 1e-8,
                  "secure_two_qubit_gates": {str(k): v for k, v in
                                             compiler.two_qubit_counts(out, key.secure_qubits).items()}}
        run.write(str(a.output) + ".verify.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
        print(f"unitary residual {residual:.3g}")


def _train_config(a) -> qnn.TrainConfig:
    return qnn.TrainConfig(batch_size=a.batch_size, epochs=a.epochs, learning_rate=a.lr, seed=a.seed)


def cmd_train(run: Run):
    a = run.args
    ds = data.load_dataset(run.input(a.dataset))
    test = data.load_dataset(run.input(a.test)) if a.test else None
    choices = _parse_ints(a.choices, "--choices")
    cfg = _train_config(a)
    model = qnn.build_ansatz(choices, ds.n_qubits, a.seed)
    res = qnn.train(model, ds, cfg, test)
    run.config = {"choices": choices, "train": cfg.to_dict(), "n_qubits": ds.n_qubits}
    run.write(a.output, qnn.model_to_text(res.model, ds.n_classes, cfg, {"dataset_fingerprint": ds.encrypted_with}))
    run.write(str(a.output) + ".history.csv", qnn.history_to_csv(res.history))
    last = res.history[-1] if res.history else None
    if last:
        print(f"epoch {last.epoch}: loss {last.loss:.4f} train {last.train_acc:.4f}"
              + (f" test {last.test_acc:.4f}" if last.test_acc is not None else ""))


def cmd_search(run: Run):
    a = run.args
    key = _read_key(run.input(a.key))
    train = data.load_dataset(run.input(a.train))
    test = data.load_dataset(run.input(a.test))
    opts = {}
    if a.config:
        opts = json.loads(Path(run.input(a.config)).read_text())
    for name in ("episodes", "max_layers", "lam", "l_base"):
        val = getattr(a, name)
        if val is not None:
            opts[name] = val
    train_opts = opts.pop("train", {})
    tcfg = qnn.TrainConfig(**{"batch_size": a.batch_size, "epochs": a.epochs, "learning_rate": a.lr,
                              **train_opts, "seed": a.seed})
    try:
        cfg = se.SearchConfig(key, seed=a.seed, train=tcfg, **opts)
    except TypeError as exc:
        raise ConfigurationError(f"bad search config: {exc}") from None
    res = se.search(cfg, train, test, progress=lambda r: log.info(
        "episode %d %s A=%.4f L=%d R=%.4f", r.episode, r.choices, r.accuracy, r.length, r.reward))
    run.config = cfg.to_dict()
    run.write(a.output, qnn.model_to_text(res.model, train.n_classes, tcfg,
                                          {"episode": res.best.episode, "accuracy": res.best.accuracy}))
    run.write(str(a.output) + ".episodes.csv", se.episode_log_csv(res.log))
    print(f"best episode {res.best.episode}: {res.best.choices} A={res.best.accuracy:.4f} L={res.best.length}")


def cmd_evaluate(run: Run):
    a = run.args
    model, n_classes, _ = qnn.model_from_text(Path(run.input(a.model)).read_text())
    ds = data.load_dataset(run.input(a.dataset))
    embedded = False
    if model.n_qubits < ds.n_qubits:
        model = qnn.embed_model(model, ds.n_qubits)
        embedded = True
    acc = qnn.evaluate_accuracy(model, ds, n_classes)
    result = {"accuracy": acc, "count": len(ds), "embedded_on_data_qubits": embedded,
              "dataset_fingerprint": ds.encrypted_with}
    run.write(a.output, json.dumps(result, indent=2, sort_keys=True) + "\n")
    print(f"accuracy {acc:.4f} on {len(ds)} samples")


def cmd_report(run: Run):
    a = run.args
    cfg = threat.ScenarioConfig.load(run.input(a.scenario))
    for split in ("train", "test"):
        for p in cfg.files(split):
            if p.exists():
                run.input(p)
    report = threat.run_scenario(cfg, jobs=a.jobs)
    prefix = a.output or str(Path("reports") / Path(a.scenario).stem)
    run.config = cfg.to_dict()
    run.write(prefix + ".csv", report.to_csv())
    run.write(prefix + ".txt", report.to_text())
    run.write(prefix + ".seeds.csv", report.sidecar_csv())
    print(report.to_text(), end="")


def cmd_verify(run: Run):
    from . import verify
    results = verify.run_all(seed=run.args.seed, quick=run.args.quick)
    text = json.dumps(results, indent=2, sort_keys=True) + "\n"
    for name, r in results.items():
        print(f"{'PASS' if r['passed'] else 'FAIL'} {name}: {r['detail']}")
    run.config = {"quick": run.args.quick}
    if run.args.output:
        run.write(run.args.output, text)
    if not all(r["passed"] for r in results.values()):
        raise SecureQMLError("verification failed")


def cmd_rerun(run: Run):
    manifest = json.loads(Path(run.args.manifest).read_text())
    argv = manifest["argv"]
    old = os.getcwd()
    os.chdir(manifest.get("cwd", old))
    try:
        changed = [p for p, h in manifest["inputs"].items() if not Path(p).exists() or _sha256(p) != h]
        if changed:
            raise SecureQMLError("inputs changed since the manifest was written: " + ", ".join(changed))
        code = main(argv)
        if code != 0:
            return code
        mismatched = [p for p, h in manifest["outputs"].items() if _sha256(p) != h]
    finally:
        os.chdir(old)
    if mismatched:
        raise SecureQMLError("outputs differ from the manifest: " + ", ".join(mismatched))
    print(f"{len(manifest['outputs'])} outputs reproduced byte-identically")
    return 0


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="secureqml", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    k = sub.add_parser("keygen", help="sample a secret key")
    k.add_argument("--n", type=int, required=True, help="data qubits")
    k.add_argument("--m", type=int, required=True, help="secure qubits")
    k.add_argument("--perm-gates", type=int, default=None, help="CNOTs in the permutation (default 2(N+M))")
    k.add_argument("--allow-x", action="store_true", help="also use X gates in the permutation")
    k.add_argument("--seed", type=int, required=True)
    k.add_argument("-o", "--output", required=True)
    k.set_defaults(func=cmd_keygen)

    d = sub.add_parser("prepare-data", help="IDX files -> amplitude dataset cache")
    d.add_argument("--images", required=True)
    d.add_argument("--labels", required=True)
    d.add_argument("--classes", required=True, help="digits to keep, e.g. 3,6")
    d.add_argument("--pool", default="4x4")
    d.add_argument("--limit", type=int, default=None)
    d.add_argument("-o", "--output", required=True)
    d.set_defaults(func=cmd_prepare_data)

    e = sub.add_parser("encrypt", help="encrypt a dataset cache with a key")
    e.add_argument("--key", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("-o", "--output", required=True)
    e.set_defaults(func=cmd_encrypt)

    o = sub.add_parser("obfuscate", help="merge and re-synthesize the encoding and encryption circuits")
    o.add_argument("--key", required=True)
    src = o.add_mutually_exclusive_group(required=True)
    src.add_argument("--circuit", help="data circuit in text format on N qubits")
    src.add_argument("--dataset", help="plain dataset cache; encodes sample --index")
    o.add_argument("--index", type=int, default=0)
    o.add_argument("--block-size", type=int, choices=(2, 3), default=2)
    o.add_argument("--dummy-pairs", type=int, default=1)
    o.add_argument("--emit-verification", action="store_true")
    o.add_argument("--seed", type=int, required=True)
    o.add_argument("-o", "--output", required=True)
    o.set_defaults(func=cmd_obfuscate)

    def training_flags(sp):
        sp.add_argument("--epochs", type=int, default=20)
        sp.add_argument("--batch-size", type=int, default=64)
        sp.add_argument("--lr", type=float, default=0.05)
        sp.add_argument("--seed", type=int, required=True)

    t = sub.add_parser("train", help="train a fixed architecture")
    t.add_argument("--dataset", required=True)
    t.add_argument("--test", default=None)
    t.add_argument("--choices", default="0,0,0,0", help="layer design ids")
    training_flags(t)
    t.add_argument("-o", "--output", required=True)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("search", help="architecture search on encrypted data")
    s.add_argument("--key", required=True)
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--config", default=None, help="JSON search config; flags override it")
    s.add_argument("--episodes", type=int, default=None)
    s.add_argument("--max-layers", type=int, default=None)
    s.add_argument("--lam", type=float, default=None)
    s.add_argument("--l-base", type=float, default=None)
    training_flags(s)
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_search)

    v = sub.add_parser("evaluate", help="accuracy of a model file on a dataset cache")
    v.add_argument("--model", required=True)
    v.add_argument("--dataset", required=True)
    v.add_argument("-o", "--output", required=True)
    v.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="run a threat scenario and write its tables")
    r.add_argument("--scenario", required=True)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("-o", "--output", default=None, help="output prefix (default reports/<scenario>)")
    r.set_defaults(func=cmd_report)

    c = sub.add_parser("verify", help="run the invariant checks")
    c.add_argument("--seed", type=int, required=True)
    c.add_argument("--quick", action="store_true")
    c.add_argument("-o", "--output", default=None)
    c.set_defaults(func=cmd_verify)

    rr = sub.add_parser("rerun", help="replay a manifest and compare output hashes")
    rr.add_argument("manifest")
    rr.set_defaults(func=cmd_rerun)
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return 1
    except SystemExit as exc:  # --help / --version
        return 0 if exc.code in (0, None) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    run = Run(args, argv)
    try:
        code = args.func(run)
        if args.command != "rerun":
            run.finish()
        return code or 0
    except UsageError as exc:
        sys.stderr.write(f"secureqml {args.command}: {exc}\n")
        return 1
    except (SecureQMLError, OSError, ValueError) as exc:
        sys.stderr.write(f"secureqml {args.command}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
