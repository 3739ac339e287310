"""Threat-model evaluation: what an attacker holding the circuits can recover.

Two views of leakage are measured per key:

* reconstruction quality: the attacker measures the data qubits of the
  stolen state and takes ``sqrt`` of the marginal as the image (PSNR against
  the true amplitudes);
* task accuracy: the attacker's own classifier, trained on data it already
  has in the clear (secure qubits left in ``|0>``), applied to the stolen
  encrypted states. Optionally an adaptive attacker that also holds labeled
  encrypted training data is reported alongside.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import circuit as qc
from . import data
from . import encryption as enc
from . import qnn
from . import search as se
from .config import PSNR_CAP_DB
from .errors import ConfigurationError, MetricError, ScenarioError

ATTACKER_TRAINING = ("plain", "encrypted")


# -- metrics ------------------------------------------------------------------

def psnr(reference, candidate) -> float:
    """``10 log10(MAX^2 / MSE)`` with MAX the largest reference entry; capped at 100 dB."""
    ref = np.asarray(reference, dtype=np.float64).ravel()
    cand = np.asarray(candidate, dtype=np.float64).ravel()
    if ref.shape != cand.shape:
        raise MetricError(f"length mismatch: {ref.shape} vs {cand.shape}")
    peak = ref.max() if ref.size else 0.0
    if peak <= 0:
        raise MetricError("reference has no positive entry, PSNR is undefined")
    mse = float(np.mean((ref - cand) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * math.log10(peak ** 2 / mse))


def attacker_reconstruct(states, n_data: int, n_secure: int) -> np.ndarray:
    """``sqrt`` of the data-qubit marginal, for one state or a batch (rows)."""
    s = np.asarray(states)
    single = s.ndim == 1
    s = np.atleast_2d(s)
    if s.shape[1] != 1 << (n_data + n_secure):
        raise MetricError(f"state length {s.shape[1]} does not match {n_data}+{n_secure} qubits")
    probs = (np.abs(s) ** 2).reshape(s.shape[0], 1 << n_data, 1 << n_secure).sum(axis=2)
    out = np.sqrt(probs)
    return out[0] if single else out


def pixel_image(amps, pooled_shape, image_shape, scale) -> np.ndarray:
    """Render amplitudes as a full-size image: rescale to ``scale`` norm and upsample by blocks."""
    small = np.asarray(amps, dtype=np.float64).reshape(pooled_shape) * scale
    reps = (image_shape[0] // pooled_shape[0], image_shape[1] // pooled_shape[1])
    return np.kron(small, np.ones(reps))


def mean_psnr(refs, cands) -> float:
    return float(np.mean([psnr(r, c) for r, c in zip(refs, cands)]))


def pixel_psnr(images, amps, pool) -> float:
    """PSNR in the 0..1 pixel domain of the original images (norm-matched reconstruction)."""
    imgs = np.asarray(images, dtype=np.float64) / 255.0
    vals = []
    for img, a in zip(imgs, amps):
        if img.max() <= 0:
            continue
        scale = np.linalg.norm(data.downsample(img, *pool))
        vals.append(psnr(img, pixel_image(a, pool, img.shape, scale)))
    return float(np.mean(vals))


# -- scenario -----------------------------------------------------------------

@dataclass
class ScenarioConfig:
    name: str
    classes: list[int]
    data_dir: str = "data"
    prefix: str = "mnist5k"
    pool: tuple[int, int] = (4, 4)
    secure_qubits: list[int] = field(default_factory=lambda: [0, 1, 2])
    key_seeds: list[int] = field(default_factory=lambda: [1, 2, 3])
    user_choices: list[int] = field(default_factory=lambda: [0, 0, 0, 0])
    attacker_choices: list[int] = field(default_factory=lambda: [0, 0, 0, 0])
    attacker_training: str = "plain"
    adaptive_attacker: bool = True
    search: dict | None = None
    train: dict = field(default_factory=dict)
    model_seed: int = 0
    limit_train: int | None = None
    limit_test: int | None = None

    def __post_init__(self):
        if len(set(self.key_seeds)) != len(self.key_seeds):
            raise ConfigurationError("key seeds must be distinct")
        if any(m < 0 for m in self.secure_qubits):
            raise ConfigurationError("secure qubit counts must be non-negative")
        if self.attacker_training not in ATTACKER_TRAINING:
            raise ConfigurationError(f"attacker_training must be one of {ATTACKER_TRAINING}")
        self.pool = tuple(self.pool)
        qnn.TrainConfig(**self.train)  # validate early

    @classmethod
    def from_json(cls, text: str, base_dir=None) -> "ScenarioConfig":
        try:
            raw = json.loads(text)
            cfg = cls(**raw)
        except (TypeError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"malformed scenario: {exc}") from None
        if base_dir is not None and not Path(cfg.data_dir).is_absolute():
            cfg.data_dir = str(Path(base_dir) / cfg.data_dir)
        return cfg

    @classmethod
    def load(cls, path) -> "ScenarioConfig":
        path = Path(path)
        return cls.from_json(path.read_text(), path.parent)

    def to_dict(self):
        return asdict(self)

    def files(self, split):
        root = Path(self.data_dir)
        return (root / f"{self.prefix}-{split}-images-idx3-ubyte.gz",
                root / f"{self.prefix}-{split}-labels-idx1-ubyte.gz")


@dataclass
class SeedResult:
    """Raw numbers for one (setting, key seed)."""

    secure: int
    key_seed: int | None
    model: str
    accuracy: float
    psnr: float | None = None
    psnr_pixel: float | None = None
    length: int | None = None
    params: int | None = None
    choices: str = ""


def _load(cfg: ScenarioConfig):
    missing = [str(p) for split in ("train", "test") for p in cfg.files(split) if not p.exists()]
    if missing:
        raise ScenarioError("missing scenario inputs: " + ", ".join(missing))
    out = {}
    for split, limit in (("train", cfg.limit_train), ("test", cfg.limit_test)):
        images, labels = data.load_idx(*cfg.files(split), cfg.classes, limit)
        out[split] = (images, data.make_dataset(images, labels, len(cfg.classes), *cfg.pool))
    return out


def _fit(choices, ds, tcfg, seed):
    model = qnn.build_ansatz(choices, ds.n_qubits, seed)
    return qnn.train(model, ds, qnn.TrainConfig(**{**tcfg.to_dict(), "seed": seed})).model


def _pad(ds: data.Dataset, m: int) -> data.Dataset:
    """Plain data on N+M qubits with the extra qubits in ``|0>``."""
    if m == 0:
        return ds
    zero = np.zeros(1 << m)
    zero[0] = 1.0
    return data.Dataset(np.kron(ds.features, zero), ds.labels, ds.n_data_qubits, ds.n_classes)


def _size(model):
    m = qc.metrics(model.bound())
    return m.gate_count, model.n_params


def _run_key(args):
    cfg, m, key_seed, splits, user, attacker = args
    tcfg = qnn.TrainConfig(**cfg.train)
    (_, train), (test_images, test) = splits["train"], splits["test"]
    n = train.n_data_qubits
    key = enc.generate_key(n, m, seed=key_seed)
    etrain, etest = enc.encrypt_dataset(train, key), enc.encrypt_dataset(test, key)
    rec = attacker_reconstruct(etest.features, n, m)
    p_amp = mean_psnr(test.features, rec)
    p_pix = pixel_psnr(test_images, rec, cfg.pool)
    rows = []
    if attacker is None:
        attacker = _fit(cfg.attacker_choices, etrain, tcfg, cfg.model_seed + 1)
    a_len, a_par = _size(attacker)
    rows.append(SeedResult(m, key_seed, "Attacker", qnn.evaluate_accuracy(attacker, etest),
                           p_amp, p_pix, a_len, a_par, "-".join(map(str, cfg.attacker_choices))))
    if cfg.adaptive_attacker and cfg.attacker_training == "plain":
        adaptive = _fit(cfg.attacker_choices, etrain, tcfg, cfg.model_seed + 1)
        rows.append(SeedResult(m, key_seed, "Attacker (adaptive)", qnn.evaluate_accuracy(adaptive, etest),
                               p_amp, p_pix, a_len, a_par, "-".join(map(str, cfg.attacker_choices))))
    u_len, u_par = _size(user)
    vanilla = qnn.embed_model(user, n + m)
    rows.append(SeedResult(m, key_seed, "User (Vanilla)", qnn.evaluate_accuracy(vanilla, etest),
                           None, None, u_len, u_par, "-".join(map(str, cfg.user_choices))))
    if cfg.search:
        scfg = se.SearchConfig(key, train=tcfg, vanilla_choices=tuple(cfg.user_choices),
                               **{"seed": key_seed, **cfg.search})
        res = se.search(scfg, etrain, etest)
        length, params = _size(res.model)
        rows.append(SeedResult(m, key_seed, "PristiQ", res.best.accuracy, None, None, length, params,
                               "-".join(map(str, res.best.choices))))
    return rows


def run_scenario(cfg: ScenarioConfig, jobs: int = 1) -> "Report":
    splits = _load(cfg)
    tcfg = qnn.TrainConfig(**cfg.train)
    (_, train), (test_images, test) = splits["train"], splits["test"]
    n = train.n_data_qubits
    user = _fit(cfg.user_choices, train, tcfg, cfg.model_seed)
    u_len, u_par = _size(user)
    results, tasks = [], []
    for m in cfg.secure_qubits:
        if m == 0:
            att = _fit(cfg.attacker_choices, train, tcfg, cfg.model_seed + 1)
            a_len, a_par = _size(att)
            rec = attacker_reconstruct(test.features, n, 0)
            results.append(SeedResult(0, None, "User", qnn.evaluate_accuracy(user, test), None, None,
                                      u_len, u_par, "-".join(map(str, cfg.user_choices))))
            results.append(SeedResult(0, None, "Attacker", qnn.evaluate_accuracy(att, test),
                                      mean_psnr(test.features, rec), pixel_psnr(test_images, rec, cfg.pool),
                                      a_len, a_par, "-".join(map(str, cfg.attacker_choices))))
            continue
        # a plain-trained attacker does not depend on the key, so train it once per M
        attacker = (_fit(cfg.attacker_choices, _pad(train, m), tcfg, cfg.model_seed + 1)
                    if cfg.attacker_training == "plain" else None)
        tasks += [(cfg, m, ks, splits, user, attacker) for ks in cfg.key_seeds]
    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            for rows in pool.map(_run_key, tasks):
                results.extend(rows)
    else:
        for t in tasks:
            results.extend(_run_key(t))
    return Report(cfg.name, results)


# -- report -------------------------------------------------------------------

@dataclass
class Report:
    name: str
    results: list[SeedResult]

    MODEL_ORDER = ("User", "Attacker", "Attacker (adaptive)", "User (Vanilla)", "PristiQ")

    def rows(self):
        """Aggregated rows: one per (secure qubits, model), population std over key seeds."""
        groups = {}
        for r in self.results:
            groups.setdefault((r.secure, r.model), []).append(r)
        out = []
        for (m, model), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], self.MODEL_ORDER.index(kv[0][1]))):
            acc = np.array([r.accuracy for r in rs])
            row = {"secure": m, "model": model, "n": len(rs),
                   "acc_mean": float(acc.mean()), "acc_std": float(acc.std()),
                   "length": float(np.mean([r.length for r in rs])),
                   "params": float(np.mean([r.params for r in rs]))}
            for key in ("psnr", "psnr_pixel"):
                vals = [getattr(r, key) for r in rs if getattr(r, key) is not None]
                row[key + "_mean"] = float(np.mean(vals)) if vals else None
                row[key + "_std"] = float(np.std(vals)) if vals else None
            out.append(row)
        return out

    def row(self, secure, model):
        for r in self.rows():
            if r["secure"] == secure and r["model"] == model:
                return r
        raise KeyError((secure, model))

    def to_csv(self) -> str:
        cols = ["secure", "model", "n", "acc_mean", "acc_std", "psnr_mean", "psnr_std",
                "psnr_pixel_mean", "psnr_pixel_std", "length", "params"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.rows():
            w.writerow(["" if r[c] is None else (repr(r[c]) if isinstance(r[c], float) else r[c]) for c in cols])
        return buf.getvalue()

    def sidecar_csv(self) -> str:
        cols = ["secure", "key_seed", "model", "accuracy", "psnr", "psnr_pixel", "length", "params", "choices"]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in self.results:
            vals = [getattr(r, c) for c in cols]
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in vals])
        return buf.getvalue()

    def to_text(self) -> str:
        def pm(mean, std, scale=1.0):
            if mean is None:
                return "-"
            return f"{mean * scale:.2f}" if not std else f"{mean * scale:.2f} +- {std * scale:.2f}"

        header = ("#Secure", "Model", "Accuracy (%)", "PSNR (dB)", "PSNR px (dB)", "Length", "Params")
        body = [(str(r["secure"]), r["model"], pm(r["acc_mean"], r["acc_std"], 100),
                 pm(r["psnr_mean"], r["psnr_std"]), pm(r["psnr_pixel_mean"], r["psnr_pixel_std"]),
                 f"{r['length']:.2f}", f"{r['params']:.0f}") for r in self.rows()]
        widths = [max(len(x) for x in col) for col in zip(header, *body)]
        line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
        out = [self.name, line(header), line(["-" * w for w in widths])]
        out += [line(b) for b in body]
        return "\n".join(out) + "\n"
