"""IDX ingestion, pooling, amplitude normalization and state-preparation circuits."""
from __future__ import annotations

import gzip
import io
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import circuit as qc
from .errors import DataFormatError

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

_CACHE_MAGIC = b"SQDS"
_CACHE_VERSION = 1


# -- IDX ----------------------------------------------------------------------

def _open(path):
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(2)
    if head == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def read_idx(path, expected_magic=None) -> np.ndarray:
    """Read an IDX file of unsigned bytes (plain or gzipped)."""
    with _open(path) as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise DataFormatError(f"{path}: truncated IDX header")
    (magic,) = struct.unpack(">I", raw[:4])
    if expected_magic is not None and magic != expected_magic:
        raise DataFormatError(f"{path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    if magic >> 8 != 0x08:
        raise DataFormatError(f"{path}: only unsigned-byte IDX files are supported (magic 0x{magic:08x})")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise DataFormatError(f"{path}: truncated IDX header")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    size = int(np.prod(dims)) if dims else 0
    if len(raw) - header != size:
        raise DataFormatError(f"{path}: expected {size} data bytes for shape {dims}, got {len(raw) - header}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def write_idx(path, array, magic=None, compress=None):
    array = np.ascontiguousarray(array, dtype=np.uint8)
    if magic is None:
        magic = 0x0800 | array.ndim
    payload = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape) + array.tobytes()
    path = Path(path)
    if compress is None:
        compress = path.suffix == ".gz"
    if compress:
        with gzip.GzipFile(path, "wb", mtime=0) as fh:
            fh.write(payload)
    else:
        path.write_bytes(payload)


def load_idx(images_path, labels_path, classes, limit=None):
    """Images (uint8, ``(count, rows, cols)``) and labels relabeled to ``0..C-1``.

    Only samples whose label appears in ``classes`` are kept; the new label is
    the position of the original label in ``classes``. At most ``limit``
    samples are returned, in file order.
    """
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC)
    if images.ndim != 3:
        raise DataFormatError(f"{images_path}: expected 3 image dimensions, got {images.shape}")
    if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
        raise DataFormatError(f"label count {labels.shape} does not match image count {images.shape[0]}")
    classes = [int(c) for c in classes]
    if len(set(classes)) != len(classes):
        raise DataFormatError(f"duplicate classes in {classes}")
    lookup = np.full(256, -1, dtype=np.int64)
    lookup[classes] = np.arange(len(classes))
    new_labels = lookup[labels]
    keep = np.flatnonzero(new_labels >= 0)
    if limit is not None:
        keep = keep[: int(limit)]
    if keep.size == 0:
        warnings.warn(f"no samples with labels {classes} in {labels_path}", stacklevel=2)
    return images[keep], new_labels[keep]


# -- preprocessing ------------------------------------------------------------

def downsample(img, out_h, out_w) -> np.ndarray:
    """Average-pool ``img`` over disjoint blocks down to ``(out_h, out_w)``."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    if out_h <= 0 or out_w <= 0 or h % out_h or w % out_w:
        raise ValueError(f"cannot pool {h}x{w} evenly to {out_h}x{out_w}")
    return img.reshape(out_h, h // out_h, out_w, w // out_w).mean(axis=(1, 3))


def to_amplitudes(img) -> np.ndarray:
    """Row-major flatten and L2-normalize; an all-zero image maps to the uniform vector."""
    v = np.asarray(img, dtype=np.float64).reshape(-1)
    dim = v.shape[0]
    if dim < 2 or dim & (dim - 1):
        raise ValueError(f"{dim} pixels is not a power of two")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return np.full(dim, 1.0 / np.sqrt(dim))
    return v / norm


def preprocess(images, out_h, out_w) -> np.ndarray:
    """uint8 images -> scaled to [0, 1] -> pooled -> amplitude vectors, one per row."""
    scaled = np.asarray(images, dtype=np.float64) / 255.0
    return np.stack([to_amplitudes(downsample(im, out_h, out_w)) for im in scaled])


# -- state preparation --------------------------------------------------------

def _gray(i):
    return i ^ (i >> 1)


def multiplexed_rotation(kind, angles, controls, target):
    """Uniformly controlled rotation as alternating rotations and CNOTs.

    ``angles[j]`` is applied to ``target`` when the control register (with
    ``controls[0]`` as the most significant bit) reads ``j``. ``kind`` is
    ``"ry"`` or ``"rz"``; both flip sign under conjugation by X on the
    target, which is what the Gray-code CNOT ladder relies on.
    """
    make = {"ry": qc.ry, "rz": qc.rz}[kind]
    angles = np.asarray(angles, dtype=np.float64)
    k = len(controls)
    if angles.shape != (1 << k,):
        raise ValueError(f"{k} controls need {1 << k} angles, got {angles.shape}")
    if not np.any(angles):
        return []
    if k == 0:
        return [make(target, angles[0])]
    size = 1 << k
    j = np.arange(size)
    gray = _gray(j)
    parity = np.array([[bin(int(a) & int(g)).count("1") & 1 for a in j] for g in gray])
    transformed = ((1 - 2 * parity) @ angles) / size
    gates = []
    for i in range(size):
        if transformed[i] != 0.0:
            gates.append(make(target, transformed[i]))
        flipped = int(gray[i] ^ gray[(i + 1) % size])
        bit = flipped.bit_length() - 1
        gates.append(qc.cnot(controls[k - 1 - bit], target))
    return gates


def encoding_angles(amps) -> list[np.ndarray]:
    """Binary-tree Ry angles: entry ``k`` holds the ``2**k`` angles for qubit ``k``."""
    amps = np.asarray(amps, dtype=np.float64)
    n = amps.shape[0].bit_length() - 1
    levels = []
    for k in range(n):
        blocks = amps.reshape(1 << k, 2, -1)
        left = np.linalg.norm(blocks[:, 0, :], axis=1)
        right = np.linalg.norm(blocks[:, 1, :], axis=1)
        levels.append(2.0 * np.arctan2(right, left))
    return levels


def synthesize_encoding(amps) -> qc.Circuit:
    """Ry/CNOT circuit taking ``|0...0>`` to the non-negative unit vector ``amps``."""
    amps = np.asarray(amps, dtype=np.float64)
    dim = amps.shape[0]
    if amps.ndim != 1 or dim < 2 or dim & (dim - 1):
        raise ValueError(f"amplitude vector length {amps.shape} is not a power of two")
    if np.any(amps < 0):
        raise ValueError("amplitude encoding here is limited to non-negative vectors")
    if abs(np.linalg.norm(amps) - 1.0) > 1e-9:
        raise ValueError("amplitude vector is not normalized")
    n = dim.bit_length() - 1
    gates = []
    for k, angles in enumerate(encoding_angles(amps)):
        gates.extend(multiplexed_rotation("ry", angles, list(range(k)), k))
    return qc.Circuit(n, tuple(gates))


# -- datasets -----------------------------------------------------------------

class Sample(NamedTuple):
    features: np.ndarray
    label: int


@dataclass
class Dataset:
    """Amplitude vectors (one per row of ``features``) with integer labels.

    ``n_data_qubits`` counts the qubits of the original image encoding; for an
    encrypted set the vectors live on more qubits (see ``n_qubits``).
    """

    features: np.ndarray
    labels: np.ndarray
    n_data_qubits: int
    n_classes: int
    encrypted_with: str | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.features.shape[0] != self.labels.shape[0]:
            raise DataFormatError(f"features {self.features.shape} vs labels {self.labels.shape}")
        dim = self.features.shape[1]
        if dim & (dim - 1) or dim < 1 << self.n_data_qubits:
            raise DataFormatError(f"feature length {dim} incompatible with {self.n_data_qubits} data qubits")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataFormatError(f"labels outside [0, {self.n_classes})")

    def __len__(self):
        return self.labels.shape[0]

    def __iter__(self):
        for f, y in zip(self.features, self.labels):
            yield Sample(f, int(y))

    @property
    def n_qubits(self) -> int:
        return self.features.shape[1].bit_length() - 1

    def subset(self, index) -> "Dataset":
        return Dataset(self.features[index], self.labels[index], self.n_data_qubits,
                       self.n_classes, self.encrypted_with)


def make_dataset(images, labels, n_classes, out_h=4, out_w=4) -> Dataset:
    features = preprocess(images, out_h, out_w)
    n = features.shape[1].bit_length() - 1
    return Dataset(features, labels, n, n_classes)


def dataset_to_bytes(ds: Dataset) -> bytes:
    fp = (ds.encrypted_with or "").encode("ascii")
    out = io.BytesIO()
    out.write(_CACHE_MAGIC)
    out.write(struct.pack("<IIIIQI", _CACHE_VERSION, ds.n_data_qubits, ds.n_qubits,
                          ds.n_classes, len(ds), len(fp)))
    out.write(fp)
    dim = ds.features.shape[1]
    rows = np.empty(len(ds), dtype=[("label", "<u4"), ("amps", "<f8", (dim,))])
    rows["label"] = ds.labels
    rows["amps"] = ds.features
    out.write(rows.tobytes())
    return out.getvalue()


def dataset_from_bytes(raw: bytes) -> Dataset:
    if raw[:4] != _CACHE_MAGIC:
        raise DataFormatError("not a dataset cache file")
    head = struct.calcsize("<IIIIQI")
    version, n_data, n_qubits, n_classes, count, fp_len = struct.unpack("<IIIIQI", raw[4:4 + head])
    if version != _CACHE_VERSION:
        raise DataFormatError(f"unsupported dataset cache version {version}")
    pos = 4 + head
    fp = raw[pos:pos + fp_len].decode("ascii") or None
    pos += fp_len
    dim = 1 << n_qubits
    dtype = np.dtype([("label", "<u4"), ("amps", "<f8", (dim,))])
    if len(raw) - pos != count * dtype.itemsize:
        raise DataFormatError("dataset cache body has the wrong size")
    rows = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    return Dataset(rows["amps"].copy(), rows["label"].astype(np.int64), n_data, n_classes, fp)


def save_dataset(ds: Dataset, path):
    Path(path).write_bytes(dataset_to_bytes(ds))


def load_dataset(path) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes())
