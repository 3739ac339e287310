"""Rebuild the bundled MNIST subset as gzipped IDX files.

The 5000-image MNIST sample (500 per digit) distributed inside the mlxtend
wheel is split 400/100 per digit into train/test files. Sample order is
shuffled with a fixed seed so that ``limit`` truncation keeps classes mixed.

    pip download --no-deps mlxtend==0.24.0 -d /tmp/wheels
    python data/build_mnist5k.py /tmp/wheels/mlxtend-0.24.0-py3-none-any.whl
"""
import gzip
import io
import struct
import sys
import zipfile
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent


def write_idx(path, array, magic):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in array.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as fh:
        fh.write(header + np.ascontiguousarray(array, dtype=np.uint8).tobytes())


def main(wheel):
    with zipfile.ZipFile(wheel) as zf:
        raw = gzip.decompress(zf.read("mlxtend/data/data/mnist_5k.csv.gz"))
    table = np.loadtxt(io.BytesIO(raw), delimiter=",", dtype=np.float64)
    images = table[:, :-1].astype(np.uint8).reshape(-1, 28, 28)
    labels = table[:, -1].astype(np.uint8)

    rng = np.random.default_rng(20240501)
    train_idx, test_idx = [], []
    for digit in range(10):
        idx = np.flatnonzero(labels == digit)
        train_idx.append(idx[:400])
        test_idx.append(idx[400:])
    for name, idx in (("train", np.concatenate(train_idx)), ("test", np.concatenate(test_idx))):
        idx = rng.permutation(idx)
        write_idx(HERE / f"mnist5k-{name}-images-idx3-ubyte.gz", images[idx], 0x00000803)
        write_idx(HERE / f"mnist5k-{name}-labels-idx1-ubyte.gz", labels[idx], 0x00000801)


if __name__ == "__main__":
    main(sys.argv[1])
