"""Convert the 5000-sample MNIST subset shipped with mlxtend into gzipped IDX files.

Usage: python3 scripts/make_mnist5k.py path/to/mnist_5k.csv.gz data/mnist5k
The first 4000 rows of a fixed permutation become the training split, the rest the test split.
"""
import gzip
import struct
import sys

import numpy as np


def write_idx(path, magic, arr):
    header = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in arr.shape)
    with gzip.GzipFile(path, "wb", mtime=0) as f:
        f.write(header + arr.astype(np.uint8).tobytes())


def main(src, out):
    raw = np.loadtxt(gzip.open(src), delimiter=",", dtype=np.int64)
    x, y = raw[:, :-1].reshape(-1, 28, 28), raw[:, -1]
    perm = np.random.RandomState(0).permutation(len(y))
    x, y = x[perm], y[perm]
    for name, sl in (("train", slice(0, 4000)), ("t10k", slice(4000, None))):
        write_idx(f"{out}/{name}-images-idx3-ubyte.gz", 0x803, x[sl])
        write_idx(f"{out}/{name}-labels-idx1-ubyte.gz", 0x801, y[sl])


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
