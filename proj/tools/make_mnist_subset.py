#!/usr/bin/env python3
"""Write the 5000-image MNIST training subset bundled with mlxtend as gzipped IDX files.

Usage: make_mnist_subset.py <mlxtend wheel or mnist_5k.csv.gz> <out_dir>
"""
import gzip
import struct
import sys
import zipfile
from pathlib import Path


def read_rows(src: Path):
    if src.suffix == ".whl":
        with zipfile.ZipFile(src) as whl:
            raw = whl.read("mlxtend/data/data/mnist_5k.csv.gz")
    else:
        raw = src.read_bytes()
    return [list(map(int, line.split(","))) for line in gzip.decompress(raw).decode().splitlines()]


def main() -> None:
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    rows = read_rows(src)
    out.mkdir(parents=True, exist_ok=True)
    images = struct.pack(">IIII", 0x00000803, len(rows), 28, 28)
    images += bytes(v for row in rows for v in row[:784])
    labels = struct.pack(">II", 0x00000801, len(rows)) + bytes(row[784] for row in rows)
    # mtime=0 keeps the archives byte-stable across regenerations.
    (out / "mnist5k-images-idx3-ubyte.gz").write_bytes(gzip.compress(images, mtime=0))
    (out / "mnist5k-labels-idx1-ubyte.gz").write_bytes(gzip.compress(labels, mtime=0))


if __name__ == "__main__":
    main()
