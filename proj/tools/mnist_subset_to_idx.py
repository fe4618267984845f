#!/usr/bin/env python3
"""Convert the 5000-image MNIST sample shipped with mlxtend into IDX files.

Usage: mnist_subset_to_idx.py <mlxtend wheel or mnist_5k.csv.gz> <out_dir>

Writes train-images-idx3-ubyte / train-labels-idx1-ubyte (4000 images) and
t10k-images-idx3-ubyte / t10k-labels-idx1-ubyte (1000 images). The split is
stratified: 400 train / 100 test images per digit, order shuffled with a fixed
seed.
"""
import gzip
import random
import struct
import sys
import zipfile
from pathlib import Path


def read_rows(src: Path):
    if src.suffix == ".whl":
        with zipfile.ZipFile(src) as z:
            raw = z.read("mlxtend/data/data/mnist_5k.csv.gz")
    else:
        raw = src.read_bytes()
    text = gzip.decompress(raw).decode()
    rows = []
    for line in text.strip().splitlines():
        vals = [int(float(v)) for v in line.split(",")]
        rows.append((vals[:-1], vals[-1]))
    return rows


def write_idx(out: Path, stem: str, rows):
    with open(out / f"{stem}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for pixels, _ in rows:
            f.write(bytes(pixels))
    with open(out / f"{stem}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(rows)))
        f.write(bytes(label for _, label in rows))


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    rows = read_rows(src)
    by_digit = {d: [r for r in rows if r[1] == d] for d in range(10)}
    train, test = [], []
    for d in range(10):
        train += by_digit[d][:400]
        test += by_digit[d][400:500]
    rng = random.Random(20211206)
    rng.shuffle(train)
    rng.shuffle(test)
    write_idx(out, "train", train)
    write_idx(out, "t10k", test)
    print(f"wrote {len(train)} train / {len(test)} test images to {out}")


if __name__ == "__main__":
    main()
