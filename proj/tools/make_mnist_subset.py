#!/usr/bin/env python3
"""Write class-balanced MNIST subsets in IDX format.

Source: the 5000-sample MNIST extract shipped inside the mlxtend wheel
(mlxtend/data/data/mnist_5k.csv.gz, 784 pixel columns then the label).

    pip download --no-deps mlxtend
    python3 tools/make_mnist_subset.py mlxtend-*.whl data/
"""
import argparse
import gzip
import pathlib
import random
import struct
import zipfile


def read_rows(wheel):
    with zipfile.ZipFile(wheel) as z:
        text = gzip.decompress(z.read("mlxtend/data/data/mnist_5k.csv.gz")).decode()
    rows = []
    for line in text.strip().splitlines():
        fields = line.split(",")
        pixels = bytes(int(float(v)) for v in fields[:-1])
        rows.append((pixels, int(fields[-1])))
    return rows


def write_idx(prefix, rows):
    with open(f"{prefix}-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(rows), 28, 28))
        for pixels, _ in rows:
            f.write(pixels)
    with open(f"{prefix}-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(rows)))
        f.write(bytes(label for _, label in rows))


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("wheel")
    parser.add_argument("out_dir")
    parser.add_argument("--per-class", type=int, default=100)
    parser.add_argument("--seed", type=int, default=20221)
    args = parser.parse_args()

    by_class = {}
    for row in read_rows(args.wheel):
        by_class.setdefault(row[1], []).append(row)
    rng = random.Random(args.seed)
    train, val = [], []
    for label in sorted(by_class):
        rows = by_class[label]
        rng.shuffle(rows)
        train += rows[: args.per_class]
        val += rows[args.per_class : 2 * args.per_class]
    rng.shuffle(train)
    rng.shuffle(val)

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "mnist1k-train", train)
    write_idx(out / "mnist1k-val", val)


if __name__ == "__main__":
    main()
