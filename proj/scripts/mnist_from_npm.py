#!/usr/bin/env python3
"""Build a small MNIST subset in IDX format from the `mnist` npm package.

The package ships about 1000 digits per class as JSON (src/digits/<d>.json,
key "data": flat list of 28x28 intensities in [0,1]). Images are written in
round-robin class order, so the first 10*k records hold k examples per class.

    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_from_npm.py package/src/digits data/mnist --per-class 100
"""
import argparse
import json
import pathlib
import struct

SIDE = 28


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("digits_dir", type=pathlib.Path)
    ap.add_argument("out_dir", type=pathlib.Path)
    ap.add_argument("--per-class", type=int, default=100)
    args = ap.parse_args()

    per_class = []
    for d in range(10):
        data = json.loads((args.digits_dir / f"{d}.json").read_text())["data"]
        count = len(data) // (SIDE * SIDE)
        if count < args.per_class:
            raise SystemExit(f"class {d}: only {count} images")
        per_class.append(data)

    images = bytearray()
    labels = bytearray()
    for k in range(args.per_class):
        for d in range(10):
            flat = per_class[d][k * SIDE * SIDE:(k + 1) * SIDE * SIDE]
            images.extend(min(255, max(0, round(v * 255))) for v in flat)
            labels.append(d)

    n = 10 * args.per_class
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "images-idx3-ubyte").write_bytes(struct.pack(">IIII", 0x803, n, SIDE, SIDE) + images)
    (args.out_dir / "labels-idx1-ubyte").write_bytes(struct.pack(">II", 0x801, n) + labels)


if __name__ == "__main__":
    main()
