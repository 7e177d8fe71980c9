#!/usr/bin/env python3
"""Fetch Fashion-MNIST from the npm registry package `fashion-mnist` and
write the four standard IDX files.

The npm package ships the 70k images grouped by class without the original
train/test boundary; the first 6000 images of each class become the training
split and the remainder the test split.

usage: fetch_fmnist.py <out_dir>
"""
import json
import os
import struct
import subprocess
import sys
import tarfile
import tempfile

TRAIN_PER_CLASS = 6000


def write_idx_images(path, images):
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, len(images), 28, 28))
        for img in images:
            f.write(bytes(img))


def write_idx_labels(path, labels):
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(bytes(labels))


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "fmnist"
    os.makedirs(out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        subprocess.run(["npm", "pack", "fashion-mnist@1.1.0"], cwd=tmp, check=True)
        with tarfile.open(os.path.join(tmp, "fashion-mnist-1.1.0.tgz")) as tar:
            tar.extractall(tmp)
        train, test = [], []
        for label in range(10):
            with open(os.path.join(tmp, "package", "src", "clothes", f"{label}.json")) as f:
                rows = json.load(f)["data"]
            # the package carries a couple of empty rows; drop them
            rows = [row for row in rows if len(row) == 28 * 28]
            for k, row in enumerate(rows):
                (train if k < TRAIN_PER_CLASS else test).append((row, label))
    # interleave classes so any prefix of a split is roughly balanced
    for name, split in (("train", train), ("t10k", test)):
        order = sorted(range(len(split)), key=lambda i: (i % TRAIN_PER_CLASS, split[i][1]))
        write_idx_images(os.path.join(out, f"{name}-images-idx3-ubyte"), [split[i][0] for i in order])
        write_idx_labels(os.path.join(out, f"{name}-labels-idx1-ubyte"), [split[i][1] for i in order])
        print(f"{name}: {len(split)} images")


if __name__ == "__main__":
    main()
