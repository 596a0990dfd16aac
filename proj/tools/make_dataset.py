#!/usr/bin/env python3
"""Emit the bundled scikit-learn handwritten digits as IDX files.

The 8x8 images are upscaled to 28x28 (3x nearest-neighbour plus a 2-pixel
border) so they match the input shape the simulator's CNN expects. The
train/test split is stratified and fixed by --seed, so the emitted bytes are
reproducible. Real MNIST IDX files can be used instead by pointing the config
at them.
"""

import argparse
import struct
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def write_idx_images(path: Path, images: np.ndarray) -> None:
    count, height, width = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 2051, count, height, width))
        f.write(images.astype(np.uint8).tobytes())


def write_idx_labels(path: Path, labels: np.ndarray) -> None:
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 2049, len(labels)))
        f.write(labels.astype(np.uint8).tobytes())


def upscale(images: np.ndarray) -> np.ndarray:
    # 8x8 -> 24x24 nearest neighbour, then pad to 28x28.
    big = np.kron(images, np.ones((3, 3)))
    padded = np.pad(big, ((0, 0), (2, 2), (2, 2)))
    return np.round(padded / 16.0 * 255.0)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("data"))
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--test-fraction", type=float, default=0.2)
    args = parser.parse_args()

    digits = load_digits()
    images = upscale(digits.images)
    labels = digits.target.astype(np.uint8)

    rng = np.random.default_rng(args.seed)
    train_idx, test_idx = [], []
    for label in np.unique(labels):
        idx = np.flatnonzero(labels == label)
        rng.shuffle(idx)
        n_test = max(1, int(round(len(idx) * args.test_fraction)))
        test_idx.extend(idx[:n_test])
        train_idx.extend(idx[n_test:])
    train_idx = np.sort(np.array(train_idx))
    test_idx = np.sort(np.array(test_idx))

    args.out.mkdir(parents=True, exist_ok=True)
    write_idx_images(args.out / "train-images-idx3-ubyte", images[train_idx])
    write_idx_labels(args.out / "train-labels-idx1-ubyte", labels[train_idx])
    write_idx_images(args.out / "test-images-idx3-ubyte", images[test_idx])
    write_idx_labels(args.out / "test-labels-idx1-ubyte", labels[test_idx])
    print(f"wrote {len(train_idx)} train / {len(test_idx)} test samples to {args.out}")


if __name__ == "__main__":
    main()
