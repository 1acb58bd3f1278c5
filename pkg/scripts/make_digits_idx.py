#!/usr/bin/env python3
"""Convert scikit-learn's bundled 8x8 digits into IDX image files.

Writes a training split (for the WGAN prior) and a held-out test split
(for phantom construction), both as standard big-endian IDX uint8 files.
The 0..16 digit values are rescaled to the full 0..255 range.
"""

import argparse
import struct
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits


def write_idx(path, images):
    images = np.asarray(images, dtype=np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, images.shape[0],
                            images.shape[1], images.shape[2]))
        f.write(images.tobytes())
    print(f"wrote {path} ({images.shape[0]} images {images.shape[1]}x{images.shape[2]})")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="assets")
    parser.add_argument("--n-test", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    digits = load_digits()
    images = np.clip(np.round(digits.images / 16.0 * 255.0), 0, 255).astype(np.uint8)
    order = np.random.default_rng(args.seed).permutation(len(images))
    test = images[order[:args.n_test]]
    train = images[order[args.n_test:]]

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_idx(out / "digits_train.idx", train)
    write_idx(out / "digits_test.idx", test)


if __name__ == "__main__":
    main()
