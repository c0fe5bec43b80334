#!/usr/bin/env python3
"""Convert the 10k-digit MNIST subset shipped in the `mnist` npm package to IDX.

Usage:
    npm pack mnist && tar xzf mnist-*.tgz
    python3 scripts/mnist_subset_to_idx.py package/src/digits data/mnist

Writes `subset-images-idx3-ubyte` and `subset-labels-idx1-ubyte`. Digits are
interleaved class by class so that any prefix of the file is close to
class-balanced.
"""
import json
import struct
import sys
from pathlib import Path

SIDE = 28
PIXELS = SIDE * SIDE


def main(src: Path, dst: Path) -> None:
    per_class = []
    for label in range(10):
        raw = json.loads((src / f"{label}.json").read_text())["data"]
        count = len(raw) // PIXELS
        imgs = [
            bytes(min(255, max(0, round(v * 255))) for v in raw[k * PIXELS:(k + 1) * PIXELS])
            for k in range(count)
        ]
        per_class.append(imgs)

    images, labels = [], []
    longest = max(len(c) for c in per_class)
    for k in range(longest):
        for label, imgs in enumerate(per_class):
            if k < len(imgs):
                images.append(imgs[k])
                labels.append(label)

    dst.mkdir(parents=True, exist_ok=True)
    with open(dst / "subset-images-idx3-ubyte", "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, len(images), SIDE, SIDE))
        for img in images:
            f.write(img)
    with open(dst / "subset-labels-idx1-ubyte", "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(bytes(labels))
    print(f"wrote {len(images)} images to {dst}")


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(Path(sys.argv[1]), Path(sys.argv[2]))
