#!/usr/bin/env python3
"""Materialize the benchmark datasets as IDX files under data/.

MNIST comes from mlxtend's bundled 5,000-digit stratified subset
(500 per class). USPS is converted from parquet exports (HuggingFace
image-dict layout: PNG bytes + integer label); pass --usps-dir if they
are not in /tmp. Both end up in the classic IDX byte format the CLI
reads, so the repository carries no loader-specific code paths.
"""

import argparse
import io
import struct
import sys
from pathlib import Path

import numpy as np


def write_idx_images(path: Path, images: np.ndarray) -> None:
    if images.dtype != np.uint8 or images.ndim != 3:
        raise ValueError(f"expected (m, rows, cols) uint8, got {images.dtype} {images.shape}")
    m, rows, cols = images.shape
    with open(path, "wb") as f:
        f.write(struct.pack(">IIII", 0x00000803, m, rows, cols))
        f.write(images.tobytes())


def write_idx_labels(path: Path, labels: np.ndarray) -> None:
    labels = labels.astype(np.uint8)
    with open(path, "wb") as f:
        f.write(struct.pack(">II", 0x00000801, len(labels)))
        f.write(labels.tobytes())


def fetch_mnist(out_dir: Path) -> None:
    from mlxtend.data import mnist_data

    x, y = mnist_data()
    images = x.reshape(-1, 28, 28).astype(np.uint8)
    counts = np.bincount(y.astype(int))
    print(f"mnist: {len(images)} digits, per-class {counts.tolist()}")
    write_idx_images(out_dir / "mnist_images.idx", images)
    write_idx_labels(out_dir / "mnist_labels.idx", y)


def fetch_usps(out_dir: Path, usps_dir: Path) -> None:
    import pandas as pd
    from PIL import Image

    for split in ("train", "test"):
        src = usps_dir / f"usps_{split}.parquet"
        if not src.exists():
            print(f"usps: {src} not found, skipping", file=sys.stderr)
            continue
        df = pd.read_parquet(src)
        images = np.stack(
            [np.asarray(Image.open(io.BytesIO(rec["bytes"])).convert("L")) for rec in df["image"]]
        ).astype(np.uint8)
        labels = df["label"].to_numpy()
        print(f"usps {split}: {len(images)} digits of {images.shape[1]}x{images.shape[2]}")
        write_idx_images(out_dir / f"usps_{split}_images.idx", images)
        write_idx_labels(out_dir / f"usps_{split}_labels.idx", labels)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", type=Path, default=Path(__file__).resolve().parent.parent / "data")
    parser.add_argument("--usps-dir", type=Path, default=Path("/tmp"))
    args = parser.parse_args()
    args.out_dir.mkdir(parents=True, exist_ok=True)
    fetch_mnist(args.out_dir)
    fetch_usps(args.out_dir, args.usps_dir)


if __name__ == "__main__":
    main()
