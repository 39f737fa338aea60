"""Build a 10k-image MNIST subset in IDX format from the ``mnist`` npm package.

The npm package ships 1001 digits per class as grayscale values in [0, 1]
rounded to 3 decimals; ``round(v * 255)`` recovers the original u8 pixels.
Output: data/mnist/train-images-idx3-ubyte.gz and train-labels-idx1-ubyte.gz,
class-interleaved by a fixed permutation.

    python scripts/fetch_mnist_npm.py [--package-dir DIR]
"""

import argparse
import json
import subprocess
import tarfile
import tempfile
from pathlib import Path

import numpy as np

from spikegrad.data import write_idx

ROOT = Path(__file__).resolve().parents[1]


def unpack(workdir: Path) -> Path:
    subprocess.run(["npm", "pack", "mnist@1.1.0"], cwd=workdir, check=True, capture_output=True)
    with tarfile.open(workdir / "mnist-1.1.0.tgz") as tar:
        tar.extractall(workdir)
    return workdir / "package"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--package-dir", type=Path, help="already unpacked npm package")
    ap.add_argument("--out", type=Path, default=ROOT / "data" / "mnist")
    args = ap.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        pkg = args.package_dir or unpack(Path(tmp))
        images, labels = [], []
        for digit in range(10):
            flat = np.array(json.loads((pkg / "src" / "digits" / f"{digit}.json").read_text())["data"])
            imgs = np.rint(flat.reshape(-1, 28, 28) * 255).astype(np.uint8)
            images.append(imgs)
            labels.append(np.full(len(imgs), digit, dtype=np.uint8))
    images = np.concatenate(images)
    labels = np.concatenate(labels)
    order = np.random.default_rng(0).permutation(len(labels))
    args.out.mkdir(parents=True, exist_ok=True)
    write_idx(args.out / "train-images-idx3-ubyte.gz", images[order])
    write_idx(args.out / "train-labels-idx1-ubyte.gz", labels[order])
    print(f"wrote {len(labels)} images to {args.out}")


if __name__ == "__main__":
    main()
