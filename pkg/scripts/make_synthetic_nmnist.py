"""Write an N-MNIST-layout event dataset synthesized from the MNIST IDX subset.

Each digit is swept along three saccades and converted to ON/OFF events
(see spikegrad.data.synthesize_saccade_events). Output layout matches the
published dataset: <out>/Train/<digit>/<n>.bin and <out>/Test/<digit>/<n>.bin.

    python scripts/make_synthetic_nmnist.py --n-train 500 --n-test 100
"""

import argparse
from pathlib import Path

import numpy as np

from spikegrad.data import encode_aer, load_mnist, synthesize_saccade_events

ROOT = Path(__file__).resolve().parents[1]


def write_split(images, labels, out: Path, rng) -> None:
    for n, (img, lab) in enumerate(zip(images, labels)):
        d = out / str(int(lab))
        d.mkdir(parents=True, exist_ok=True)
        (d / f"{n:05d}.bin").write_bytes(encode_aer(synthesize_saccade_events(img, rng)))


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--mnist-dir", type=Path, default=ROOT / "data" / "mnist")
    ap.add_argument("--out", type=Path, default=ROOT / "data" / "nmnist")
    ap.add_argument("--n-train", type=int, default=500)
    ap.add_argument("--n-test", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    images, labels = load_mnist(args.mnist_dir)
    rng = np.random.default_rng(args.seed)
    # Test images come from the far end of the subset so they never overlap training ones.
    write_split(images[:args.n_train], labels[:args.n_train], args.out / "Train", rng)
    write_split(images[-args.n_test:], labels[-args.n_test:], args.out / "Test", rng)
    print(f"wrote {args.n_train} train and {args.n_test} test samples to {args.out}")


if __name__ == "__main__":
    main()
