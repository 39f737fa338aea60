"""Mean matching loss of every training method on the same seeded trials.

    python scripts/compare_methods.py [--trials 10] [--iterations 5000] [--raw-kernel]
"""

import argparse

from spikegrad.config import build_config
from spikegrad.train import run_matching

METHODS = {
    "antlr": ("matching_antlr", {}),
    "activation": ("matching_activation", {}),
    "timing": ("matching_timing", {}),
    "bptt": ("matching_activation", {"bptt": True}),
    "bptt_reset": ("matching_activation", {"bptt": True, "use_reset_paths": True}),
}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=10)
    ap.add_argument("--iterations", type=int, default=5000)
    ap.add_argument("--raw-kernel", action="store_true", help="keep beta_v = beta_i = beta_bias = 1")
    args = ap.parse_args()
    print(f"{'method':11s} {'initial':>9s} {'final':>9s}")
    for name, (preset, extra) in METHODS.items():
        ov = dict(extra, n_trials=args.trials, iterations=args.iterations)
        if args.raw_kernel:
            ov["normalize_kernel"] = False
        curves = run_matching(build_config(preset, ov))
        print(f"{name:11s} {curves[:, 0].mean():9.3f} {curves[:, -1].mean():9.3f}")


if __name__ == "__main__":
    main()
