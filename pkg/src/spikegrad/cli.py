"""Command-line entry point.

    spikegrad train      --config mnist_antlr [--metrics out.jsonl] [--params-out p.npz]
    spikegrad eval       --config mnist_antlr --params p.npz
    spikegrad matching   --config matching_antlr [--trials 10] [--iterations 5000]
    spikegrad landscape  --config landscape --out landscape/ [--extent 1] [--grid 41]
    spikegrad gradcheck  [--trials 100]
    spikegrad encode     --mnist-dir data/mnist --index 0 --out x.npy
                         --aer sample.bin --out x.npy

Exit status: 0 success, 1 configuration error, 2 divergence, 3 verification failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, DivergenceError, ParseError

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_VERIFY = 0, 1, 2, 3

# flag -> config key; None means the flag takes no value (sets True)
HYPER_FLAGS = {
    "--alpha-v": float, "--alpha-i": float, "--beta-softmax": float, "--grad-clip": float,
    "--init-bias-center": int, "--kappa-exp": float, "--learning-rate": float,
    "--max-target-spikes": int, "--optimizer": str, "--ste-alpha": float, "--ste-beta": float,
    "--weight-decay": float, "--epoch": int, "--lambda-act": float, "--lambda-tim": float,
    "--seed": int, "--batch-size": int, "--layer-sizes": str, "--horizon-T": int,
    "--data-dir": str, "--n-train": int, "--n-valid": int, "--loss": str, "--decision": str,
    "--no-spike-eta": float, "--task": str,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML file or preset name (see `spikegrad presets`)")
    p.add_argument("--deterministic", action="store_true", help="single-threaded, no wall times in logs")
    p.add_argument("--metrics", help="line-delimited JSON metrics output")
    p.add_argument("--single-spike-restriction", action="store_true", default=None)
    p.add_argument("--bptt", action="store_true", default=None, help="RNN-like BPTT instead of the SRM-form rule")
    p.add_argument("--use-reset-paths", action="store_true", default=None)
    p.add_argument("--min-count-time-scaled", action="store_true", default=None,
                   help="divide the min-count seed by T")
    p.add_argument("-v", "--verbose", action="store_true")
    for flag, typ in HYPER_FLAGS.items():
        p.add_argument(flag, type=typ, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="spikegrad", description="Gradient-based training of spiking networks.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train on the configured task")
    _add_common(p)
    p.add_argument("--params-out")

    p = sub.add_parser("eval", help="evaluate saved parameters on the held-out split")
    _add_common(p)
    p.add_argument("--params", required=True)

    p = sub.add_parser("matching", help="random spike-train matching over seeded trials")
    _add_common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--curves-out", help="save the (trials, iterations + 1) loss array as .npy")

    p = sub.add_parser("landscape", help="loss landscape around a zero-loss matching solution")
    _add_common(p)
    p.add_argument("--out", required=True, help="directory for the CSV grids")
    p.add_argument("--extent", type=float, default=1.0,
                   help="half-width of the grid in RMS training-step lengths")
    p.add_argument("--grid", type=int, default=41)
    p.add_argument("--zero-tol", type=float, default=1e-2)

    p = sub.add_parser("gradcheck", help="run the verification oracles")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--loss-trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("encode", help="encode one MNIST image or N-MNIST file into a spike array")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--mnist-dir")
    src.add_argument("--aer")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--horizon-T", type=int)
    p.add_argument("--bin-us", type=int, default=1000)
    p.add_argument("--out", required=True)
    p.add_argument("-v", "--verbose", action="store_true")

    sub.add_parser("presets", help="list shipped configuration presets")
    return ap


def _overrides(args) -> dict:
    out = {}
    for flag in HYPER_FLAGS:
        key = flag[2:].replace("-", "_")
        val = getattr(args, key, None)
        if val is not None:
            out[key] = val
    for key in ("single_spike_restriction", "bptt", "use_reset_paths", "min_count_time_scaled"):
        if getattr(args, key, None):
            out[key] = True
    if getattr(args, "deterministic", False):
        out["deterministic"] = True
    if getattr(args, "metrics", None):
        out["metrics_path"] = args.metrics
    return out


def _experiment(args, **extra):
    from .config import build_config

    ov = _overrides(args)
    ov.update({k: v for k, v in extra.items() if v is not None})
    return build_config(args.config, ov)


def _print(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def cmd_train(args) -> int:
    from .train import MetricsWriter, train

    exp = _experiment(args, params_path=args.params_out)
    writer = MetricsWriter(exp.metrics_path, exp.deterministic)
    _, records = train(exp, writer)
    _print(records[-1])
    return EXIT_OK


def cmd_eval(args) -> int:
    from .train import evaluate, load_params, load_task_data

    exp = _experiment(args)
    params = load_params(args.params)
    params.check(exp.network)
    _, valid = load_task_data(exp)
    res = evaluate(params, valid, exp.decision_scheme, exp)
    _print({"accuracy": res.accuracy, "spikes_per_sample": res.spikes_per_sample,
            "silent_output_samples": res.silent_output_samples, "decision_ties": res.ties})
    return EXIT_OK


def cmd_matching(args) -> int:
    from .train import MetricsWriter, run_matching

    exp = _experiment(args, n_trials=args.trials, iterations=args.iterations, task="matching")
    writer = MetricsWriter(exp.metrics_path, exp.deterministic)
    curves = run_matching(exp, writer)
    if args.curves_out:
        np.save(args.curves_out, curves)
    _print({"method": exp.method_name, "initial_loss": float(curves[:, 0].mean()),
            "final_loss": float(curves[:, -1].mean()), "trials": int(curves.shape[0])})
    return EXIT_OK


def cmd_landscape(args) -> int:
    from .analysis import run_landscape

    exp = _experiment(args, task="matching")
    grid, summary = run_landscape(exp, args.out, extent=args.extent, n_grid=args.grid, zero_tol=args.zero_tol)
    _print(summary)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from . import analysis as A

    fwd = A.check_forward_equivalence(args.trials, args.seed)
    meth = A.check_method_equivalence(args.trials, args.seed)
    loss_dev = {k: max(A.finite_diff_loss_grad(k, args.seed * 1000 + s) for s in range(args.loss_trials))
                for k in ("count", "spike_train", "latency")}
    ok = fwd.ok and meth.ok and all(v < 1e-6 for v in loss_dev.values())
    _print({
        "forward": {"spike_mismatches": fwd.spike_mismatches, "max_potential_dev": fwd.max_potential_dev,
                    "failing_seeds": fwd.failing_seeds},
        "method": {"bptt_vs_activation": meth.bptt_vs_activation, "lambda_linearity": meth.lambda_linearity,
                   "layer_split": meth.layer_split, "seed_linearity": meth.seed_linearity,
                   "timing_off_spike": meth.timing_off_spike, "zero_seed_grad": meth.zero_seed_grad,
                   "failing_seeds": meth.failing_seeds},
        "loss_fd_max_dev": loss_dev,
        "ok": ok,
    })
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_encode(args) -> int:
    from . import data as D

    if args.mnist_dir:
        images, _ = D.load_mnist(args.mnist_dir, "train")
        if not 0 <= args.index < len(images):
            raise ConfigError(f"index {args.index} outside 0..{len(images) - 1}")
        x = D.latency_encode(images[args.index], args.horizon_T or 100)
    else:
        x = D.bin_events(D.load_nmnist_sample(args.aer), args.horizon_T or 300, args.bin_us)
    np.save(args.out, x)
    _print({"shape": list(x.shape), "spikes": int(x.sum()), "out": str(Path(args.out))})
    return EXIT_OK


def cmd_presets(args) -> int:
    from .config import preset_names

    print("\n".join(preset_names()))
    return EXIT_OK


COMMANDS = {
    "train": cmd_train, "eval": cmd_eval, "matching": cmd_matching, "landscape": cmd_landscape,
    "gradcheck": cmd_gradcheck, "encode": cmd_encode, "presets": cmd_presets,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, ParseError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
