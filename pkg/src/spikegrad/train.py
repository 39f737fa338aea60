"""Training loops for the matching, MNIST and N-MNIST tasks, plus evaluation."""

from __future__ import annotations

import json
import logging
import math
import time
from contextlib import contextmanager, nullcontext
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import data as D
from . import losses as LS
from .config import ExperimentConfig
from .errors import DivergenceError
from .grad import ParamGrads, backprop_antlr, backprop_rnn_bptt
from .neuron import Parameters, forward_rnn
from .optim import OptimizerState, clip_grads, init_params, optimizer_step

log = logging.getLogger(__name__)


@dataclass
class MetricsRecord:
    kind: str
    iteration: int
    epoch: int
    train_loss: float | None = None
    valid_accuracy: float | None = None
    test_accuracy: float | None = None
    spikes_per_sample: float | None = None
    silent_neurons: int | None = None
    vstar_guard: int = 0
    silent_output_samples: int | None = None
    decision_ties: int | None = None
    wall_time: float | None = None


class MetricsWriter:
    """Line-delimited JSON; wall time is dropped in deterministic mode so reruns compare equal."""

    def __init__(self, path=None, deterministic: bool = False):
        self.records: list[dict] = []
        self.path = Path(path) if path else None
        self.deterministic = deterministic
        self.t0 = time.perf_counter()
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def write(self, rec: MetricsRecord) -> None:
        rec.wall_time = None if self.deterministic else round(time.perf_counter() - self.t0, 3)
        row = asdict(rec)
        self.records.append(row)
        if self.path:
            with self.path.open("a") as fh:
                fh.write(json.dumps(row, sort_keys=True) + "\n")


@contextmanager
def single_threaded():
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        yield
        return
    with threadpool_limits(limits=1):
        yield


# ---------------------------------------------------------------------------
# one gradient evaluation


def loss_seeds(out_spikes: np.ndarray, target, exp: ExperimentConfig) -> LS.LossGrads:
    kind = exp.loss_kind
    if kind == "spike_train":
        return LS.spike_train_loss(out_spikes, LS.SpikeTrain(target, exp.kappa_exp))
    n_out = out_spikes.shape[-1]
    if kind == "count":
        targets = exp.max_target_spikes * np.eye(n_out)[np.asarray(target)]
        return LS.count_loss(out_spikes, LS.Count(targets))
    seeds = LS.latency_loss(out_spikes, LS.Latency(target, exp.beta_softmax))
    if exp.use_min_count:
        seeds = seeds + LS.min_count_variant(out_spikes, LS.MinCount(target, exp.min_count_time_scaled))
    return seeds


def compute_grads(params: Parameters, x: np.ndarray, target, exp: ExperimentConfig):
    """Forward, loss seeds, backward; returns (trace, LossGrads, GradientTrace, ParamGrads)."""
    cfg = exp.neuron
    trace = forward_rnn(params, x, exp.network, cfg)
    seeds = loss_seeds(trace.output, target, exp)
    if exp.bptt:
        gtrace, grads = backprop_rnn_bptt(trace, params, seeds, exp.method, cfg)
    else:
        gtrace, grads = backprop_antlr(trace, params, seeds, exp.method, cfg)
    if exp.use_no_spike_penalty:
        grads = LS.no_spike_penalty(trace, grads, LS.NoSpikePenalty(exp.no_spike_eta))
    return trace, seeds, gtrace, grads


def update(params: Parameters, grads: ParamGrads, state: OptimizerState, exp: ExperimentConfig,
           iteration: int | None = None) -> Parameters:
    grads = clip_grads(grads, exp.grad_clip, exp.grad_clip_mode)
    new = optimizer_step(params, grads, state)
    if not all(np.all(np.isfinite(a)) for a in new.weights + new.biases):
        where = "" if iteration is None else f" at iteration {iteration}"
        raise DivergenceError(f"non-finite parameters after the update{where}")
    return new


def make_optimizer(exp: ExperimentConfig) -> OptimizerState:
    return OptimizerState(exp.optimizer, exp.learning_rate, exp.weight_decay, exp.grad_clip)


def _check_loss(value: float, iteration: int) -> None:
    if not math.isfinite(value):
        raise DivergenceError(f"non-finite loss at iteration {iteration}")


# ---------------------------------------------------------------------------
# matching task


def matching_instance(exp: ExperimentConfig, trial: int):
    """Input trains, target trains and initial parameters for one seeded trial."""
    T = exp.horizon_T
    n_in, n_out = exp.layer_sizes[0], exp.layer_sizes[-1]
    x = D.random_spiketrain([exp.seed, trial, 0], n_in, exp.input_spikes, T)
    target = D.random_spiketrain([exp.seed, trial, 1], n_out, exp.target_spikes, T)
    params = init_params(exp.network, [exp.seed, trial, 2], exp.init_bias_center, exp.neuron)
    return x, target, params


def train_matching_trial(exp: ExperimentConfig, trial: int = 0, target=None, params=None,
                         record_grads: bool = False):
    """SGD/Adam on one input/target pair. Returns (losses, final params, grad history).

    ``losses[k]`` is the loss before update k; the last entry follows the final update.
    """
    x, tgt, p0 = matching_instance(exp, trial)
    target = tgt if target is None else target
    params = p0 if params is None else params
    state = make_optimizer(exp)
    losses = np.empty(exp.iterations + 1)
    history = []
    for it in range(exp.iterations):
        _, seeds, _, grads = compute_grads(params, x, target, exp)
        losses[it] = seeds.loss_value
        _check_loss(seeds.loss_value, it)
        if record_grads:
            history.append(grads.flatten())
        params = update(params, grads, state, exp, it)
    trace = forward_rnn(params, x, exp.network, exp.neuron)
    losses[-1] = loss_seeds(trace.output, target, exp).loss_value
    return losses, params, history


@dataclass
class Optimum:
    trial: int
    iterations: int
    params: Parameters
    history: list
    x: np.ndarray
    target: np.ndarray


def train_to_optimum(exp: ExperimentConfig, max_trials: int = 20) -> Optimum:
    """Train seeded matching instances until one reaches zero loss; stop there.

    The gradient history up to that point is kept for principal directions.
    Raises DivergenceError if no trial gets there within ``exp.iterations``.
    """
    for trial in range(max_trials):
        x, target, params = matching_instance(exp, trial)
        state = make_optimizer(exp)
        history = []
        for it in range(exp.iterations):
            _, seeds, _, grads = compute_grads(params, x, target, exp)
            _check_loss(seeds.loss_value, it)
            if seeds.loss_value == 0.0:
                if len(history) >= 3:
                    return Optimum(trial, it, params, history, x, target)
                break
            history.append(grads.flatten())
            params = update(params, grads, state, exp, it)
        log.info("trial %d did not reach zero loss", trial)
    raise DivergenceError(f"no trial out of {max_trials} reached zero loss in {exp.iterations} iterations")


def run_matching(exp: ExperimentConfig, writer: MetricsWriter | None = None) -> np.ndarray:
    """Loss curves of shape (n_trials, iterations + 1) for the configured method."""
    ctx = single_threaded() if exp.deterministic else nullcontext()
    curves = []
    with ctx:
        for trial in range(exp.n_trials):
            losses, _, _ = train_matching_trial(exp, trial)
            curves.append(losses)
            log.info("trial %d: loss %.4g -> %.4g", trial, losses[0], losses[-1])
    curves = np.array(curves)
    if writer is not None:
        mean = curves.mean(axis=0)
        for it in range(0, exp.iterations + 1, max(exp.log_every, 1)):
            writer.write(MetricsRecord("matching", it, 0, train_loss=float(mean[it])))
        writer.write(MetricsRecord("summary", exp.iterations, 0, train_loss=float(mean[-1])))
    return curves


# ---------------------------------------------------------------------------
# datasets


class MnistDataset:
    """Latency-coded MNIST images, encoded per batch."""

    def __init__(self, images: np.ndarray, labels: np.ndarray, T: int):
        self.images, self.labels, self.T = images, labels.astype(np.int64), T

    def __len__(self):
        return len(self.labels)

    def batch(self, idx):
        x = D.latency_encode(self.images[idx], self.T)
        return x, self.labels[idx]


class NmnistDataset:
    """N-MNIST event files binned into T steps of ``bin_us`` microseconds."""

    def __init__(self, files, labels, T: int = 300, bin_us: int = 1000):
        self.events = [D.load_nmnist_sample(f) for f in files]
        self.labels = np.asarray(labels, dtype=np.int64)
        self.T, self.bin_us = T, bin_us

    def __len__(self):
        return len(self.labels)

    def batch(self, idx):
        x = np.stack([D.bin_events(self.events[i], self.T, self.bin_us) for i in idx], axis=1)
        return x, self.labels[idx]

    @classmethod
    def from_directory(cls, root, T: int = 300, limit: int | None = None, bin_us: int = 1000):
        """Reads ``root/<digit>/*.bin`` as in the published dataset layout."""
        root = Path(root)
        files, labels = [], []
        for digit in range(10):
            for f in sorted((root / str(digit)).glob("*.bin")):
                files.append(f)
                labels.append(digit)
        order = np.random.default_rng(0).permutation(len(files))
        if limit is not None:
            order = order[:limit]
        return cls([files[i] for i in order], [labels[i] for i in order], T, bin_us)


def load_task_data(exp: ExperimentConfig):
    if exp.task == "mnist":
        images, labels = D.load_mnist(exp.data_dir, "train")
        tr = slice(0, exp.n_train)
        va = slice(exp.n_train, exp.n_train + exp.n_valid)
        return (MnistDataset(images[tr], labels[tr], exp.horizon_T),
                MnistDataset(images[va], labels[va], exp.horizon_T))
    if exp.task == "nmnist":
        root = Path(exp.data_dir)
        train = NmnistDataset.from_directory(root / "Train", exp.horizon_T, exp.n_train)
        test = NmnistDataset.from_directory(root / "Test", exp.horizon_T, exp.n_valid)
        return train, test
    raise ValueError(f"task {exp.task!r} has no dataset")


@dataclass
class EvalResult:
    accuracy: float
    spikes_per_sample: float
    silent_output_samples: int
    ties: int
    silent_neurons: int
    predictions: np.ndarray


def decide(out_spikes: np.ndarray, scheme: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Predicted class per sample, silent-output flags, tie flags. Ties go to the lowest index."""
    silent = ~out_spikes.any(axis=(0, -1))
    if scheme == "earliest_spike":
        score, _ = LS.first_spike_times(out_spikes)
        best = score.min(axis=-1, keepdims=True)
        pred = np.argmin(score, axis=-1)
    elif scheme == "most_spike":
        score = out_spikes.sum(axis=0)
        best = score.max(axis=-1, keepdims=True)
        pred = np.argmax(score, axis=-1)
    else:
        raise ValueError(f"unknown decision scheme {scheme!r}")
    ties = ((score == best).sum(axis=-1) > 1) & ~silent
    return pred, silent, ties


def mean_loss(params: Parameters, dataset, exp: ExperimentConfig, batch_size: int = 100) -> float:
    """Per-sample training objective over a whole dataset, forward pass only."""
    total = 0.0
    for start in range(0, len(dataset), batch_size):
        x, y = dataset.batch(np.arange(start, min(start + batch_size, len(dataset))))
        trace = forward_rnn(params, x, exp.network, exp.neuron)
        total += loss_seeds(trace.output, y, exp).loss_value
    return total / len(dataset)


def evaluate(params: Parameters, dataset, scheme: str, exp: ExperimentConfig, batch_size: int = 100) -> EvalResult:
    preds, silent_n, ties_n, spikes = [], 0, 0, 0.0
    silent_neurons = 0
    for start in range(0, len(dataset), batch_size):
        idx = np.arange(start, min(start + batch_size, len(dataset)))
        x, y = dataset.batch(idx)
        trace = forward_rnn(params, x, exp.network, exp.neuron)
        pred, silent, ties = decide(trace.output, scheme)
        preds.append(pred)
        silent_n += int(silent.sum())
        ties_n += int(ties.sum())
        spikes += float(trace.spike_counts().sum())
        silent_neurons += sum(int((s.sum(axis=0) == 0).sum()) for s in trace.S[1:])
    preds = np.concatenate(preds)
    n = len(dataset)
    acc = float(np.mean(preds == dataset.labels[:n]))
    return EvalResult(acc, spikes / n, silent_n, ties_n, silent_neurons, preds)


def train(exp: ExperimentConfig, writer: MetricsWriter | None = None, datasets=None):
    """Mini-batch training on a dataset task; returns (final params, list of records)."""
    exp.validate()
    writer = writer or MetricsWriter(exp.metrics_path, exp.deterministic)
    if exp.task == "matching":
        losses, params, _ = train_matching_trial(exp, 0)
        for it in range(0, exp.iterations + 1, max(exp.log_every, 1)):
            writer.write(MetricsRecord("matching", it, 0, train_loss=float(losses[it])))
        writer.write(MetricsRecord("summary", exp.iterations, 0, train_loss=float(losses[-1])))
        return params, writer.records
    ctx = single_threaded() if exp.deterministic else nullcontext()
    with ctx:
        train_set, valid_set = datasets or load_task_data(exp)
        params = init_params(exp.network, exp.seed, exp.init_bias_center, exp.neuron)
        state = make_optimizer(exp)
        rng = np.random.default_rng(exp.seed)
        it = 0
        for epoch in range(exp.epoch):
            order = rng.permutation(len(train_set))
            running, n_seen, guard = 0.0, 0, 0
            for start in range(0, len(order), exp.batch_size):
                idx = order[start:start + exp.batch_size]
                x, y = train_set.batch(idx)
                _, seeds, gtrace, grads = compute_grads(params, x, y, exp)
                _check_loss(seeds.loss_value, it)
                params = update(params, grads, state, exp, it)
                running += seeds.loss_value
                n_seen += len(idx)
                guard += gtrace.vstar_guard
                if it % max(exp.log_every, 1) == 0:
                    writer.write(MetricsRecord("batch", it, epoch, train_loss=seeds.loss_value / len(idx),
                                               vstar_guard=gtrace.vstar_guard))
                it += 1
            res = evaluate(params, valid_set, exp.decision_scheme, exp)
            log.info("epoch %d: loss %.4f acc %.4f spikes %.1f", epoch, running / n_seen, res.accuracy,
                     res.spikes_per_sample)
            writer.write(MetricsRecord(
                "eval", it, epoch + 1, train_loss=running / n_seen, valid_accuracy=res.accuracy,
                spikes_per_sample=res.spikes_per_sample, silent_neurons=res.silent_neurons,
                vstar_guard=guard, silent_output_samples=res.silent_output_samples, decision_ties=res.ties,
            ))
        final = evaluate(params, valid_set, exp.decision_scheme, exp)
        writer.write(MetricsRecord(
            "summary", it, exp.epoch, test_accuracy=final.accuracy, spikes_per_sample=final.spikes_per_sample,
            silent_neurons=final.silent_neurons, silent_output_samples=final.silent_output_samples,
            decision_ties=final.ties,
        ))
    if exp.params_path:
        save_params(params, exp.params_path)
    return params, writer.records


def save_params(params: Parameters, path) -> None:
    arrays = {f"w{l}": w for l, w in enumerate(params.weights)}
    arrays.update({f"b{l}": b for l, b in enumerate(params.biases)})
    np.savez(path, **arrays)


def load_params(path) -> Parameters:
    with np.load(path) as z:
        n = len([k for k in z.files if k.startswith("w")])
        return Parameters([z[f"w{l}"] for l in range(n)], [z[f"b{l}"] for l in range(n)])
