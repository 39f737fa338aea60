"""Experiment configuration: defaults < config file < command-line flags.

Config files are YAML. Keys use the hyper-parameter names (``alpha_v``,
``grad_clip``, ``kappa_exp``, ...). Sections are allowed and flattened, so

    neuron:
      alpha_v: 0.99

and ``alpha_v: 0.99`` at top level are equivalent. A bare name such as
``mnist_antlr`` refers to a preset shipped in ``spikegrad/configs``.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .errors import ConfigError
from .grad import MethodConfig
from .neuron import NetworkShape, NeuronConfig, normalized_config

TASKS = ("matching", "mnist", "nmnist")
LOSSES = ("auto", "count", "spike_train", "latency")


@dataclass
class ExperimentConfig:
    task: str = "matching"
    layer_sizes: tuple = (10, 50, 50, 5)
    horizon_T: int = 100
    single_spike_restriction: bool = False

    alpha_v: float = 0.95
    alpha_i: float = 0.95
    beta_v: float = 1.0
    beta_i: float = 1.0
    beta_bias: float = 1.0
    theta: float = 1.0
    normalize_kernel: bool = True

    lambda_act: float = 1.0
    lambda_tim: float = 1.0
    ste_alpha: float = 0.3
    ste_beta: float = 1.0
    use_reset_paths: bool = False
    bptt: bool = False

    loss: str = "auto"
    min_count: str = "auto"
    min_count_time_scaled: bool = False
    beta_softmax: float = 1.0
    kappa_exp: float = 0.95
    max_target_spikes: int = 1
    no_spike_eta: float = 1e-3

    optimizer: str = "sgd"
    learning_rate: float = 1e-3
    grad_clip: float = 1e5
    grad_clip_mode: str = "norm"
    weight_decay: float = 0.0
    init_bias_center: bool = False

    epoch: int = 1
    batch_size: int = 16
    seed: int = 0
    deterministic: bool = False

    # matching task
    iterations: int = 5000
    n_trials: int = 10
    input_spikes: int = 3
    target_spikes: int = 1
    log_every: int = 100

    # dataset tasks
    data_dir: str = "data/mnist"
    n_train: int = 5000
    n_valid: int = 1000
    decision: str = "auto"
    metrics_path: str | None = None
    params_path: str | None = None

    def __post_init__(self):
        self.layer_sizes = tuple(int(n) for n in self.layer_sizes)

    # -- derived views -------------------------------------------------
    @property
    def neuron(self) -> NeuronConfig:
        if self.normalize_kernel:
            return normalized_config(self.alpha_v, self.alpha_i, self.theta, self.horizon_T)
        return NeuronConfig(self.alpha_v, self.alpha_i, self.beta_v, self.beta_i, self.beta_bias, self.theta)

    @property
    def network(self) -> NetworkShape:
        return NetworkShape(self.layer_sizes, self.horizon_T, self.single_spike_restriction)

    @property
    def method(self) -> MethodConfig:
        return MethodConfig(self.lambda_act, self.lambda_tim, self.ste_alpha, self.ste_beta, self.use_reset_paths)

    @property
    def method_name(self) -> str:
        if self.bptt:
            return "bptt_reset" if self.use_reset_paths else "bptt"
        if self.lambda_tim == 0:
            return "activation"
        if self.lambda_act == 0:
            return "timing"
        return "antlr"

    @property
    def loss_kind(self) -> str:
        if self.loss != "auto":
            return self.loss
        if self.task == "matching":
            return "spike_train"
        return "count" if self.lambda_tim == 0 or self.bptt else "latency"

    @property
    def use_min_count(self) -> bool:
        if self.min_count == "auto":
            return self.loss_kind == "latency" and self.lambda_act > 0
        return _as_bool(self.min_count)

    @property
    def use_no_spike_penalty(self) -> bool:
        return self.lambda_act == 0 and self.lambda_tim > 0 and not self.bptt

    @property
    def decision_scheme(self) -> str:
        if self.decision != "auto":
            return self.decision
        return "most_spike" if self.loss_kind == "count" else "earliest_spike"

    def validate(self) -> ExperimentConfig:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.loss not in LOSSES:
            raise ConfigError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if self.decision not in ("auto", "earliest_spike", "most_spike"):
            raise ConfigError(f"unknown decision scheme {self.decision!r}")
        for view in ("neuron", "network", "method"):
            getattr(self, view)  # constructors validate
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.grad_clip <= 0 or self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("grad_clip must be > 0; learning_rate, weight_decay >= 0")
        kind = self.loss_kind
        pure_timing = self.lambda_act == 0 and not self.bptt
        pure_act = self.lambda_tim == 0 or self.bptt
        if kind == "count" and pure_timing:
            raise ConfigError("count loss gives no timing gradient; incompatible with the timing-based method")
        if kind == "latency" and pure_act:
            raise ConfigError("latency loss gives no activation gradient; incompatible with the activation-based method")
        if self.task == "matching" and kind != "spike_train":
            raise ConfigError("the matching task uses the spike-train loss")
        return self


def _as_bool(v) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "yes", "on")
    return bool(v)


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _flatten(d: dict, out: dict | None = None) -> dict:
    out = {} if out is None else out
    for k, v in d.items():
        k = str(k).replace("-", "_")
        if isinstance(v, dict) and k not in _FIELDS:
            _flatten(v, out)
        else:
            out[k] = v
    return out


def coerce(name: str, value):
    if name not in _FIELDS:
        raise ConfigError(f"unknown configuration key {name!r}")
    default = _FIELDS[name].default
    try:
        if name == "layer_sizes":
            if isinstance(value, str):
                value = re.split(r"[-x,]", value.strip())
            return tuple(int(x) for x in value)
        if value is None:
            return None
        if isinstance(default, bool):
            return _as_bool(value)
        if isinstance(default, int):
            return int(float(value))
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc
    return value


def load_config_file(ref: str) -> dict:
    path = Path(ref)
    if not path.exists():
        preset = resources.files("spikegrad") / "configs" / f"{ref}.yaml"
        if not preset.is_file():
            raise ConfigError(f"config {ref!r} is neither a file nor a known preset")
        text = preset.read_text()
    else:
        text = path.read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ConfigError(f"config {ref!r} is not a key-value document")
    return _flatten(data)


def build_config(file_ref: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    values = {}
    if file_ref:
        values.update(load_config_file(file_ref))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    kwargs = {k: coerce(k, v) for k, v in values.items()}
    return ExperimentConfig(**kwargs).validate()


def preset_names() -> list[str]:
    root = resources.files("spikegrad") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))
