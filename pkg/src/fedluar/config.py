"""Experiment configuration: a flat TOML file of ``key = value`` lines."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigurationError
from .luar_core import SCHEMES
from .client_trainer import RULE_KINDS, LocalUpdateRule
from .nn_core import LayerSpec, Network, conv2d, dense, mlp_specs


@dataclass
class ExperimentConfig:
    master_seed: int = 0
    # model
    model: str = "mlp"
    hidden_sizes: list[int] = field(default_factory=lambda: [64, 64, 64, 64, 64])
    conv_input_shape: list[int] = field(default_factory=list)
    conv_channels: int = 4
    conv_kernel: list[int] = field(default_factory=lambda: [3, 3])
    # data
    n_samples: int = 4096
    n_features: int = 32
    n_classes: int = 4
    class_separation: float = 3.0
    data_path: str = ""
    test_fraction: float = 0.2
    alpha: float = 0.1
    # federation
    n_clients: int = 32
    active_clients: int = 8
    rounds: int = 300
    local_steps: int = 20
    batch_size: int = 32
    # local rule
    rule: str = "sgd_momentum"
    learning_rate: float = 0.02
    momentum: float = 0.9
    proximal_mu: float = 0.0
    lr_decay_fractions: list[float] = field(default_factory=lambda: [0.5, 0.75])
    # LUAR
    delta: int = 0
    scheme: str = "luar"
    aggregation: str = "recycle"
    score_refresh: str = "applied"
    # run
    eval_every: int = 5
    eval_limit: int = 0
    diagnostic: bool = False
    workers: int = 1
    record_timing: bool = False

    def __post_init__(self):
        self.validate()

    def local_rule(self) -> LocalUpdateRule:
        return LocalUpdateRule(self.rule, self.learning_rate, self.momentum, self.proximal_mu)

    def layer_specs(self, n_features: int | None = None, n_classes: int | None = None) -> list[LayerSpec]:
        f = self.n_features if n_features is None else n_features
        k = self.n_classes if n_classes is None else n_classes
        if self.model == "mlp":
            return mlp_specs([f, *self.hidden_sizes, k])
        c, h, w = self.conv_input_shape
        if c * h * w != f:
            raise ConfigurationError(
                f"conv_input_shape {self.conv_input_shape} does not match n_features={f}")
        first = conv2d(0, (c, h, w), self.conv_channels, tuple(self.conv_kernel))
        widths = [first.output_dim, *self.hidden_sizes, k]
        rest = [dense(i + 1, a, b) for i, (a, b) in enumerate(zip(widths[:-1], widths[1:]))]
        return [first, *rest]

    def network(self, n_features: int | None = None, n_classes: int | None = None) -> Network:
        return Network(self.layer_specs(n_features, n_classes))

    @property
    def n_layers(self) -> int:
        return len(self.hidden_sizes) + 1 + (self.model == "cnn")

    def validate(self) -> None:
        def bad(key, why):
            raise ConfigurationError(f"{key}: {why}")

        if not 0 <= self.master_seed < 2 ** 64:
            bad("master_seed", "must be an unsigned 64-bit integer")
        if self.model not in ("mlp", "cnn"):
            bad("model", "must be 'mlp' or 'cnn'")
        if self.model == "cnn":
            if len(self.conv_input_shape) != 3:
                bad("conv_input_shape", "needs [channels, height, width]")
            if len(self.conv_kernel) != 2:
                bad("conv_kernel", "needs [kh, kw]")
            if self.conv_channels < 1:
                bad("conv_channels", "must be >= 1")
        if any(h < 1 for h in self.hidden_sizes):
            bad("hidden_sizes", "widths must be >= 1")
        for key in ("n_samples", "n_features", "n_classes"):
            if getattr(self, key) < 1:
                bad(key, "must be >= 1")
        if not 0 < self.test_fraction < 1:
            bad("test_fraction", "must lie in (0, 1)")
        if self.alpha <= 0:
            bad("alpha", "must be > 0")
        if self.n_clients < 1:
            bad("n_clients", "must be >= 1")
        if not 1 <= self.active_clients <= self.n_clients:
            bad("active_clients", f"must lie in [1, n_clients={self.n_clients}]")
        if self.rounds < 0:
            bad("rounds", "must be >= 0")
        if self.local_steps < 1:
            bad("local_steps", "must be >= 1")
        if self.batch_size < 1:
            bad("batch_size", "must be >= 1")
        if self.rule not in RULE_KINDS:
            bad("rule", f"must be one of {RULE_KINDS}")
        if self.learning_rate <= 0:
            bad("learning_rate", "must be > 0")
        if not 0 <= self.momentum < 1:
            bad("momentum", "must lie in [0, 1)")
        if self.proximal_mu < 0:
            bad("proximal_mu", "must be >= 0")
        if any(not 0 <= f <= 1 for f in self.lr_decay_fractions):
            bad("lr_decay_fractions", "fractions must lie in [0, 1]")
        if not 0 <= self.delta <= self.n_layers:
            bad("delta", f"must lie in [0, {self.n_layers}] for a {self.n_layers}-layer model")
        if self.scheme not in SCHEMES:
            bad("scheme", f"must be one of {SCHEMES}")
        if self.aggregation not in ("recycle", "drop"):
            bad("aggregation", "must be 'recycle' or 'drop'")
        if self.score_refresh not in ("applied", "frozen"):
            bad("score_refresh", "must be 'applied' or 'frozen'")
        if self.eval_every < 1:
            bad("eval_every", "must be >= 1")
        if self.eval_limit < 0:
            bad("eval_limit", "must be >= 0 (0 = whole test split)")
        if self.workers < 1:
            bad("workers", "must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def run_hash(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:12]


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_LIST_ITEM = {"hidden_sizes": int, "conv_input_shape": int, "conv_kernel": int,
              "lr_decay_fractions": float}


def _coerce(key: str, value: Any) -> Any:
    default = getattr(ExperimentConfig(), key)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigurationError(f"{key}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        item = _LIST_ITEM[key]
        if not isinstance(value, list):
            raise ConfigurationError(f"{key}: expected a list, got {value!r}")
        out = []
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or (item is int and not isinstance(v, int)):
                raise ConfigurationError(f"{key}: bad list element {v!r}")
            out.append(item(v))
        return out
    raise ConfigurationError(f"{key}: unsupported value")


def config_from_mapping(mapping: dict[str, Any]) -> ExperimentConfig:
    kwargs = {}
    for key, value in mapping.items():
        if key not in _FIELDS:
            raise ConfigurationError(f"{key}: unknown config key")
        if isinstance(value, dict):
            raise ConfigurationError(f"{key}: tables are not allowed, keep the file flat")
        kwargs[key] = _coerce(key, value)
    return ExperimentConfig(**kwargs)


def parse_config(text: str) -> ExperimentConfig:
    try:
        mapping = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"config syntax error: {exc}") from None
    return config_from_mapping(mapping)


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


def dump_config(config: ExperimentConfig) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in config.to_dict().items())
