"""Run configuration: flat JSON file keys, overridable from the command line."""

from dataclasses import asdict, dataclass, fields
import json
import math

from .errors import ConfigError
from .stream import TrainConfig


@dataclass
class RunConfig:
    # synthetic dataset (used when data_path is empty)
    tasks: int = 5
    classes_per_task: int = 2
    input_dim: int = 16
    separation: float = 8.0
    samples_per_class: int = 500
    cluster_std: float = 1.0
    # CSV dataset
    data_path: str = ""
    partition_path: str = ""
    label_column: str = "label"
    header: bool = True
    # model and training
    dim: int = 32
    bandwidth: float = 0.5
    n_anchors: int = 500
    clip: float = -700.0
    epochs: int = 1
    learning_rate: float = 5e-4
    weight_decay: float = 1e-4
    decoupled_weight_decay: bool = True
    batch_size: int = 128
    seed: int = 0
    hidden: tuple = (64, 64)
    activation: str = "tanh"
    init_gain: float = 3.0**0.5
    warmup_epochs: int = 0
    refresh_anchors_every_epoch: bool = False
    repulsion_prior: str = "per_class"
    # outputs
    bank_path: str = "bank"
    metrics_path: str = "metrics.csv"

    def validate(self) -> "RunConfig":
        checks = [
            ("dim", 1 <= self.dim <= 1024, "must lie in [1, 1024]"),
            ("bandwidth", self.bandwidth > 0, "must be positive"),
            ("n_anchors", self.n_anchors >= 1, "must be >= 1"),
            ("clip", math.isfinite(self.clip), "must be finite"),
            ("epochs", self.epochs >= 1, "must be >= 1"),
            ("learning_rate", self.learning_rate > 0, "must be positive"),
            ("weight_decay", self.weight_decay >= 0, "must be >= 0"),
            ("batch_size", self.batch_size >= 1, "must be >= 1"),
            ("seed", self.seed >= 0, "must be >= 0"),
            ("hidden", all(w >= 1 for w in self.hidden), "widths must be >= 1"),
            ("activation", self.activation in ("tanh", "relu"), "must be tanh or relu"),
            ("init_gain", self.init_gain > 0, "must be positive"),
            ("warmup_epochs", self.warmup_epochs >= 0, "must be >= 0"),
            ("repulsion_prior", self.repulsion_prior in ("per_class", "anchor_class"), "must be per_class or anchor_class"),
            ("tasks", self.tasks >= 1, "must be >= 1"),
            ("classes_per_task", self.classes_per_task >= 1, "must be >= 1"),
            ("input_dim", self.input_dim >= 1, "must be >= 1"),
            ("samples_per_class", self.samples_per_class >= 1, "must be >= 1"),
            ("cluster_std", self.cluster_std >= 0, "must be >= 0"),
        ]
        for name, ok, msg in checks:
            if not ok:
                raise ConfigError(name, f"{msg} (got {getattr(self, name)!r})")
        return self

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: v for k, v in asdict(self).items() if k in names})


def _coerce(name, value, default):
    kind = type(default)
    try:
        if kind is bool:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false", "1", "0"):
                return value.lower() in ("true", "1")
            raise ValueError
        if kind is tuple:
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return tuple(int(v) for v in value)
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind is float:
            return float(value)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(name, f"cannot interpret {value!r} as {kind.__name__}") from None


def make_config(file_path=None, overrides=None) -> RunConfig:
    """Defaults, then JSON file values, then non-None ``overrides``."""
    defaults = RunConfig()
    values = {}
    if file_path:
        try:
            with open(file_path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{file_path} is not valid JSON: {exc}") from None
        except OSError as exc:
            raise ConfigError("config", f"cannot read {file_path}: {exc.strerror}") from None
        if not isinstance(data, dict):
            raise ConfigError("config", "top level must be a JSON object")
        values.update(data)
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    known = {f.name for f in fields(RunConfig)}
    for key in values:
        if key not in known:
            raise ConfigError(key, "unknown configuration field")
    cfg = RunConfig(**{k: _coerce(k, v, getattr(defaults, k)) for k, v in values.items()})
    return cfg.validate()
