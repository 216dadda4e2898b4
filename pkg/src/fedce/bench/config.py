"""Experiment configuration: a flat ``key = value`` text format.

Lists are comma-separated. Lines starting with ``#`` are comments. Unknown
keys are an error so that typos do not silently fall back to defaults.
``FEDCE_OUTPUT_DIR`` and ``FEDCE_MEMORY_CAP`` in the environment override
``output_dir`` and ``memory_cap``.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields

from ..contrib import DEFAULT_MEMORY_CAP

METHODS = (
    "or-shapley",
    "or-lc",
    "loo",
    "loo-linear",
    "reputation",
    "lambda-mr",
    "fed-shapley",
    "truncated-mr",
    "exact-shapley",
    "exact-lc",
)
PSEUDO_MODEL_METHODS = METHODS[:8]
DATASETS = ("mnist", "synthetic", "game-file")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: str = "synthetic"
    num_clients: list[int] = field(default_factory=lambda: [2])
    methods: list[str] = field(default_factory=lambda: list(PSEUDO_MODEL_METHODS))
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    output_dir: str = "results"

    # federation
    rounds: int = 5
    local_epochs: int = 10
    optimizer: str = "sgd"
    lr: float = 0.01
    momentum: float = 0.5
    batch_size: int = 64
    model: str = "mlp"
    hidden_units: int = 64
    dropout: float = 0.5

    # methods
    lam: float = 0.8
    truncation_threshold: float = 0.5
    exact_max_clients: int = 6
    memory_cap: int = DEFAULT_MEMORY_CAP
    workers: int = 1
    parallel_seeds: bool = False

    # mnist
    mnist_dir: str = "data/mnist"
    shard_size: int = 0  # 0: split the whole training set
    test_size: int = 0  # 0: whole test set

    # synthetic
    synth_classes: int = 4
    synth_dim: int = 10
    synth_train_per_class: int = 10
    synth_test_per_class: int = 500
    synth_separation: float = 2.5

    # game-file
    game_file: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.dataset not in DATASETS:
            raise ConfigError(f"dataset must be one of {DATASETS}, got {self.dataset!r}")
        if not self.methods:
            raise ConfigError("methods must not be empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; choose from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("methods must not repeat")
        if not self.seeds:
            raise ConfigError("seeds must not be empty")
        if self.dataset != "game-file":
            if not self.num_clients or any(not 1 <= n <= 16 for n in self.num_clients):
                raise ConfigError("num_clients entries must lie in [1, 16]")
        elif not self.game_file:
            raise ConfigError("dataset 'game-file' needs game_file")
        if self.rounds < 1 or self.local_epochs < 0:
            raise ConfigError("rounds must be >= 1 and local_epochs >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError("optimizer must be 'sgd' or 'adam'")
        if self.model not in ("mlp", "logreg"):
            raise ConfigError("model must be 'mlp' or 'logreg'")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, list):
                val = ",".join(str(v) for v in val)
            elif isinstance(val, bool):
                val = "true" if val else "false"
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"


def _convert(f: dataclasses.Field, raw: str):
    name = f.name
    default = f.default_factory() if f.default_factory is not dataclasses.MISSING else f.default
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, list):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], int):
                return [int(s) for s in items]
            return items
        if isinstance(default, int):
            return int(float(raw)) if name == "memory_cap" else int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {name} = {raw!r}") from None


def parse_config(text: str, env: dict | None = None) -> ExperimentConfig:
    env = os.environ if env is None else env
    by_name = {f.name: f for f in fields(ExperimentConfig)}
    aliases = {"lambda": "lam"}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = aliases.get(key, key.replace("-", "_"))
        if key not in by_name:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _convert(by_name[key], raw)
    if env.get("FEDCE_OUTPUT_DIR"):
        values["output_dir"] = env["FEDCE_OUTPUT_DIR"]
    if env.get("FEDCE_MEMORY_CAP"):
        values["memory_cap"] = int(float(env["FEDCE_MEMORY_CAP"]))
    return ExperimentConfig(**values)


def load_config(path, env: dict | None = None) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), env)
