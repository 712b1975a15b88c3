"""Run configuration: documented defaults, a TOML/JSON file, then CLI overrides.

Unknown keys are rejected at every level. The single global ``seed`` is
copied into every component that draws random numbers, so ``--seed`` really
does override everything.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from . import dar, synth
from .errors import InvalidConfig, IoFailure

DEFAULTS: dict = {
    "seed": 42,
    "threads": None,
    "synth": {**{k: v for k, v in synth.SynthConfig().to_dict().items() if k != "seed"}, "n_subjects": 5},
    "preprocess": {"target_rate": 250.0, "f_low": 1.0, "f_high": 40.0, "n_taps": 825,
                   "window": 500, "stride": 250, "forward_backward": False},
    "dar": {k: v for k, v in dar.DarConfig().to_dict().items()},
    "train": {k: v for k, v in dar.TrainConfig().to_dict().items() if k != "seed"},
    "eval": {"methods": ["DAR", "PCA", "AAS", "OBS", "ICA"], "train_frac": 0.8, "split_seed": 42,
             "ablation_epochs": 50},
    "baselines": {"AAS": {"window": 25}, "OBS": {"n_basis": 4}, "PCA": {"k": 3},
                  "ICA": {"max_iter": 500, "tol": 1e-6, "rule": {}}},
}

# leaves whose value is a free-form mapping; their inner keys are not checked
_OPEN = {("baselines", "ICA", "rule"), ("synth", "ga"), ("synth", "bcg"), ("synth", "eeg")}


def _merge(base: dict, over: dict, path=()) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if k not in base:
            raise InvalidConfig(f"unknown config key {'.'.join(path + (k,))!r}")
        if isinstance(base[k], dict) and path + (k,) not in _OPEN:
            if not isinstance(v, dict):
                raise InvalidConfig(f"config key {'.'.join(path + (k,))!r} must be a table")
            out[k] = _merge(base[k], v, path + (k,))
        elif isinstance(base[k], dict):
            out[k] = {**base[k], **v}
        else:
            out[k] = copy.deepcopy(v)
    return out


def read_file(path) -> dict:
    """Parse a TOML or JSON config file; ``"default"`` means no file."""
    if path is None or str(path) == "default":
        return {}
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".toml":
            try:
                import tomllib
            except ImportError:  # python < 3.11
                import tomli as tomllib
            return tomllib.loads(text)
        return json.loads(text)
    except ValueError as exc:
        raise InvalidConfig(f"cannot parse config {path}: {exc}") from exc


def parse_override(item: str) -> tuple[tuple, object]:
    """``section.key=value`` with a JSON value (bare words are strings)."""
    if "=" not in item:
        raise InvalidConfig(f"override {item!r} is not KEY=VALUE")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    return tuple(key.strip().split(".")), value


def _nest(path: tuple, value) -> dict:
    d = value
    for k in reversed(path):
        d = {k: d}
    return d


@dataclass
class RunConfig:
    data: dict

    @classmethod
    def build(cls, file=None, overrides=(), seed=None, threads=None) -> "RunConfig":
        """Precedence: explicit flags > ``overrides`` > file > defaults."""
        d = _merge(DEFAULTS, read_file(file))
        for item in overrides:
            path, value = parse_override(item)
            d = _merge(d, _nest(path, value))
        if seed is not None:
            d["seed"] = int(seed)
            d["eval"]["split_seed"] = int(seed)
        if threads is not None:
            d["threads"] = int(threads)
        cfg = cls(d)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        self.synth_config()
        self.dar_config()
        self.train_config()
        t = self.data["eval"]["train_frac"]
        if not 0 < t <= 1:
            raise InvalidConfig("eval.train_frac must lie in (0, 1]")

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def threads(self):
        return self.data["threads"]

    def synth_config(self) -> synth.SynthConfig:
        d = {k: v for k, v in self.data["synth"].items() if k != "n_subjects"}
        return synth.SynthConfig.from_dict({**d, "seed": self.seed})

    @property
    def n_subjects(self) -> int:
        return int(self.data["synth"]["n_subjects"])

    def dar_config(self) -> dar.DarConfig:
        return dar.DarConfig.from_dict(self.data["dar"])

    def train_config(self, **changes) -> dar.TrainConfig:
        return dar.TrainConfig.from_dict({**self.data["train"], "seed": self.seed, **changes})

    def filter_spec(self):
        from .preprocess import FilterSpec
        p = self.data["preprocess"]
        return FilterSpec(p["f_low"], p["f_high"], p["n_taps"], forward_backward=p["forward_backward"])

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)
