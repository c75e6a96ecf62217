"""Experiment configuration: JSON documents with a versioned schema and dotted overrides."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from blastlab.blast.train import HackConfig
from blastlab.env.gridworld import EnvConfig
from blastlab.errors import ConfigError
from blastlab.marl.train import TrainConfig

SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "BLAST_LAB_OUTPUT_ROOT"

DEFAULTS = {
    "schema": SCHEMA_VERSION,
    "seed": 0,
    "algorithm": "vdn",
    "output_dir": "runs/default",
    "trigger": "trigger3",
    "env": asdict(EnvConfig()),
    "train": asdict(TrainConfig()),
    "blast_train": asdict(TrainConfig(episodes=1000)),
    "hack": asdict(HackConfig()),
    "collect": {"budget": 5000, "stochastic_fraction": 0.5},
    "evaluate": {"episodes": 100, "max_arms": 1},
    "defense": {"episodes": 20, "eps": None, "share": 0.35, "restarts": 10, "dims": 3},
    "sweep": {"lam": [0.0, 0.5, 1.0], "poison_rate": [0.02, 0.05, 0.2], "episodes": None},
}

_SECTION_KEYS = {
    "collect": {"budget", "stochastic_fraction"},
    "evaluate": {"episodes", "max_arms"},
    "defense": {"episodes", "eps", "share", "restarts", "dims"},
    "sweep": {"lam", "poison_rate", "episodes"},
}


def _merge(base: dict, new: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in new.items():
        p = f"{path}.{k}" if path else k
        if k not in out:
            raise ConfigError("unknown field", p)
        if isinstance(out[k], dict) and out[k] is not None:
            if not isinstance(v, dict):
                raise ConfigError("expected an object", p)
            out[k] = _merge(out[k], v, p)
        else:
            out[k] = v
    return out


def parse_override(text: str) -> tuple[list[str], object]:
    """``a.b.c=value``; the value is read as JSON when possible, else as a string."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_override(doc: dict, keys: list[str], value) -> None:
    node = doc
    for i, k in enumerate(keys[:-1]):
        if not isinstance(node, dict) or k not in node or not isinstance(node[k], dict):
            raise ConfigError("unknown field", ".".join(keys[:i + 1]))
        node = node[k]
    if keys[-1] not in node:
        raise ConfigError("unknown field", ".".join(keys))
    node[keys[-1]] = value


@dataclass
class ExperimentConfig:
    raw: dict

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def algorithm(self) -> str:
        return self.raw["algorithm"]

    @property
    def env(self) -> EnvConfig:
        return EnvConfig(**self.raw["env"])

    @property
    def train(self) -> TrainConfig:
        return TrainConfig(**self.raw["train"])

    @property
    def blast_train(self) -> TrainConfig:
        return TrainConfig(**self.raw["blast_train"])

    @property
    def hack(self) -> HackConfig:
        return HackConfig(**self.raw["hack"])

    def derive(self, updates: dict) -> "ExperimentConfig":
        """A validated copy with ``updates`` merged in (same nesting as the config file)."""
        return ExperimentConfig(_merge(self.raw, updates)).validate()

    def section(self, name: str) -> dict:
        return dict(self.raw[name])

    def output_dir(self) -> Path:
        out = Path(self.raw["output_dir"])
        if not out.is_absolute():
            out = Path(os.environ.get(OUTPUT_ROOT_ENV, ".")) / out
        return out

    def canonical(self) -> str:
        return json.dumps(self.raw, sort_keys=True, separators=(",", ":"))

    def hash(self) -> str:
        """Hash of the experiment; where its outputs are written is not part of it."""
        doc = {k: v for k, v in self.raw.items() if k != "output_dir"}
        return hashlib.sha256(json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]

    def dumps(self) -> str:
        return json.dumps(self.raw, sort_keys=True, indent=1) + "\n"

    def validate(self) -> "ExperimentConfig":
        r = self.raw
        if r.get("schema") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema {r.get('schema')!r}", "schema")
        if not isinstance(r["seed"], int) or isinstance(r["seed"], bool) or r["seed"] < 0:
            raise ConfigError("seed must be a non-negative integer", "seed")
        if r["algorithm"] not in ("vdn", "qmix"):
            raise ConfigError("must be vdn or qmix", "algorithm")
        for name, cls in (("env", EnvConfig), ("train", TrainConfig), ("blast_train", TrainConfig),
                          ("hack", HackConfig)):
            names = {f.name for f in fields(cls)}
            for key in r[name]:
                if key not in names:
                    raise ConfigError("unknown field", f"{name}.{key}")
            try:
                obj = cls(**r[name])
            except TypeError as exc:
                raise ConfigError(str(exc), name) from exc
            obj.validate() if name != "hack" else obj.validate(EnvConfig(**r["env"]).n_pursuers)
        for sec, keys in _SECTION_KEYS.items():
            extra = set(r[sec]) - keys
            if extra:
                raise ConfigError("unknown field", f"{sec}.{sorted(extra)[0]}")
        if r["collect"]["budget"] < 0:
            raise ConfigError("must be >= 0", "collect.budget")
        if not 0 <= r["collect"]["stochastic_fraction"] <= 1:
            raise ConfigError("must lie in [0, 1]", "collect.stochastic_fraction")
        if r["evaluate"]["episodes"] < 1:
            raise ConfigError("must be >= 1", "evaluate.episodes")
        if r["defense"]["episodes"] < 1:
            raise ConfigError("must be >= 1", "defense.episodes")
        for key in ("lam", "poison_rate"):
            vals = r["sweep"][key]
            if not isinstance(vals, list) or not all(isinstance(v, (int, float)) and 0 <= v <= 1 for v in vals):
                raise ConfigError("must be a list of numbers in [0, 1]", f"sweep.{key}")
        return self


def load_config(path=None, overrides=(), seed: int | None = None) -> ExperimentConfig:
    doc = copy.deepcopy(DEFAULTS)
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} not found")
        try:
            user = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"not valid JSON: {exc}", str(p)) from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        doc = _merge(doc, user)
    for text in overrides:
        keys, value = parse_override(text)
        apply_override(doc, keys, value)
    if seed is not None:
        doc["seed"] = seed
    return ExperimentConfig(doc).validate()
