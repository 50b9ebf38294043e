"""Experiment configuration.

One human-readable key-value file per experiment (``key = value``, ``#``
comments). Command-line ``--set key=value`` overrides file values, file
values override defaults. The effective configuration serializes canonically
(sorted keys) and is hashed into every output manifest.
"""

from __future__ import annotations

import hashlib
from dataclasses import fields
from pathlib import Path

from .training import TrainingConfig


class ConfigError(ValueError):
    """Bad experiment configuration; the CLI maps this to exit code 2."""


METHODS = ("hullgan", "plain", "oversample", "smote", "vanilla_gan", "cgan")
EVAL_MODES = ("retrained-c", "adversarial-c")

# key -> (type, default); types: str, int, float, int_list, float_list, points
_SCHEMA: dict[str, tuple[str, object]] = {
    "name": ("str", ""),
    "method": ("str", "plain"),
    "output_dir": ("str", ""),
    "dataset.kind": ("str", "blobs"),
    "dataset.counts": ("int_list", [1000, 100, 20]),
    "dataset.centers": ("points", [(0.0, 0.0), (4.0, 0.0), (2.0, 3.0)]),
    "dataset.stddev": ("float", 1.0),
    "dataset.radii": ("float_list", [1.0, 3.0]),
    "dataset.noise": ("float", 0.1),
    "dataset.seed": ("int", 0),
    "dataset.images": ("str", ""),
    "dataset.labels": ("str", ""),
    "dataset.downscale": ("int", 1),
    "dataset.imbalance": ("int_list", []),
    "eval.test_per_class": ("int", 200),
    "eval.split_fraction": ("float", 0.25),
    "eval.mode": ("str", "retrained-c"),
    "eval.seed": ("int", 9999),
    "smote.k": ("int", 5),
}
for f in fields(TrainingConfig):
    kind = {int: "int", float: "float", str: "str"}[type(f.default)]
    _SCHEMA[f"train.{f.name}"] = (kind, f.default)


def _parse_value(kind: str, raw: str, key: str):
    raw = raw.strip()
    try:
        if kind == "str":
            return raw
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "int_list":
            return [int(v) for v in raw.split(",") if v.strip()] if raw else []
        if kind == "float_list":
            return [float(v) for v in raw.split(",") if v.strip()] if raw else []
        if kind == "points":
            pts = []
            for chunk in raw.split(";"):
                if chunk.strip():
                    pts.append(tuple(float(v) for v in chunk.split(",")))
            return pts
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from exc
    raise ConfigError(f"{key}: unknown value type {kind}")


def _value_to_str(kind: str, value) -> str:
    if kind in ("str", "int", "float"):
        return str(value)
    if kind in ("int_list", "float_list"):
        return ",".join(str(v) for v in value)
    if kind == "points":
        return "; ".join(",".join(str(c) for c in p) for p in value)
    raise ConfigError(f"unknown value type {kind}")


class ExperimentConfig:
    def __init__(self, values: dict[str, object]):
        self.values = values

    def __getitem__(self, key: str):
        return self.values[key]

    def training_config(self) -> TrainingConfig:
        kwargs = {
            f.name: self.values[f"train.{f.name}"] for f in fields(TrainingConfig)
        }
        return TrainingConfig(**kwargs)

    def canonical_text(self) -> str:
        lines = []
        for key in sorted(self.values):
            kind, _ = _SCHEMA[key]
            lines.append(f"{key} = {_value_to_str(kind, self.values[key])}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()

    def validate(self) -> None:
        if self.values["method"] not in METHODS:
            raise ConfigError(
                f"method must be one of {', '.join(METHODS)}, got {self.values['method']!r}"
            )
        if self.values["eval.mode"] not in EVAL_MODES:
            raise ConfigError(
                f"eval.mode must be one of {', '.join(EVAL_MODES)}, "
                f"got {self.values['eval.mode']!r}"
            )
        kind = self.values["dataset.kind"]
        if kind not in ("blobs", "rings", "idx"):
            raise ConfigError(f"dataset.kind must be blobs, rings or idx, got {kind!r}")
        if kind == "idx" and not (self.values["dataset.images"] and self.values["dataset.labels"]):
            raise ConfigError("dataset.kind = idx requires dataset.images and dataset.labels")
        try:
            self.training_config().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _parse_lines(lines, source: str) -> dict[str, object]:
    out = {}
    for lineno, line in enumerate(lines, start=1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, raw = (part.strip() for part in text.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = _parse_value(_SCHEMA[key][0], raw, key)
    return out


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    """Read an experiment file and apply ``key=value`` overrides on top."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values = {key: default for key, (_, default) in _SCHEMA.items()}
    values.update(_parse_lines(path.read_text(encoding="utf-8").splitlines(), str(path)))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, raw = (part.strip() for part in item.split("=", 1))
        if key not in _SCHEMA:
            raise ConfigError(f"--set: unknown key {key!r}")
        values[key] = _parse_value(_SCHEMA[key][0], raw, key)
    if not values["name"]:
        values["name"] = path.stem
    if not values["output_dir"]:
        values["output_dir"] = f"runs/{values['name']}"
    cfg = ExperimentConfig(values)
    cfg.validate()
    return cfg
