"""Experiment configuration: a single YAML file with named keys for every knob."""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

DEFAULTS: dict[str, Any] = {
    "seed": 1,
    "horizon": None,
    "retry_budget": 10,
    "timing": {
        "poll_interval": 60.0,
        "failure_timeout": 120.0,
        "guest_probe_interval": 10.0,
        "snapshot_interval": 300.0,
        "sweep_interval": 10.0,
        "command_delay": 0.0,
    },
    "placement": {
        "threshold": 0.05,
        "min_replicas": 1,
        "strict_cloudlet": False,
        "exclude_in_use": True,
        "replication": True,
    },
    "reliability": {"new_host_prior": 100.0},
    "transfer": {"bandwidth": 1.0e8, "latency": 0.5},
    "progress": {"work_rate": 1.0},
    "load": {"busy_prob": 0.0, "calm_prob": 0.5, "busy_level": 0.9, "idle_level": 0.1},
    "client": {"resource_limit": 0.5, "sustain_window": 3, "guest_failure_rate": 0.0},
    "hosts": {"count": 30, "storage_capacity": 10_000_000_000, "cloudlets": 1},
    "churn": {"trace": None, "mtbf": 7200.0, "mttr": 300.0, "window": 3600.0,
              "busiest_window": None},
    "workload": {"jobs": 30, "total_work": 1800.0, "snapshot_size": 1_000_000_000,
                 "arrival_interval": 0.0},
    "outputs": {"figures": True},
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a mapping")
            out[key] = _merge(base[key], value, where + ".")
        else:
            out[key] = value
    return out


def leaf_paths(tree: dict = DEFAULTS, prefix: str = "") -> list[str]:
    paths = []
    for key, value in tree.items():
        if isinstance(value, dict):
            paths += leaf_paths(value, f"{prefix}{key}.")
        else:
            paths.append(prefix + key)
    return paths


def resolve_key(key: str) -> str:
    """Accept a dotted path or an unambiguous leaf name (``snapshot_interval``)."""
    paths = leaf_paths()
    if key in paths:
        return key
    if key == "replication":
        return "placement.replication"
    matches = [p for p in paths if p.rsplit(".", 1)[-1] == key]
    if len(matches) == 1:
        return matches[0]
    if not matches:
        raise ConfigError(f"unknown config key '{key}'")
    raise ConfigError(f"ambiguous config key '{key}': {', '.join(matches)}")


def parse_scalar(text: str):
    lowered = text.strip().lower()
    if lowered in ("on", "true", "yes"):
        return True
    if lowered in ("off", "false", "no"):
        return False
    if lowered in ("null", "none"):
        return None
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def set_path(tree: dict, dotted: str, value) -> dict:
    out = copy.deepcopy(tree)
    node = out
    parts = resolve_key(dotted).split(".")
    for part in parts[:-1]:
        node = node[part]
    node[parts[-1]] = value
    return out


@dataclass
class ExperimentConfig:
    data: dict
    base_dir: Path = Path(".")

    def __getitem__(self, key):
        return self.data[key]

    def get(self, dotted: str):
        node = self.data
        for part in resolve_key(dotted).split("."):
            node = node[part]
        return node

    def with_overrides(self, overrides: dict) -> "ExperimentConfig":
        data = self.data
        for key, value in overrides.items():
            data = set_path(data, key, value)
        cfg = ExperimentConfig(data, self.base_dir)
        cfg.validate()
        return cfg

    def trace_path(self):
        trace = self.data["churn"]["trace"]
        if trace is None:
            return None
        path = Path(trace)
        return path if path.is_absolute() else self.base_dir / path

    def validate(self) -> None:
        d = self.data
        positive = ["timing.poll_interval", "timing.failure_timeout", "timing.guest_probe_interval",
                    "timing.snapshot_interval", "timing.sweep_interval", "transfer.bandwidth",
                    "progress.work_rate", "hosts.count", "hosts.storage_capacity",
                    "hosts.cloudlets", "churn.mtbf", "churn.mttr", "churn.window",
                    "workload.total_work", "client.sustain_window"]
        for key in positive:
            value = self.get(key)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
                raise ConfigError(f"'{key}' must be a positive number, got {value!r}")
        non_negative = ["timing.command_delay", "transfer.latency", "workload.jobs",
                        "workload.snapshot_size", "workload.arrival_interval",
                        "client.guest_failure_rate", "retry_budget"]
        for key in non_negative:
            value = self.get(key)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
                raise ConfigError(f"'{key}' must be a non-negative number, got {value!r}")
        if not 0 < d["placement"]["threshold"] < 1:
            raise ConfigError("'placement.threshold' must lie in (0, 1)")
        if d["placement"]["min_replicas"] < 1:
            raise ConfigError("'placement.min_replicas' must be at least 1")
        for key in ("strict_cloudlet", "exclude_in_use", "replication"):
            if not isinstance(d["placement"][key], bool):
                raise ConfigError(f"'placement.{key}' must be true/false")
        if not 0 <= d["reliability"]["new_host_prior"] <= 100:
            raise ConfigError("'reliability.new_host_prior' must lie in [0, 100]")
        if not 0 <= d["client"]["resource_limit"] <= 1:
            raise ConfigError("'client.resource_limit' must lie in [0, 1]")
        for key in ("busy_prob", "calm_prob", "busy_level", "idle_level"):
            if not 0 <= d["load"][key] <= 1:
                raise ConfigError(f"'load.{key}' must lie in [0, 1]")
        if d["horizon"] is not None and not d["horizon"] > 0:
            raise ConfigError("'horizon' must be positive or null")
        if not isinstance(d["seed"], int):
            raise ConfigError("'seed' must be an integer")
        bw = d["churn"]["busiest_window"]
        if bw is not None and not bw > 0:
            raise ConfigError("'churn.busiest_window' must be positive or null")
        if math.isnan(float(d["churn"]["mtbf"])):
            raise ConfigError("'churn.mtbf' must be a number")

    def dump(self) -> str:
        return yaml.safe_dump(self.data, sort_keys=False, default_flow_style=False)


def default_config() -> ExperimentConfig:
    return ExperimentConfig(copy.deepcopy(DEFAULTS))


def from_dict(data: dict | None, base_dir=".") -> ExperimentConfig:
    cfg = ExperimentConfig(_merge(DEFAULTS, data or {}), Path(base_dir))
    cfg.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(data, path.parent)
