"""Strict TOML experiment configuration.

A config file looks like::

    kind = "weight_programming"
    seed = 7

    [device]            # shared by A and W
    n_states = 20

    [device_w]          # overrides for W only
    sigma_b = 0.0

    [reference]
    sigma_r = 0.5

    [optimizer]
    algorithm = "tt3"

    [sweep]
    "reference.sigma_r" = [0.0, 0.1, 0.5, 1.0]
    "optimizer.algorithm" = ["plain_sgd", "tt2", "tt3", "tt4"]

Unknown keys and invalid values raise ``ConfigError`` naming the key path.
Absent keys take the defaults of the experiment kind.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import itertools
import json
from pathlib import Path
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .device import DeviceParams
from .harness import KINDS, ExperimentConfig, ReferenceConfig
from .mvm import MvmConfig
from .optimizers import OptimizerConfig

TOP_LEVEL = ("kind", "seed", "rows", "cols", "steps", "a_init")
SECTIONS = {
    "trace": ("alpha", "decay_step", "input_noise_scale", "select_row", "select_col"),
    "programming": ("repeats", "target_std", "record_every", "final_window"),
    "device_traces": ("n_devices", "pulse_pattern"),
}
DEVICE_KEYS = ("dw_min", "n_states", "sigma_b", "sigma_ctoc", "sigma_dtod", "sigma_updown")
BLOCKS = {"reference": ReferenceConfig, "optimizer": OptimizerConfig, "mvm": MvmConfig}


class ConfigError(ValueError):
    pass


def default_config(kind: str = "weight_programming") -> ExperimentConfig:
    """Defaults per experiment kind; device and optimizer values follow the trace study setup."""
    if kind not in KINDS:
        raise ConfigError(f"kind: must be one of {KINDS}, got {kind!r}")
    if kind == "weight_programming":
        # W bounds carry no variability so the target is representable
        return ExperimentConfig(kind=kind, device_w=DeviceParams(sigma_b=0.0))
    if kind == "device_traces":
        return ExperimentConfig(kind=kind, rows=1, cols=1, steps=1,
                                device_a=DeviceParams(dw_min=0.1), device_w=DeviceParams(dw_min=0.1))
    return ExperimentConfig(kind=kind, rows=2, cols=2, steps=1000)


def to_dict(cfg: ExperimentConfig) -> dict[str, Any]:
    """Nested, JSON-serializable view with every resolved parameter."""
    out: dict[str, Any] = {key: getattr(cfg, key) for key in TOP_LEVEL}
    for section, keys in SECTIONS.items():
        out[section] = {key: getattr(cfg, key) for key in keys}
    out["device_traces"]["pulse_pattern"] = [list(p) for p in cfg.pulse_pattern]
    out["device_a"] = dataclasses.asdict(cfg.device_a)
    out["device_w"] = dataclasses.asdict(cfg.device_w)
    for block in BLOCKS:
        out[block] = dataclasses.asdict(getattr(cfg, block))
    return out


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _check_type(path: str, value, default):
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, tuple):
        ok = isinstance(value, (list, tuple))
        value = tuple(tuple(v) if isinstance(v, list) else v for v in value) if ok else value
    else:
        ok = True
    if not ok:
        raise ConfigError(f"{path}: expected {type(default).__name__}, got {value!r}")
    return value


def _build(path: str, cls, base, values: dict):
    fields = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in values.items():
        if key not in fields:
            raise ConfigError(f"{path}.{key}: unknown key")
        kwargs[key] = _check_type(f"{path}.{key}", value, getattr(base, key))
    try:
        return dataclasses.replace(base, **kwargs)
    except ValueError as exc:
        name = str(exc).split(" ", 1)[0]
        where = f"{path}.{name}" if name in fields else path
        raise ConfigError(f"{where}: {exc}") from None


def _device(path: str, base: DeviceParams, values: dict) -> DeviceParams:
    values = dict(values)
    for key in values:
        if key not in DEVICE_KEYS:
            raise ConfigError(f"{path}.{key}: unknown key")
    if "n_states" in values:
        if "dw_min" in values:
            raise ConfigError(f"{path}: give either dw_min or n_states, not both")
        n_states = values.pop("n_states")
        if isinstance(n_states, bool) or not isinstance(n_states, (int, float)) or n_states <= 0:
            raise ConfigError(f"{path}.n_states: must be a positive number, got {n_states!r}")
        values["dw_min"] = 2.0 / n_states
    return _build(path, DeviceParams, base, values)


def from_mapping(data: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Resolve a nested mapping (plus dotted-key overrides) into a validated config."""
    data = copy.deepcopy(data)
    data.pop("sweep", None)
    for key, value in (overrides or {}).items():
        _set_dotted(data, key, value)
        if key.startswith("device."):
            # shared device keys win over resolved per-array values
            for name in ("device_a", "device_w"):
                if name in data:
                    _set_dotted(data, name + key[len("device"):], value)
    kind = data.get("kind", "weight_programming")
    if not isinstance(kind, str) or kind not in KINDS:
        raise ConfigError(f"kind: must be one of {KINDS}, got {kind!r}")
    cfg = default_config(kind)

    known = set(TOP_LEVEL) | set(SECTIONS) | set(BLOCKS) | {"device", "device_a", "device_w"}
    for key in data:
        if key not in known:
            raise ConfigError(f"{key}: unknown key")

    flat = {}
    for key in TOP_LEVEL:
        if key in data:
            flat[key] = _check_type(key, data[key], getattr(cfg, key))
    for section, keys in SECTIONS.items():
        block = data.get(section, {})
        if not isinstance(block, dict):
            raise ConfigError(f"{section}: expected a table")
        for key, value in block.items():
            if key not in keys:
                raise ConfigError(f"{section}.{key}: unknown key")
            flat[key] = _check_type(f"{section}.{key}", value, getattr(cfg, key))

    shared = data.get("device", {})
    for name in ("device_a", "device_w"):
        merged = dict(shared)
        specific = data.get(name, {})
        if "n_states" in specific:
            merged.pop("dw_min", None)
        if "dw_min" in specific:
            merged.pop("n_states", None)
        merged.update(specific)
        path = name if name in data else "device"
        flat[name] = _device(path, getattr(cfg, name), merged)
    for block, cls in BLOCKS.items():
        values = data.get(block, {})
        if not isinstance(values, dict):
            raise ConfigError(f"{block}: expected a table")
        flat[block] = _build(block, cls, getattr(cfg, block), values)
    try:
        return dataclasses.replace(cfg, **flat)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _set_dotted(data: dict, key: str, value) -> None:
    parts = key.split(".")
    node = data
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{key}: {part} is not a table")
    node[parts[-1]] = value
    # an override of either granularity key replaces the other
    twin = {"n_states": "dw_min", "dw_min": "n_states"}.get(parts[-1])
    if twin is not None and len(parts) > 1:
        node.pop(twin, None)


def parse_value(text: str):
    """Parse an override value as a TOML literal, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_overrides(items) -> dict:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = parse_value(value.strip())
    return out


def load_mapping(path) -> dict:
    """Read a TOML config, or the resolved config stored in a run manifest (JSON)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON: {exc}") from None
        points = data.get("sweep")
        data = data.get("config", data)
        if points:
            grid: dict[str, list] = {}
            for point in points:
                for key, value in point.items():
                    if value not in grid.setdefault(key, []):
                        grid[key].append(value)
            data["sweep"] = grid
        for name in ("device_a", "device_w"):
            data.get(name, {}).pop("n_states", None)
        return data
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: malformed config: {exc}") from None


def parse_config(path=None, overrides: dict | None = None, kind: str | None = None) -> ExperimentConfig:
    data = load_mapping(path) if path is not None else {}
    if kind is not None and "kind" not in data:
        data["kind"] = kind
    return from_mapping(data, overrides)


def sweep_grid(data: dict) -> list[dict]:
    """Cartesian product of the ``[sweep]`` table, as dotted-key override dicts."""
    grid = data.get("sweep", {})
    if not isinstance(grid, dict):
        raise ConfigError("sweep: expected a table")
    keys = sorted(grid)  # canonical order, so a manifest replays the same sequence
    for key in keys:
        if not isinstance(grid[key], list) or not grid[key]:
            raise ConfigError(f"sweep.{key}: expected a non-empty list")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
