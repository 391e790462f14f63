"""Experiment runners: mechanistic traces, device responses, weight programming."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .device import DeviceArray, DeviceParams, program_reference, sample_array
from .mvm import CrossbarTile, MvmConfig
from .optimizers import AnalogOptimizer, OptimizerConfig
from .streams import substream, training_streams

KINDS = ("trace_constant_gradient", "trace_decay", "device_traces", "weight_programming")


@dataclass(frozen=True)
class ReferenceConfig:
    mu_r: float = 0.0
    sigma_r: float = 0.0

    def __post_init__(self):
        if self.sigma_r < 0:
            raise ValueError(f"sigma_r must be >= 0, got {self.sigma_r}")


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str = "weight_programming"
    seed: int = 0
    rows: int = 20
    cols: int = 20
    steps: int = 60000
    device_a: DeviceParams = DeviceParams()
    device_w: DeviceParams = DeviceParams()
    reference: ReferenceConfig = ReferenceConfig()
    # tt3 chops on a fixed period in these experiments
    optimizer: OptimizerConfig = OptimizerConfig(regular_chopper=True)
    mvm: MvmConfig = MvmConfig()
    # start A at its symmetry points ("sp") or at zero
    a_init: str = "sp"
    # trace experiments
    alpha: float = 0.5
    decay_step: int = 500
    input_noise_scale: float = 0.0
    select_row: int = 0
    select_col: int = 0
    # weight programming
    repeats: int = 3
    target_std: float = 0.3
    record_every: int = 500
    final_window: float = 0.1
    # device traces
    n_devices: int = 20
    pulse_pattern: tuple = ((1, 40), (-1, 40), (1, 20), (-1, 20), (1, 40), (-1, 40))

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")
        if not 0 <= self.alpha <= 1:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.steps < 1 or self.repeats < 1 or self.record_every < 1 or self.n_devices < 1:
            raise ValueError("steps, repeats, record_every and n_devices must be >= 1")
        if self.a_init not in ("sp", "zero"):
            raise ValueError(f"a_init must be 'sp' or 'zero', got {self.a_init!r}")
        if not 0 <= self.select_row < self.rows or not 0 <= self.select_col < self.cols:
            raise ValueError("selected element lies outside the array")
        if not 0 < self.final_window <= 1:
            raise ValueError("final_window must be in (0, 1]")
        if self.input_noise_scale < 0:
            raise ValueError("input_noise_scale must be >= 0")


class TraceRecord(NamedTuple):
    step: int
    a_sel: float
    r_sel: float
    h_sel: float
    w_sel: float
    omega: float
    chopper_sign: float
    pulses_emitted: int


@dataclass
class WeightProgrammingResult:
    steps: list[int]
    eps_curve: list[float]
    eps_final: float
    eps_final_rel: float
    eps_final_runs: list[float]
    pulse_counts: dict[str, int] = field(default_factory=dict)


def build_tile(cfg: ExperimentConfig, repeat: int = 0) -> CrossbarTile:
    """Sample A, W and program R from the sweep-level device/reference streams."""
    dev_rng = substream(cfg.seed, "devices", repeat)
    a = sample_array(cfg.device_a, cfg.rows, cfg.cols, dev_rng)
    w = sample_array(cfg.device_w, cfg.rows, cfg.cols, dev_rng)
    if cfg.a_init == "sp":
        a.w[:] = a.symmetry_points()
    r = program_reference(a, cfg.reference.mu_r, cfg.reference.sigma_r,
                          substream(cfg.seed, "reference", repeat))
    return CrossbarTile(a, r, w, cfg.mvm)


def build_optimizer(cfg: ExperimentConfig, repeat: int = 0) -> AnalogOptimizer:
    return AnalogOptimizer(build_tile(cfg, repeat), cfg.optimizer, training_streams(cfg.seed, repeat))


def compute_weight_error(w, w_target) -> float:
    """Root-mean-square deviation between learned and target weights."""
    w = np.asarray(w, dtype=float)
    w_target = np.asarray(w_target, dtype=float)
    if w.shape != w_target.shape:
        raise ValueError(f"shape mismatch: {w.shape} vs {w_target.shape}")
    return float(np.sqrt(np.mean((w - w_target) ** 2)))


def _reference_view(opt: AnalogOptimizer) -> np.ndarray:
    if opt.cfg.algorithm == "tt4":
        return opt.state.mu_past
    return opt.tile.r


def run_trace_experiment(cfg: ExperimentConfig) -> list[TraceRecord]:
    """Drive one tile with correlated inputs and log the selected element.

    Activations are ``x = -X`` and gradients ``d = alpha X + (1 - alpha) Y``
    with standard normal ``X`` and ``Y``, so the diagonal elements receive a
    net negative update. For ``trace_decay`` the gradient becomes
    ``input_noise_scale * Y`` from ``decay_step`` on.
    """
    if cfg.kind not in ("trace_constant_gradient", "trace_decay"):
        raise ValueError(f"not a trace experiment: {cfg.kind}")
    if cfg.rows != cfg.cols:
        raise ValueError("trace experiments correlate x and d elementwise and need rows == cols")
    opt = build_optimizer(cfg)
    inputs = substream(cfg.seed, "inputs")
    i, j = cfg.select_row, cfg.select_col
    records = []
    for step in range(cfg.steps):
        noise = inputs.standard_normal((2, cfg.cols))
        x = -noise[0]
        if cfg.kind == "trace_decay" and step >= cfg.decay_step:
            d = cfg.input_noise_scale * noise[1]
        else:
            d = cfg.alpha * noise[0] + (1.0 - cfg.alpha) * noise[1]
        info = opt.step(x, d)
        a = float(opt.tile.a.w[i, j])
        r = float(_reference_view(opt)[i, j])
        c = float(opt.state.choppers[j])
        records.append(TraceRecord(step, a, r, float(opt.state.h[i, j]), float(opt.tile.w.w[i, j]),
                                   c * (a - r), c, info.w_pulses))
    return records


def expand_pattern(pattern) -> np.ndarray:
    """``[(sign, count), ...]`` to a flat array of +1/-1 pulses."""
    parts = []
    for sign, count in pattern:
        if sign not in (1, -1) or count < 0:
            raise ValueError(f"bad pattern entry ({sign}, {count})")
        parts.append(np.full(int(count), sign, dtype=float))
    return np.concatenate(parts) if parts else np.zeros(0)


def run_device_traces(params: DeviceParams, n_devices: int, pulse_pattern, rng) -> np.ndarray:
    """Weight trajectories of ``n_devices`` devices under a common pulse sequence.

    Returns an array of shape ``(len(pattern) + 1, n_devices)``; row 0 is
    the initial state (zero).
    """
    rng = np.random.default_rng(rng)
    signs = np.asarray(pulse_pattern, dtype=float)
    if signs.ndim == 2:
        signs = expand_pattern(pulse_pattern)
    devices: DeviceArray = sample_array(params, 1, n_devices, rng)
    out = np.empty((signs.size + 1, n_devices))
    out[0] = devices.w[0]
    row = np.empty((1, n_devices))
    for t, s in enumerate(signs):
        row.fill(s)
        devices.apply_pulses(row, rng)
        out[t + 1] = devices.w[0]
    return out


def _final(values: list[float], window: float) -> float:
    count = max(1, math.ceil(len(values) * window))
    return float(np.mean(values[-count:]))


def run_weight_programming(cfg: ExperimentConfig) -> WeightProgrammingResult:
    """Train a single layer towards a random target matrix.

    The loss is ``sum_i (y_i - target_i x)^2 / (2 m)`` and the optimizer is
    fed ``d = -(y - y_target) / m``. The target, devices and inputs of
    repeat ``r`` depend only on the seed and ``r``, never on the algorithm.
    The final error of a run is the mean over the last ``final_window``
    fraction of recorded points.
    """
    if cfg.kind != "weight_programming":
        raise ValueError(f"not a weight programming experiment: {cfg.kind}")
    m, n = cfg.rows, cfg.cols
    curves = []
    finals = []
    a_pulses = w_pulses = 0
    steps = []
    for rep in range(cfg.repeats):
        opt = build_optimizer(cfg, rep)
        target = substream(cfg.seed, "target", rep).normal(0.0, cfg.target_std, (m, n))
        inputs = substream(cfg.seed, "inputs", rep)
        curve = []
        steps = []
        for step in range(1, cfg.steps + 1):
            x = inputs.standard_normal(n)
            y = opt.forward(x)
            d = -(y - target @ x) / m
            opt.step(x, d)
            if step % cfg.record_every == 0 or step == cfg.steps:
                steps.append(step)
                curve.append(compute_weight_error(opt.tile.w.w, target))
        curves.append(curve)
        finals.append(_final(curve, cfg.final_window))
        a_pulses += opt.state.a_pulses
        w_pulses += opt.state.w_pulses
    eps_final = float(np.mean(finals))
    return WeightProgrammingResult(
        steps=steps,
        eps_curve=[float(v) for v in np.mean(curves, axis=0)],
        eps_final=eps_final,
        eps_final_rel=eps_final / cfg.target_std,
        eps_final_runs=finals,
        pulse_counts={"a": a_pulses, "w": w_pulses},
    )


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """``dataclasses.replace`` that also accepts ``optimizer__rho=...`` style keys."""
    nested: dict[str, dict] = {}
    flat = {}
    for key, value in changes.items():
        if "__" in key:
            block, name = key.split("__", 1)
            nested.setdefault(block, {})[name] = value
        else:
            flat[key] = value
    for block, values in nested.items():
        flat[block] = replace(getattr(cfg, block), **values)
    return replace(cfg, **flat)
