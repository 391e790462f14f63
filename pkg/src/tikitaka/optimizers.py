"""In-memory SGD and the Tiki-Taka family of transfer optimizers.

``plain_sgd`` pulses the outer product straight onto ``W``. The transfer
optimizers pulse it onto the accumulator ``A`` instead, then every ``n_s``
updates read one column of ``A``, integrate the read into the digital
hidden matrix ``H`` and send single pulses to ``W`` wherever ``|h| > 1``.

* ``tt2`` reads ``A - R`` with no chopper.
* ``tt3`` modulates the activations with per-column chopper signs that flip
  at random, and demodulates the column read.
* ``tt4`` chops on a fixed schedule and replaces ``R`` by a digital
  running estimate of ``A`` taken over the previous chopper phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .mvm import CrossbarTile, read_column
from .pulsed import plan_pulses, stochastic_outer_update

ALGORITHMS = ("plain_sgd", "tt2", "tt3", "tt4")
EMA_FLOOR = 1e-12


@dataclass(frozen=True)
class OptimizerConfig:
    algorithm: str = "tt2"
    lr: float = 0.1
    gamma0: float = 200.0
    n_s: int = 1
    rho: float = 0.1
    beta: float = 0.5
    eta0: float = 1.0
    l_max: int = 5
    ema_coeff: float = 0.9
    correct_w_sp: bool = False
    # tt3 only: flip every ceil(1/rho) reads of a column instead of at random
    regular_chopper: bool = False
    verbatim_coeffs: bool = False
    verbatim_chopper: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        for name in ("lr", "gamma0", "eta0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.n_s < 1:
            raise ValueError(f"n_s must be >= 1, got {self.n_s}")
        if self.l_max < 1:
            raise ValueError(f"l_max must be >= 1, got {self.l_max}")
        # rho = 0 is accepted so that tt3 can degenerate to tt2
        if not 0 <= self.rho <= 1:
            raise ValueError(f"rho must be in [0, 1], got {self.rho}")
        if self.algorithm == "tt4" and self.rho == 0:
            raise ValueError("rho must be > 0 for tt4")
        if not 0 < self.beta <= 1:
            raise ValueError(f"beta must be in (0, 1], got {self.beta}")
        if not 0 <= self.ema_coeff < 1:
            raise ValueError(f"ema_coeff must be in [0, 1), got {self.ema_coeff}")

    @property
    def chopper_period(self) -> int:
        return math.ceil(1.0 / self.rho) if self.rho > 0 else 0


class Streams(NamedTuple):
    """Independent random streams used while training."""

    pulses: np.random.Generator
    choppers: np.random.Generator
    reads: np.random.Generator

    @classmethod
    def coerce(cls, rng) -> "Streams":
        if isinstance(rng, Streams):
            return rng
        rng = np.random.default_rng(rng)
        return cls(rng, rng, rng)


@dataclass
class TransferState:
    h: np.ndarray
    mu: np.ndarray
    mu_past: np.ndarray
    choppers: np.ndarray
    s: int = 0
    k: int = 0
    t: int = 0
    reads: np.ndarray = None
    mu_x: float | None = None
    mu_d: float | None = None
    a_pulses: int = 0
    w_pulses: int = 0

    @classmethod
    def zeros(cls, m: int, n: int) -> "TransferState":
        return cls(np.zeros((m, n)), np.zeros((m, n)), np.zeros((m, n)),
                   np.ones(n), reads=np.zeros(n, dtype=np.int64))

    def check(self, cfg: OptimizerConfig) -> None:
        """Raise ``AssertionError`` if an invariant is broken."""
        assert np.all(np.abs(self.choppers) == 1)
        assert 0 <= self.s < cfg.n_s
        assert 0 <= self.k < self.h.shape[1]


class TransferRecord(NamedTuple):
    t: int
    k: int
    i: int
    a: float
    r: float
    h: float
    w: float
    chopper: float
    pulse: int


class StepInfo(NamedTuple):
    a_pulses: int
    w_pulses: int
    transferred: bool


def effective_hidden_rate(cfg: OptimizerConfig, n: int, dw_min: float) -> float:
    """Rate at which column reads are written to ``H``: ``lr * n_s * n / (gamma0 * dw_min)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    gamma = cfg.gamma0 * dw_min / (n * cfg.n_s)
    return cfg.lr / gamma


def effective_eta(cfg: OptimizerConfig, mu_x: float, mu_d: float, dw_min: float) -> float:
    """Update strength on ``A`` normalized by running input/gradient maxima."""
    mu_x = max(mu_x, EMA_FLOOR)
    mu_d = max(mu_d, EMA_FLOOR)
    return cfg.eta0 * cfg.l_max * dw_min / (mu_x * mu_d)


def _ema(prev: float | None, value: float, coeff: float) -> float:
    if prev is None:
        return max(value, EMA_FLOOR)
    return max(coeff * prev + (1.0 - coeff) * value, EMA_FLOOR)


def update_phase(tile: CrossbarTile, state: TransferState, x, d,
                 cfg: OptimizerConfig, rng) -> int:
    """Pulse one gradient outer product onto ``A`` (or ``W`` for plain SGD)."""
    streams = Streams.coerce(rng)
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    m, n = tile.shape
    if x.shape != (n,) or d.shape != (m,):
        raise ValueError(f"x {x.shape} and d {d.shape} do not match tile {tile.shape}")
    m_x = float(np.max(np.abs(x)))
    m_d = float(np.max(np.abs(d)))
    state.mu_x = _ema(state.mu_x, m_x, cfg.ema_coeff)
    state.mu_d = _ema(state.mu_d, m_d, cfg.ema_coeff)

    if cfg.algorithm == "plain_sgd":
        target = tile.w
        eta = cfg.lr
        activation = x
    else:
        target = tile.a
        eta = effective_eta(cfg, state.mu_x, state.mu_d, tile.a.params.dw_min)
        activation = state.choppers * x
    plan = plan_pulses(activation, d, eta, target.params.dw_min, cfg.l_max,
                       cfg.verbatim_coeffs)
    count = stochastic_outer_update(target, activation, d, plan, streams.pulses)
    if cfg.algorithm == "plain_sgd":
        state.w_pulses += count
    else:
        state.a_pulses += count
        state.s += 1
    return count


def transfer_phase(tile: CrossbarTile, state: TransferState, cfg: OptimizerConfig, rng,
                   on_transfer: Callable[[TransferRecord], None] | None = None) -> int:
    """Read the next column of ``A`` into ``H`` and pulse ``W`` where ``|h| > 1``.

    Returns the number of pulses sent to ``W``.
    """
    streams = Streams.coerce(rng)
    m, n = tile.shape
    state.s = 0
    state.t += 1
    state.k = k = (state.k + 1) % n
    lam_h = effective_hidden_rate(cfg, n, tile.a.params.dw_min)
    c = state.choppers[k]

    if cfg.algorithm == "tt4":
        y = read_column(tile.a.w, None, k, tile.mvm, streams.reads)
        state.h[:, k] += c * lam_h * (y - state.mu_past[:, k])
        state.mu[:, k] = (1.0 - cfg.beta) * state.mu[:, k] + cfg.beta * y
    else:
        y = read_column(tile.a.w, tile.r, k, tile.mvm, streams.reads)
        state.h[:, k] += c * lam_h * y

    hk = state.h[:, k]
    fire = np.abs(hk) > 1.0
    pulses = np.where(fire, np.sign(hk), 0.0)
    hk[fire] = 0.0
    count = 0
    if fire.any():
        signs = np.zeros((m, n))
        signs[:, k] = pulses
        count = tile.w.apply_pulses(signs, streams.pulses)
    state.w_pulses += count

    if on_transfer is not None:
        ref = state.mu_past[:, k] if cfg.algorithm == "tt4" else tile.r[:, k]
        for i in range(m):
            on_transfer(TransferRecord(state.t, k, i, float(tile.a.w[i, k]), float(ref[i]),
                                       float(hk[i]), float(tile.w.w[i, k]), float(c),
                                       int(pulses[i])))

    state.reads[k] += 1
    if cfg.algorithm == "tt3":
        if cfg.rho == 0:
            flip = False
        elif cfg.regular_chopper:
            flip = state.reads[k] % cfg.chopper_period == 0
        else:
            xi = streams.choppers.random()
            flip = (cfg.rho < xi) if cfg.verbatim_chopper else (xi < cfg.rho)
        if flip:
            state.choppers[k] = -c
    elif cfg.algorithm == "tt4":
        if state.reads[k] % cfg.chopper_period == 0:
            state.choppers[k] = -c
            state.mu_past[:, k] = state.mu[:, k]
            state.mu[:, k] = 0.0
    return count


def sgd_step(tile: CrossbarTile, state: TransferState, x, d, cfg: OptimizerConfig, rng,
             on_transfer: Callable[[TransferRecord], None] | None = None) -> StepInfo:
    """Apply one ``(x, d)`` pair, transferring when ``n_s`` updates have accumulated."""
    streams = Streams.coerce(rng)
    before = state.w_pulses
    a_count = update_phase(tile, state, x, d, cfg, streams)
    transferred = False
    if cfg.algorithm != "plain_sgd" and state.s == cfg.n_s:
        transfer_phase(tile, state, cfg, streams, on_transfer)
        transferred = True
    w_count = state.w_pulses - before
    return StepInfo(0 if cfg.algorithm == "plain_sgd" else a_count, w_count, transferred)


@dataclass
class AnalogOptimizer:
    """Bundles a tile, its transfer state and random streams."""

    tile: CrossbarTile
    cfg: OptimizerConfig
    streams: Streams
    state: TransferState = field(default=None)
    on_transfer: Callable[[TransferRecord], None] | None = None

    def __post_init__(self):
        if self.state is None:
            self.state = TransferState.zeros(*self.tile.shape)
        if self.cfg.correct_w_sp and self.tile.w_sp is None:
            self.tile.w_sp = self.tile.w.symmetry_points()

    def step(self, x, d) -> StepInfo:
        return sgd_step(self.tile, self.state, x, d, self.cfg, self.streams, self.on_transfer)

    def forward(self, x) -> np.ndarray:
        return self.tile.forward(x, self.streams.reads)

    def backward(self, d) -> np.ndarray:
        return self.tile.backward(d, self.streams.reads)
