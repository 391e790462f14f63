"""Analog matrix-vector products over crossbar weights.

The default ``MvmConfig()`` is an ideal read: no noise, no quantization,
no clipping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .device import DeviceArray


@dataclass(frozen=True)
class MvmConfig:
    out_noise: float = 0.0
    in_bits: int = 0
    out_bits: int = 0
    out_bound: float = 0.0

    def __post_init__(self):
        if self.out_noise < 0:
            raise ValueError("out_noise must be >= 0")
        for name in ("in_bits", "out_bits"):
            bits = getattr(self, name)
            if bits != 0 and not 2 <= bits <= 16:
                raise ValueError(f"{name} must be 0 or in [2, 16], got {bits}")
        if self.out_bits > 0 and not self.out_bound > 0:
            raise ValueError("out_bound must be > 0 when out_bits > 0")
        if self.out_bound < 0:
            raise ValueError("out_bound must be >= 0")

    @property
    def ideal(self) -> bool:
        return self.out_noise == 0 and self.in_bits == 0 and self.out_bits == 0 and self.out_bound == 0


def quantize(x: np.ndarray, bits: int, bound: float | None = None) -> np.ndarray:
    """Symmetric uniform quantization onto ``2**(bits-1) - 1`` levels per sign.

    Without ``bound`` the range is ``[-max|x|, max|x|]``. Zero is always a
    code point.
    """
    x = np.asarray(x, dtype=float)
    if bits <= 0:
        return x
    if bound is None:
        bound = float(np.max(np.abs(x))) if x.size else 0.0
    if bound == 0:
        return np.zeros_like(x)
    levels = 2 ** (bits - 1) - 1
    step = bound / levels
    return np.clip(np.round(x / step), -levels, levels) * step


def _periphery(y: np.ndarray, cfg: MvmConfig, rng) -> np.ndarray:
    if cfg.out_noise > 0:
        if rng is None:
            raise ValueError("an rng is required when out_noise > 0")
        y = y + cfg.out_noise * rng.standard_normal(y.shape)
    if cfg.out_bound > 0:
        y = np.clip(y, -cfg.out_bound, cfg.out_bound)
        if cfg.out_bits > 0:
            y = quantize(y, cfg.out_bits, cfg.out_bound)
    return y


def _matvec(weights: np.ndarray, x, cfg: MvmConfig, rng) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != weights.shape[1]:
        raise ValueError(f"input of shape {x.shape} does not match matrix {weights.shape}")
    if cfg.in_bits > 0:
        x = quantize(x, cfg.in_bits)
    return _periphery(weights @ x, cfg, rng)


def forward(weights, x, cfg: MvmConfig = MvmConfig(), rng=None) -> np.ndarray:
    """``y = W x`` with the configured input/output non-idealities."""
    return _matvec(np.asarray(weights, dtype=float), x, cfg, rng)


def backward(weights, d, cfg: MvmConfig = MvmConfig(), rng=None) -> np.ndarray:
    """Transposed read, ``W^T d``."""
    return _matvec(np.asarray(weights, dtype=float).T, d, cfg, rng)


def read_column(a, reference, k: int, cfg: MvmConfig = MvmConfig(), rng=None) -> np.ndarray:
    """One-hot read of column ``k``: ``(A - R) e_k``, or ``A e_k`` without a reference."""
    a = np.asarray(a, dtype=float)
    n = a.shape[1]
    if not 0 <= k < n:
        raise IndexError(f"column {k} out of range for {n} columns")
    y = a[:, k].copy()
    if reference is not None:
        y -= np.asarray(reference, dtype=float)[:, k]
    # a one-hot input is exact under symmetric input quantization
    return _periphery(y, cfg, rng)


@dataclass
class CrossbarTile:
    """Gradient accumulator ``a``, reference values ``r`` and weights ``w``.

    ``w_sp`` holds the digitally stored symmetry points of ``w``; it is
    subtracted in forward/backward reads when SP correction is enabled.
    """

    a: DeviceArray
    r: np.ndarray
    w: DeviceArray
    mvm: MvmConfig = MvmConfig()
    w_sp: np.ndarray | None = None

    def __post_init__(self):
        if not (self.a.shape == self.w.shape == np.shape(self.r)):
            raise ValueError(f"A {self.a.shape}, R {np.shape(self.r)} and W {self.w.shape} must match")

    @property
    def shape(self) -> tuple[int, int]:
        return self.w.shape

    def weights(self) -> np.ndarray:
        if self.w_sp is None:
            return self.w.w
        return self.w.w - self.w_sp

    def forward(self, x, rng=None) -> np.ndarray:
        return forward(self.weights(), x, self.mvm, rng)

    def backward(self, d, rng=None) -> np.ndarray:
        return backward(self.weights(), d, self.mvm, rng)
