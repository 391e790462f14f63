"""Soft-bounds resistive device model.

Weights live in a normalized, dimensionless range (nominally [-1, 1]).
A single pulse in the up direction moves a device by
``alpha_plus * (b_max - w) / b_max`` and in the down direction by
``-alpha_minus * (b_min - w) / b_min``, each scaled by a cycle-to-cycle
noise factor. Every device in an array draws its own bounds and slopes.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

MAX_RESAMPLE = 100


class DegenerateDeviceError(ValueError):
    """Raised when device parameters cannot produce a valid soft-bounds device."""


@dataclass(frozen=True)
class DeviceParams:
    """Hyper-parameters of the soft-bounds device population."""

    dw_min: float = 0.05
    sigma_b: float = 0.3
    sigma_ctoc: float = 0.3
    sigma_dtod: float = 0.3
    sigma_updown: float = 0.3

    def __post_init__(self):
        if not self.dw_min > 0:
            raise ValueError(f"dw_min must be > 0, got {self.dw_min}")
        for name in ("sigma_b", "sigma_ctoc", "sigma_dtod", "sigma_updown"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.n_states < 1:
            raise ValueError(f"n_states = 2/dw_min must be >= 1, got {self.n_states}")

    @property
    def n_states(self) -> float:
        return 2.0 / self.dw_min

    @classmethod
    def from_n_states(cls, n_states: float, **kwargs) -> "DeviceParams":
        return cls(dw_min=2.0 / n_states, **kwargs)


@dataclass
class DeviceElement:
    """A single device, used for scalar reasoning and tests."""

    w: float
    b_max: float
    b_min: float
    alpha_plus: float
    alpha_minus: float

    @property
    def degenerate(self) -> bool:
        return not (self.b_max > 0 and self.b_min < 0
                    and self.alpha_plus > 0 and self.alpha_minus > 0)


class DeviceArray:
    """An m x n grid of soft-bounds devices, stored as parallel arrays."""

    def __init__(self, w, b_max, b_min, alpha_plus, alpha_minus, params: DeviceParams):
        self.w = np.ascontiguousarray(w, dtype=float)
        self.b_max = np.ascontiguousarray(b_max, dtype=float)
        self.b_min = np.ascontiguousarray(b_min, dtype=float)
        self.alpha_plus = np.ascontiguousarray(alpha_plus, dtype=float)
        self.alpha_minus = np.ascontiguousarray(alpha_minus, dtype=float)
        self.params = params
        shape = self.w.shape
        if len(shape) != 2:
            raise ValueError(f"device arrays are 2-d, got shape {shape}")
        for arr in (self.b_max, self.b_min, self.alpha_plus, self.alpha_minus):
            if arr.shape != shape:
                raise ValueError("device parameter arrays must share one shape")

    @property
    def shape(self) -> tuple[int, int]:
        return self.w.shape

    def element(self, i: int, j: int) -> DeviceElement:
        return DeviceElement(
            float(self.w[i, j]), float(self.b_max[i, j]), float(self.b_min[i, j]),
            float(self.alpha_plus[i, j]), float(self.alpha_minus[i, j]),
        )

    def copy(self) -> "DeviceArray":
        return DeviceArray(self.w.copy(), self.b_max.copy(), self.b_min.copy(),
                           self.alpha_plus.copy(), self.alpha_minus.copy(), self.params)

    def symmetry_points(self) -> np.ndarray:
        return symmetry_point_array(self.alpha_plus, self.alpha_minus, self.b_max, self.b_min)

    def apply_pulses(self, signs: np.ndarray, rng: np.random.Generator) -> int:
        """Apply one pulse per nonzero entry of ``signs`` (+1 up, -1 down).

        Returns the number of pulses applied. Cycle-to-cycle noise is drawn
        only for the pulsed elements, in C order.
        """
        signs = np.asarray(signs, dtype=float).reshape(-1)
        idx = np.flatnonzero(signs)
        return self.apply_pulses_at(idx, signs[idx], rng)

    def apply_pulses_at(self, idx: np.ndarray, signs: np.ndarray, rng: np.random.Generator) -> int:
        """Pulse the devices at flat indices ``idx`` (sorted, unique) with ``signs``."""
        if idx.size == 0:
            return 0
        flat = self.w.reshape(-1)
        w = flat[idx]
        b_max = self.b_max.reshape(-1)[idx]
        b_min = self.b_min.reshape(-1)[idx]
        factor = 1.0 + self.params.sigma_ctoc * rng.standard_normal(idx.size)
        np.maximum(factor, 0.0, out=factor)
        dw = np.where(
            signs > 0,
            self.alpha_plus.reshape(-1)[idx] * (b_max - w) / b_max,
            -self.alpha_minus.reshape(-1)[idx] * (b_min - w) / b_min,
        )
        flat[idx] = np.minimum(np.maximum(w + dw * factor, b_min), b_max)
        return int(idx.size)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["row", "col", "w", "b_max", "b_min", "alpha_plus", "alpha_minus", "sp"])
        sp = self.symmetry_points()
        m, n = self.shape
        for i in range(m):
            for j in range(n):
                writer.writerow([i, j] + [repr(float(v[i, j])) for v in (
                    self.w, self.b_max, self.b_min, self.alpha_plus, self.alpha_minus, sp)])
        return buf.getvalue()


def _draw(params: DeviceParams, size: int, rng: np.random.Generator):
    xi = rng.standard_normal((4, size))
    b_max = np.maximum(1.0 + params.sigma_b * xi[0], 0.0)
    b_min = np.minimum(-1.0 + params.sigma_b * xi[1], 0.0)
    gamma = np.exp(params.sigma_dtod * xi[2])
    rho = params.sigma_updown * xi[3]
    return b_max, b_min, params.dw_min * (gamma + rho), params.dw_min * (gamma - rho)


def sample_array(params: DeviceParams, m: int, n: int, rng) -> DeviceArray:
    """Draw an m x n array of devices with all weights at zero.

    ``rng`` is a seed or a ``numpy.random.Generator``. Degenerate draws
    (zero-width bound or non-positive slope) are redrawn, at most
    ``MAX_RESAMPLE`` times per element.
    """
    if m < 1 or n < 1:
        raise ValueError(f"array dimensions must be >= 1, got {m}x{n}")
    rng = np.random.default_rng(rng)
    size = m * n
    b_max, b_min, ap, am = _draw(params, size, rng)
    for _ in range(MAX_RESAMPLE):
        bad = np.flatnonzero(~((b_max > 0) & (b_min < 0) & (ap > 0) & (am > 0)))
        if bad.size == 0:
            break
        nb_max, nb_min, nap, nam = _draw(params, bad.size, rng)
        b_max[bad], b_min[bad], ap[bad], am[bad] = nb_max, nb_min, nap, nam
    else:
        raise DegenerateDeviceError(
            f"{bad.size} devices still degenerate after {MAX_RESAMPLE} redraws; "
            f"sigmas are pathological: {params}"
        )
    shape = (m, n)
    return DeviceArray(np.zeros(shape), b_max.reshape(shape), b_min.reshape(shape),
                       ap.reshape(shape), am.reshape(shape), params)


def pulse_update(elem: DeviceElement, direction: int, rng=None, sigma_ctoc: float = 0.0) -> DeviceElement:
    """Return a copy of ``elem`` after one pulse in ``direction`` (+1 or -1)."""
    factor = 1.0
    if sigma_ctoc > 0:
        factor = max(1.0 + sigma_ctoc * np.random.default_rng(rng).standard_normal(), 0.0)
    w = elem.w
    if direction > 0:
        w = w + elem.alpha_plus * (elem.b_max - w) / elem.b_max * factor
    elif direction < 0:
        w = w - elem.alpha_minus * (elem.b_min - w) / elem.b_min * factor
    w = min(max(w, elem.b_min), elem.b_max)
    return DeviceElement(w, elem.b_max, elem.b_min, elem.alpha_plus, elem.alpha_minus)


def symmetry_point(elem: DeviceElement) -> float:
    """Weight at which up and down steps have equal size."""
    if elem.degenerate:
        raise DegenerateDeviceError(f"symmetry point undefined for degenerate device {elem}")
    return (elem.alpha_plus - elem.alpha_minus) / (
        elem.alpha_plus / elem.b_max - elem.alpha_minus / elem.b_min)


def symmetry_point_array(alpha_plus, alpha_minus, b_max, b_min) -> np.ndarray:
    return (alpha_plus - alpha_minus) / (alpha_plus / b_max - alpha_minus / b_min)


def program_reference(a: DeviceArray, mu_r: float, sigma_r: float, rng) -> np.ndarray:
    """Reference values set to the symmetry points of ``a`` plus an offset.

    The offset per element is ``mu_r + sigma_r * xi`` with standard normal
    ``xi``. The result is a plain value matrix; it is never pulsed.
    """
    rng = np.random.default_rng(rng)
    xi = rng.standard_normal(a.shape)
    return a.symmetry_points() + mu_r + sigma_r * xi
