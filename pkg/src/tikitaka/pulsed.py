"""Parallel outer-product update with dynamically sized stochastic pulse trains.

For an update ``eta * d x^T`` each row ``i`` fires a pulse in a round with
probability ``a |d_i|`` and each column ``j`` with probability ``b |x_j|``.
A device receives a pulse of sign ``sign(d_i x_j)`` whenever its row and
column fire in the same round. With ``a * b * l = eta / dw_min`` the
expected number of coincidences over ``l`` rounds is ``eta |d_i x_j| / dw_min``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .device import DeviceArray


@dataclass(frozen=True)
class PulsePlan:
    kappa: float
    l: int
    m_d_eff: float
    a: float
    b: float
    l_max: int

    @property
    def empty(self) -> bool:
        return self.l == 0


def plan_pulses(x, d, eta: float, dw_min: float, l_max: int,
                verbatim_coeffs: bool = False) -> PulsePlan:
    """Size the pulse trains for one update.

    With ``verbatim_coeffs`` the column coefficient ``b`` divides by
    ``l_max`` instead of ``l``, which under-scales updates whenever
    ``kappa < l_max``.
    """
    if not eta > 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    if l_max < 1:
        raise ValueError(f"l_max must be >= 1, got {l_max}")
    m_x = float(np.max(np.abs(x))) if np.size(x) else 0.0
    m_d = float(np.max(np.abs(d))) if np.size(d) else 0.0
    kappa = eta * m_x * m_d / dw_min
    if kappa == 0:  # zero input, or an update below float resolution
        return PulsePlan(0.0, 0, 0.0, 0.0, 0.0, l_max)
    l = min(l_max, math.ceil(kappa))
    m_d_eff = m_d * min(l_max / kappa, 1.0)
    a = math.sqrt(eta * m_x / (l * m_d_eff * dw_min))
    b_den = l_max if verbatim_coeffs else l
    b = math.sqrt(eta * m_d_eff / (b_den * m_x * dw_min))
    return PulsePlan(kappa, l, m_d_eff, a, b, l_max)


def stochastic_outer_update(array: DeviceArray, x, d, plan: PulsePlan,
                            rng: np.random.Generator) -> int:
    """Pulse ``eta d x^T`` onto ``array`` in place; returns the pulse count."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    m, n = array.shape
    if x.shape != (n,) or d.shape != (m,):
        raise ValueError(f"x {x.shape} and d {d.shape} do not match array {array.shape}")
    if plan.empty:
        return 0
    prob_d = np.minimum(plan.a * np.abs(d), 1.0)
    prob_x = np.minimum(plan.b * np.abs(x), 1.0)
    sign_d = np.sign(d)
    sign_x = np.sign(x)
    total = 0
    for _ in range(plan.l):
        rows = np.flatnonzero(rng.random(m) < prob_d)
        cols = np.flatnonzero(rng.random(n) < prob_x)
        if rows.size == 0 or cols.size == 0:
            continue
        idx = (rows[:, None] * n + cols[None, :]).reshape(-1)
        signs = np.multiply.outer(sign_d[rows], sign_x[cols]).reshape(-1)
        total += array.apply_pulses_at(idx, signs, rng)
    return total


def expected_pulses(x, d, plan: PulsePlan) -> np.ndarray:
    """Expected coincidence count per device for ``plan`` (clipping included)."""
    prob_d = np.minimum(plan.a * np.abs(np.asarray(d, dtype=float)), 1.0)
    prob_x = np.minimum(plan.b * np.abs(np.asarray(x, dtype=float)), 1.0)
    return plan.l * np.outer(prob_d, prob_x)
