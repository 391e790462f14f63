import numpy as np
import pytest

from tikitaka.device import DeviceArray, DeviceElement, DeviceParams

NOISELESS = DeviceParams(dw_min=0.05, sigma_b=0.0, sigma_ctoc=0.0, sigma_dtod=0.0, sigma_updown=0.0)


def soft_bounds_step(w, direction, alpha_plus, alpha_minus, b_max=1.0, b_min=-1.0):
    """Plain-float reference for one noiseless soft-bounds pulse."""
    if direction > 0:
        w = w + alpha_plus * (b_max - w) / b_max
    else:
        w = w - alpha_minus * (b_min - w) / b_min
    return min(max(w, b_min), b_max)


def element(w=0.0, b_max=1.0, b_min=-1.0, alpha_plus=0.05, alpha_minus=0.05):
    return DeviceElement(w, b_max, b_min, alpha_plus, alpha_minus)


def uniform_array(m, n, w=0.0, b_max=1.0, b_min=-1.0, alpha_plus=0.05, alpha_minus=0.05,
                  params=NOISELESS):
    full = lambda v: np.full((m, n), v, dtype=float)
    return DeviceArray(full(w), full(b_max), full(b_min), full(alpha_plus), full(alpha_minus), params)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criterion number -> (passed, detail)
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
