import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import uniform_array
from tikitaka.device import DeviceParams, sample_array
from tikitaka.mvm import CrossbarTile
from tikitaka.optimizers import (AnalogOptimizer, OptimizerConfig, Streams, TransferState,
                                 effective_eta, effective_hidden_rate, sgd_step, transfer_phase,
                                 update_phase)


def noiseless_tile(m, n, a=0.0, r=0.0, w=0.0):
    return CrossbarTile(uniform_array(m, n, w=a), np.full((m, n), r), uniform_array(m, n, w=w))


def sampled_tile(m, n, seed, sigma_r=0.0):
    rng = np.random.default_rng(seed)
    a = sample_array(DeviceParams(), m, n, rng)
    w = sample_array(DeviceParams(), m, n, rng)
    a.w[:] = a.symmetry_points()
    r = a.symmetry_points() + sigma_r * rng.standard_normal((m, n))
    return CrossbarTile(a, r, w)


class TestConfig:
    @pytest.mark.parametrize("kwargs,field", [
        ({"algorithm": "adam"}, "algorithm"), ({"lr": 0.0}, "lr"), ({"n_s": 0}, "n_s"),
        ({"rho": 1.5}, "rho"), ({"beta": 0.0}, "beta"), ({"l_max": 0}, "l_max"),
        ({"algorithm": "tt4", "rho": 0.0}, "rho"), ({"ema_coeff": 1.0}, "ema_coeff"),
    ])
    def test_invalid(self, kwargs, field):
        with pytest.raises(ValueError, match=f"^{field}"):
            OptimizerConfig(**kwargs)

    def test_chopper_period(self):
        assert OptimizerConfig(rho=0.1).chopper_period == 10
        assert OptimizerConfig(rho=0.3).chopper_period == 4
        assert OptimizerConfig(rho=0.0).chopper_period == 0


def test_effective_hidden_rate():
    cfg = OptimizerConfig(lr=0.1, n_s=1, gamma0=200)
    assert effective_hidden_rate(cfg, 20, 0.05) == pytest.approx(0.2)
    assert effective_hidden_rate(OptimizerConfig(n_s=3), 20, 0.05) == pytest.approx(0.6)


def test_effective_eta():
    assert effective_eta(OptimizerConfig(eta0=1, l_max=5), 1.0, 1.0, 0.05) == pytest.approx(0.25)
    assert effective_eta(OptimizerConfig(eta0=1, l_max=5), 2.0, 0.5, 0.05) == pytest.approx(0.25)


def test_threshold_crossing_pulses_w():
    tile = noiseless_tile(2, 3)
    state = TransferState.zeros(2, 3)
    state.k = 2  # next transfer reads column 0
    state.h[:, 0] = [1.2, -0.4]
    count = transfer_phase(tile, state, OptimizerConfig(), Streams.coerce(0))
    assert count == 1
    assert state.h[0, 0] == 0.0 and state.h[1, 0] == -0.4
    assert tile.w.w[0, 0] == pytest.approx(0.05)
    assert np.count_nonzero(tile.w.w) == 1


def test_negative_threshold():
    tile = noiseless_tile(1, 1)
    state = TransferState.zeros(1, 1)
    state.h[0, 0] = -1.5
    transfer_phase(tile, state, OptimizerConfig(), Streams.coerce(0))
    assert tile.w.w[0, 0] == pytest.approx(-0.05) and state.h[0, 0] == 0.0


def test_tt2_offset_drift():
    # one column, A at 0, R at 0.8: each read adds -lam_h * 0.8
    tile = noiseless_tile(1, 1, r=0.8)
    cfg = OptimizerConfig(algorithm="tt2", lr=0.001)
    lam = effective_hidden_rate(cfg, 1, 0.05)
    state = TransferState.zeros(1, 1)
    for _ in range(10):
        transfer_phase(tile, state, cfg, Streams.coerce(0))
    assert state.h[0, 0] == pytest.approx(-10 * lam * 0.8)


def test_tt3_offset_cancels_over_phase_pair():
    tile = noiseless_tile(1, 1, r=0.8)
    cfg = OptimizerConfig(algorithm="tt3", lr=0.001, rho=0.1, regular_chopper=True)
    state = TransferState.zeros(1, 1)
    streams = Streams.coerce(0)
    for _ in range(20):
        transfer_phase(tile, state, cfg, streams)
    assert state.h[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert state.choppers[0] == 1.0


def test_tt4_beta_one_absorbs_constant_reads():
    tile = noiseless_tile(2, 1, a=0.3)
    cfg = OptimizerConfig(algorithm="tt4", lr=0.001, rho=0.25, beta=1.0)
    state = TransferState.zeros(2, 1)
    streams = Streams.coerce(0)
    for _ in range(4):
        transfer_phase(tile, state, cfg, streams)
    np.testing.assert_array_equal(state.mu_past[:, 0], 0.3)
    assert state.choppers[0] == -1.0
    h = state.h.copy()
    for _ in range(12):
        transfer_phase(tile, state, cfg, streams)
    np.testing.assert_array_equal(state.h, h)


def test_tt4_reads_without_reference():
    tile = noiseless_tile(1, 1, a=0.3, r=5.0)
    cfg = OptimizerConfig(algorithm="tt4", lr=0.001)
    state = TransferState.zeros(1, 1)
    transfer_phase(tile, state, cfg, Streams.coerce(0))
    lam = effective_hidden_rate(cfg, 1, 0.05)
    assert state.h[0, 0] == pytest.approx(lam * 0.3)


def test_tt2_chopper_constant():
    opt = AnalogOptimizer(sampled_tile(3, 3, 0), OptimizerConfig(algorithm="tt2"), Streams.coerce(1))
    rng = np.random.default_rng(2)
    for _ in range(200):
        opt.step(rng.standard_normal(3), rng.standard_normal(3))
    np.testing.assert_array_equal(opt.state.choppers, 1.0)


def test_tt3_random_chopper_flip_rate():
    tile = noiseless_tile(1, 1)
    cfg = OptimizerConfig(algorithm="tt3", rho=0.1)
    state = TransferState.zeros(1, 1)
    streams = Streams.coerce(5)
    flips = 0
    for _ in range(20_000):
        before = state.choppers[0]
        transfer_phase(tile, state, cfg, streams)
        flips += state.choppers[0] != before
    assert flips / 20_000 == pytest.approx(0.1, abs=0.01)


def test_plain_sgd_touches_only_w():
    tile = sampled_tile(3, 4, 0)
    a0, h0 = tile.a.w.copy(), np.zeros((3, 4))
    opt = AnalogOptimizer(tile, OptimizerConfig(algorithm="plain_sgd", lr=0.1), Streams.coerce(1))
    rng = np.random.default_rng(0)
    for _ in range(50):
        info = opt.step(rng.standard_normal(4), rng.standard_normal(3))
        assert not info.transferred and info.a_pulses == 0
    np.testing.assert_array_equal(tile.a.w, a0)
    np.testing.assert_array_equal(opt.state.h, h0)
    assert opt.state.w_pulses > 0


def test_plain_sgd_learns_on_linear_device():
    # bounds far away make the device effectively linear
    n, dw = 4, 1e-3
    tile = CrossbarTile(uniform_array(n, n), np.zeros((n, n)),
                        uniform_array(n, n, b_max=1e6, b_min=-1e6, alpha_plus=dw, alpha_minus=dw,
                                      params=DeviceParams(dw_min=dw, sigma_b=0, sigma_ctoc=0,
                                                          sigma_dtod=0, sigma_updown=0)))
    opt = AnalogOptimizer(tile, OptimizerConfig(algorithm="plain_sgd", lr=0.05), Streams.coerce(3))
    rng = np.random.default_rng(4)
    target = rng.normal(0, 0.3, (n, n))
    errors = [np.sqrt(np.mean(target ** 2))]
    for step in range(1, 2001):
        x = rng.standard_normal(n)
        opt.step(x, -(opt.forward(x) - target @ x) / n)
        if step in (25, 50, 100, 2000):
            errors.append(np.sqrt(np.mean((tile.w.w - target) ** 2)))
    assert all(b < a for a, b in zip(errors, errors[1:]))
    assert errors[-1] < 0.01


def test_transfer_schedule():
    tile = sampled_tile(2, 4, 0)
    opt = AnalogOptimizer(tile, OptimizerConfig(algorithm="tt2", n_s=1), Streams.coerce(1))
    cols = []
    opt.on_transfer = lambda rec: cols.append(rec.k) if rec.i == 0 else None
    rng = np.random.default_rng(0)
    for _ in range(4):
        assert opt.step(rng.standard_normal(4), rng.standard_normal(2)).transferred
    assert sorted(cols) == [0, 1, 2, 3]

    opt = AnalogOptimizer(sampled_tile(2, 4, 0), OptimizerConfig(algorithm="tt2", n_s=3),
                          Streams.coerce(1))
    flags = [opt.step(rng.standard_normal(4), rng.standard_normal(2)).transferred for _ in range(9)]
    assert flags == [False, False, True] * 3


def test_tt3_rho_zero_equals_tt2():
    runs = []
    for cfg in (OptimizerConfig(algorithm="tt2"), OptimizerConfig(algorithm="tt3", rho=0.0)):
        opt = AnalogOptimizer(sampled_tile(4, 4, 7), cfg, Streams.coerce(8))
        rng = np.random.default_rng(9)
        for _ in range(300):
            opt.step(rng.standard_normal(4), rng.standard_normal(4))
        runs.append((opt.tile.a.w.copy(), opt.tile.w.w.copy(), opt.state.h.copy()))
    for x, y in zip(*runs):
        np.testing.assert_array_equal(x, y)


def test_chopper_demodulation_sign():
    # constant negative gradient: the demodulated increments stay negative in mean
    tile = sampled_tile(1, 1, 3)
    cfg = OptimizerConfig(algorithm="tt3", rho=0.1, regular_chopper=True)
    opt = AnalogOptimizer(tile, cfg, Streams.coerce(4))
    increments = []
    opt.on_transfer = lambda rec: increments.append(rec.chopper * (rec.a - rec.r))
    for _ in range(2000):
        opt.step(np.array([1.0]), np.array([-0.5]))
    assert np.mean(increments) < 0
    assert tile.w.w[0, 0] < 0


def test_correct_w_sp():
    tile = sampled_tile(3, 3, 0)
    AnalogOptimizer(tile, OptimizerConfig(correct_w_sp=True), Streams.coerce(0))
    np.testing.assert_array_equal(tile.w_sp, tile.w.symmetry_points())


def test_update_dimension_mismatch():
    with pytest.raises(ValueError):
        update_phase(noiseless_tile(2, 3), TransferState.zeros(2, 3), np.ones(2), np.ones(3),
                     OptimizerConfig(), Streams.coerce(0))


@settings(max_examples=25, deadline=None)
@given(alg=st.sampled_from(["tt2", "tt3", "tt4"]), n_s=st.integers(1, 4),
       rho=st.floats(0.05, 1.0), m=st.integers(1, 4), n=st.integers(1, 4),
       seed=st.integers(0, 2**31))
def test_state_invariants(alg, n_s, rho, m, n, seed):
    cfg = OptimizerConfig(algorithm=alg, n_s=n_s, rho=rho, lr=0.5)
    tile = sampled_tile(m, n, seed)
    state = TransferState.zeros(m, n)
    streams = Streams.coerce(seed)
    rng = np.random.default_rng(seed + 1)
    for _ in range(40):
        info = sgd_step(tile, state, rng.standard_normal(n), rng.standard_normal(m), cfg, streams)
        state.check(cfg)
        if info.transferred:
            assert np.all(np.abs(state.h[:, state.k]) <= 1.0)
        for arr in (tile.a, tile.w):
            assert np.all(arr.w <= arr.b_max) and np.all(arr.w >= arr.b_min)
