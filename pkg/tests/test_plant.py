from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfmux.errors import NumericError
from qfmux.plant import (
    PlantConfig,
    StreamState,
    VURecord,
    buffer_step,
    estimate_delay,
    exact_delay,
    new_stream_state,
    shift_delay_lines,
    smoothed_rate_sequence,
    update_rate_estimate,
)

T = 1.0 / 3.0


def state(bits=0.0, rate=600.0):
    return StreamState(bits, [rate, rate], [1.0, 1.0], rate)


class TestConfig:
    def test_defaults(self):
        c = PlantConfig()
        assert (c.T, c.B_max, c.B0, c.tau0, c.alpha, c.initial_buffer_vus) == (1 / 3, 4e6, 400e3, 1.5, 0.2, 3)

    @pytest.mark.parametrize(
        "kw", [{"alpha": 0.0}, {"alpha": 1.0}, {"B0": 5e6}, {"T": 0.0}, {"tau0": -1.0}, {"initial_buffer_vus": -1}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            PlantConfig(**kw)


class TestBufferStep:
    def test_balance(self):
        s = new_stream_state(667.0, 1.0, 0, T)
        s.buffer_bits = 400e3
        s.vu_queue.append(VURecord(400e3, 400e3, 667.0, 1.0))
        log = buffer_step(s, 667.0, 667.0, T)
        assert s.buffer_bits == pytest.approx(400e3, abs=1e-9)
        assert not (log.underflow or log.overflow)

    def test_empty_underflow(self):
        s = state(0.0)
        log = buffer_step(s, 0.0, 667.0, T)
        assert s.buffer_bits == 0.0
        assert log.underflow and log.drained_bits == 0.0
        assert s.underflows == 1

    def test_overflow(self):
        s = state(0.0)
        s.buffer_bits = 100e3
        s.vu_queue.append(VURecord(100e3, 100e3, 300.0, 1.0))
        log = buffer_step(s, 1000.0, 0.0, T, B_max=200e3)
        assert s.buffer_bits == 200e3
        assert log.overflow and log.dropped_bits == pytest.approx(100e3 + 1000e3 / 3 - 200e3)
        assert s.queue_bits() == pytest.approx(200e3)

    def test_negative_rate(self):
        with pytest.raises(ValueError):
            buffer_step(state(), -1.0, 0.0, T)

    def test_partial_head_drain(self):
        s = new_stream_state(600.0, 1.0, 3, T)
        buffer_step(s, 600.0, 300.0, T)
        # head VU is half gone; three whole VUs behind it
        assert s.vu_queue[0].remaining_bits == pytest.approx(100e3)
        assert exact_delay(s, T) == pytest.approx(3.5 * T)

    @settings(max_examples=200)
    @given(st.lists(st.tuples(st.floats(0, 3000), st.floats(0, 3000)), min_size=1, max_size=40))
    def test_queue_reconciles(self, steps):
        s = new_stream_state(600.0, 1.0, 3, T)
        for arrive, drain in steps:
            buffer_step(s, arrive, drain, T, B_max=2e6)
            assert 0.0 <= s.buffer_bits <= 2e6
            assert abs(s.queue_bits() - s.buffer_bits) <= 1.0

    @given(st.lists(st.tuples(st.floats(100, 800), st.floats(100, 800)), min_size=1, max_size=30))
    def test_bit_conservation(self, steps):
        s = new_stream_state(600.0, 1.0, 3, T)
        start = s.buffer_bits
        arrived = drained = 0.0
        clamped = False
        for a, d in steps:
            log = buffer_step(s, a, d, T)
            arrived += log.arrived_bits
            drained += log.drained_bits
            clamped |= log.underflow or log.overflow
        if not clamped:
            assert s.buffer_bits == pytest.approx(start + arrived - drained, abs=1e-6)


class TestRateEstimate:
    def test_bootstrap_uses_target(self):
        s = state(rate=500.0)
        assert update_rate_estimate(s, 1, 0.2, 700.0) == 700.0

    def test_recursion(self):
        s = state(rate=600.0)
        s.enc_rate_line = [900.0, 600.0]
        assert update_rate_estimate(s, 3, 0.2, 900.0) == pytest.approx(600.0)
        s.enc_rate_line = [900.0, 900.0]
        assert update_rate_estimate(s, 4, 0.2, 900.0) == pytest.approx(0.2 * 900 + 0.8 * 600)

    def test_constant_fixed_point(self):
        assert np.all(smoothed_rate_sequence([500.0] * 20, 0.3) == 500.0)

    def test_alpha_one_is_pure_delay(self):
        r = np.arange(1.0, 11.0) * 100
        out = smoothed_rate_sequence(r, 1.0)
        assert np.array_equal(out[2:], r[:-2])

    def test_hand_recursion(self):
        out = smoothed_rate_sequence([600.0, 600.0, 900.0, 900.0, 900.0], 0.2)
        assert out[2] == pytest.approx(600.0)
        assert out[3] == pytest.approx(0.2 * 600 + 0.8 * 600)
        assert out[4] == pytest.approx(0.2 * 900 + 0.8 * 600)


class TestDelay:
    def test_estimate(self):
        s = state(600e3, rate=400.0)
        assert estimate_delay(s) == pytest.approx(1.5)

    def test_estimate_empty(self):
        assert estimate_delay(state(0.0)) == 0.0

    def test_estimate_guard(self):
        s = state(1.0)
        s.rate_estimate = 0.0
        with pytest.raises(NumericError):
            estimate_delay(s)

    def test_three_vus(self):
        assert exact_delay(new_stream_state(600.0, 1.0, 3, T), T) == pytest.approx(1.0)

    def test_empty_queue(self):
        assert exact_delay(state(), T) == 0.0

    def test_half_drained_head(self):
        s = new_stream_state(600.0, 1.0, 3, T)
        s.vu_queue[0].remaining_bits /= 2
        assert exact_delay(s, T) == pytest.approx(2.5 * T)

    def test_scripted_estimator(self):
        # Eq. 9/10 by hand alongside the plant
        alpha = 0.2
        s = new_stream_state(600.0, 1.0, 3, T)
        targets = [600.0, 600.0, 900.0, 900.0, 700.0, 700.0]
        r_hat = None
        for j, tgt in enumerate(targets, start=1):
            buffer_step(s, s.r_edd, 600.0, T)
            update_rate_estimate(s, j, alpha, tgt)
            expected = tgt if j + 1 <= 2 else alpha * s.r_edd + (1 - alpha) * r_hat
            assert s.rate_estimate == pytest.approx(expected)
            r_hat = s.rate_estimate
            s.enc_rate_line = [tgt, s.enc_rate_line[0]]
            assert estimate_delay(s) == pytest.approx(s.buffer_bits / (1000 * r_hat))

    def test_estimator_consistency_constant_rate(self):
        c = 650.0
        s = new_stream_state(c, 1.0, 4, T)
        for j in range(1, 30):
            buffer_step(s, s.r_edd, c, T)
            update_rate_estimate(s, j, 0.2, c)
            shift_delay_lines(s, c, 1.0)
        assert estimate_delay(s) == pytest.approx(s.buffer_bits / (1000 * c))
        assert abs(estimate_delay(s) - exact_delay(s, T)) <= T


class TestDelayLines:
    def test_shift(self):
        s = state()
        s.enc_rate_line = [1.0, 0.0]
        s.utility_line = [10.0, 0.0]
        shift_delay_lines(s, 2.0, 20.0)
        assert s.enc_rate_line == [2.0, 1.0] and s.r_edd == 1.0
        assert s.utility_line == [20.0, 10.0] and s.u_dd == 10.0

    def test_constant_after_two(self):
        s = state()
        for _ in range(2):
            shift_delay_lines(s, 5.0, 7.0)
        assert (s.r_edd, s.u_dd) == (5.0, 7.0)

    def test_impulse_reaches_dd_after_two(self):
        s = state(rate=0.0)
        seen = []
        for j in range(1, 6):
            shift_delay_lines(s, 1.0 if j == 2 else 0.0, 0.0)
            seen.append(s.r_edd)
        assert seen == [0.0, 0.0, 1.0, 0.0, 0.0]
