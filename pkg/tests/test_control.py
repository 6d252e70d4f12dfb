from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qfmux import control as ctl
from qfmux.control import ControllerGains, ControlMode
from qfmux.errors import AllocationError
from qfmux.sources import REFERENCE_PSNR_PARAMS, SourceParams, eval_utility

T = 1.0 / 3.0
vec = st.lists(st.floats(-100, 100), min_size=1, max_size=12)


class TestGains:
    def test_reference_presets(self):
        assert ctl.REFERENCE_DELAY_GAINS.k_t == pytest.approx(68.6)
        assert ctl.REFERENCE_BUFFER_GAINS.mode is ControlMode.BUFFER_LEVEL

    def test_check_qf(self):
        with pytest.raises(ValueError):
            ControllerGains(1.0, 0.0, 1.0, 1.0).check_qf()
        with pytest.raises(ValueError):
            ControllerGains(1.0, 1.0, 1.0, 0.0).check_qf()

    def test_finite(self):
        with pytest.raises(ValueError):
            ControllerGains(math.inf, 1.0, 1.0, 1.0)

    def test_numpy_scalars_coerced(self):
        g = ControllerGains(np.float64(1.0), 2, 3, 4)
        assert type(g.kp_t) is float and type(g.ki_t) is float

    def test_trf_keeps_proportional_encoding(self):
        g = ctl.trf_gains(ctl.REFERENCE_BUFFER_GAINS)
        assert (g.kp_t, g.ki_t, g.kp_e, g.ki_e) == (0.0, 0.0, 0.666, 0.0)


class TestDiscrepancies:
    def test_equal(self):
        assert np.array_equal(ctl.utility_discrepancies([40.0, 40.0]), [0.0, 0.0])

    def test_symmetric(self):
        assert np.array_equal(ctl.utility_discrepancies([30.0, 50.0]), [10.0, -10.0])

    @given(vec)
    def test_zero_sum(self, u):
        assert abs(math.fsum(ctl.utility_discrepancies(u))) <= 1e-12


class TestTransmission:
    def test_equilibrium_form(self):
        r = ctl.qf_transmission_rates([3.0] * 4, [0.0] * 4, 1000.0, ctl.REFERENCE_DELAY_GAINS)
        assert np.array_equal(r, [1000.0] * 4)

    def test_two_stream_arithmetic(self):
        # gains in bit/s units, so the 0.01 discrepancy moves 673 kbit/s
        g = ControllerGains(66e3, 1.3e3, 1.0, 1.0)
        r = ctl.qf_transmission_rates([-0.01, 0.01], [0.0, 0.0], 2000.0, g)
        assert r == pytest.approx([2673.0, 1327.0])

    def test_below_average_gets_more(self):
        r = ctl.qf_transmission_rates([1.0, 2.0, 3.0], [0.0] * 3, 500.0, ctl.REFERENCE_DELAY_GAINS)
        assert r[0] > 500.0 > r[2]

    def test_floor_redistribution(self):
        g = ControllerGains(1e4, 1.0, 1.0, 1.0)
        r = ctl.qf_transmission_rates([10.0, 0.0, 0.0], [0.0] * 3, 100.0, g)
        assert r[0] == ctl.RATE_FLOOR
        assert math.fsum(r) == 300.0

    def test_infeasible(self):
        with pytest.raises(AllocationError):
            ctl.enforce_sum(np.array([1.0, 1.0]), 1.0, floor=1.0)

    @given(vec, st.floats(10.0, 5000.0), st.integers(0, 2**31))
    def test_sum_exact(self, u, R0, seed):
        n = len(u)
        phi = np.random.default_rng(seed).standard_normal(n) * 10
        phi -= phi.mean()
        r = ctl.qf_transmission_rates(u, phi, R0, ctl.REFERENCE_DELAY_GAINS, total=n * R0)
        assert abs(math.fsum(r) - n * R0) <= 1e-9 * n * R0
        assert np.all(r >= ctl.RATE_FLOOR)


class TestAccumulators:
    def test_phi_zero_hold(self):
        assert np.array_equal(ctl.update_phi([1.0, -1.0], [2.0, -2.0], 1), [0.0, 0.0])
        assert np.array_equal(ctl.update_phi([1.0, -1.0], [2.0, -2.0], 2), [0.0, 0.0])

    def test_phi_linear_growth(self):
        phi = np.zeros(2)
        for j in range(3, 8):
            phi = ctl.update_phi(phi, [0.5, -0.5], j)
        assert phi == pytest.approx([2.5, -2.5])

    @given(st.lists(vec.filter(lambda v: len(v) == 5), min_size=1, max_size=30))
    def test_phi_zero_sum(self, seq):
        phi = np.zeros(5)
        for j, u in enumerate(seq, start=3):
            phi = ctl.update_phi(phi, ctl.utility_discrepancies(u), j)
        assert abs(math.fsum(phi)) <= 1e-12 * max(1.0, np.abs(phi).max())

    def test_pi_zero_hold(self):
        assert ctl.update_pi_acc(3.0, 1.0, 2) == 0.0
        assert ctl.update_pi_acc(3.0, 1.0, 3) == 0.0

    def test_pi_hand_recursion(self):
        d = [0.5, -0.2, 0.1, 0.4, -0.3]
        p = 0.0
        for j, x in enumerate(d, start=1):
            p = ctl.update_pi_acc(p, x, j)
        assert p == pytest.approx(0.4 - 0.3)

    def test_pi_vector(self):
        out = ctl.update_pi_acc(np.array([1.0, 2.0]), np.array([0.5, 0.5]), 4)
        assert out == pytest.approx([1.5, 2.5])


class TestEncoding:
    def test_zero_error(self):
        assert ctl.qf_encoding_rate(0.0, 0.0, 667.0, ctl.REFERENCE_DELAY_GAINS, T) == (667.0, 667.0)

    def test_delay_arithmetic(self):
        # (K/T) * 0.5 s = 100 kbit/s
        k = 200.0 * T
        g = ControllerGains(1.0, 1.0, k / 2, k / 2, ControlMode.BUFFERING_DELAY)
        raw, app = ctl.qf_encoding_rate(0.5, 0.0, 667.0, g, T)
        assert raw == pytest.approx(567.0)

    def test_buffer_sign(self):
        raw, _ = ctl.qf_encoding_rate(50e3, 0.0, 667.0, ctl.REFERENCE_BUFFER_GAINS, T)
        assert raw < 667.0

    def test_buffer_scaling(self):
        # 100 kbit above reference, k_e = 0.3: a 30 kbit correction over T
        g = ControllerGains(1.0, 1.0, 0.3, 0.0, ControlMode.BUFFER_LEVEL)
        raw, _ = ctl.qf_encoding_rate(100e3, 0.0, 667.0, g, T)
        assert raw == pytest.approx(667.0 - 90.0)

    def test_clamp(self):
        raw, app = ctl.qf_encoding_rate(1e3, 0.0, 667.0, ctl.REFERENCE_DELAY_GAINS, T, ceiling=4000.0)
        assert raw < 0 and app == ctl.RATE_FLOOR
        raw, app = ctl.qf_encoding_rate(-1e3, 0.0, 667.0, ctl.REFERENCE_DELAY_GAINS, T, ceiling=4000.0)
        assert app == 4000.0

    def test_vectorized(self):
        raw, app = ctl.qf_encoding_rate(np.zeros(3), np.zeros(3), 500.0, ctl.REFERENCE_DELAY_GAINS, T)
        assert np.array_equal(app, [500.0] * 3)


class TestBaselines:
    def test_trf(self):
        assert ctl.trf_rates(6, 4000.0) == pytest.approx([4000 / 6] * 6)
        assert ctl.trf_rates(1, 4000.0)[0] == 4000.0
        with pytest.raises(ValueError):
            ctl.trf_rates(0, 1.0)

    def test_ummf_identical(self):
        p = REFERENCE_PSNR_PARAMS[0]
        assert ctl.ummf_encoding_rates([p] * 4, 4000.0) == pytest.approx([1000.0] * 4)

    def test_ummf_two_to_one(self):
        p = [SourceParams("LogPSNR", 1.0, 0.2), SourceParams("LogPSNR", 1.0, 0.1)]
        r = ctl.ummf_encoding_rates(p, 3000.0)
        assert r == pytest.approx([1000.0, 2000.0], rel=1e-9)
        assert 0.2 * r[0] == pytest.approx(0.1 * r[1], rel=1e-9)

    def test_ummf_equal_utilities(self):
        r = ctl.ummf_encoding_rates(REFERENCE_PSNR_PARAMS, 4000.0)
        u = [eval_utility(p, x) for p, x in zip(REFERENCE_PSNR_PARAMS, r)]
        assert max(u) - min(u) < 1e-9
        assert math.fsum(r) == pytest.approx(4000.0, rel=1e-9)

    def test_ummf_drain(self):
        r = ctl.ummf_transmission_rates([500e3, 300e3], 400e3, 3.0, 1000.0)
        assert r == pytest.approx([1300.0, 700.0])

    def test_ummf_drain_at_reference(self):
        assert np.array_equal(ctl.ummf_transmission_rates([400e3] * 3, 400e3, 3.0, 800.0), [800.0] * 3)

    def test_ummf_zero_gain_is_trf(self):
        r = ctl.ummf_transmission_rates([0.0, 9e5], 400e3, 0.0, 800.0)
        assert np.array_equal(r, [800.0, 800.0])

    def test_ummf_negative_gain(self):
        with pytest.raises(ValueError):
            ctl.ummf_transmission_rates([0.0], 0.0, -1.0, 1.0)
