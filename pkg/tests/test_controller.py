import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hca2e.controller import (
    ControllerConfigError,
    ControllerState,
    calibrate_threshold,
    capacity,
    expected_rate,
    greedy_select,
    maybe_update,
    observe,
    observe_exposures,
)
from hca2e.core import ExposureTemplate, merge_rpp

from conftest import make_request


def knapsack_dp(values, weights, cap):
    """Plain 0-1 knapsack over integer weights."""
    best = [0.0] * (cap + 1)
    for v, w in zip(values, weights):
        if v <= 0:
            continue
        for c in range(cap, w - 1, -1):
            best[c] = max(best[c], best[c - w] + v)
    return best[cap]


class TestState:
    def test_create_defaults(self):
        s = ControllerState.create(2.0, 0.1)
        assert s.rho_max == 2e6 and s.rho_min == 0.0
        assert s.learning_rate_gamma == 0.1 and s.window_size_dt == 2000

    @pytest.mark.parametrize("kw", [dict(m_star=0.0), dict(m_star=1.0), dict(gamma=0.0), dict(window=0),
                                    dict(rho_min=3.0, rho_max=1.0)])
    def test_bad_config(self, kw):
        args = dict(rho_init=1.0, m_star=0.1)
        args.update(kw)
        with pytest.raises(ControllerConfigError):
            ControllerState.create(**args)


class TestObserve:
    def test_example_accumulation(self, q4):
        r = make_request([4.0, 3.0, 2.0, 1.0], [(1.0, 0.0)] * 2, tas=2, mag=2)
        s = ControllerState.create(1.0, 0.1, window=10)
        s = observe(s, merge_rpp(r, ExposureTemplate.from_string("0101")), q4)
        assert s.window_ad_exposures == pytest.approx(0.625)
        assert s.window_total_exposures == pytest.approx(1.875)
        assert s.requests_in_window == 1
        s = observe(s, merge_rpp(r, ExposureTemplate.no_ad(4)), q4)
        assert s.window_ad_exposures == pytest.approx(0.625)
        assert s.window_total_exposures == pytest.approx(3.75)

    def test_order_independent(self):
        s = ControllerState.create(1.0, 0.1)
        a = observe_exposures(observe_exposures(s, 0.5, 2.0), 0.25, 1.0)
        b = observe_exposures(observe_exposures(s, 0.25, 1.0), 0.5, 2.0)
        assert a == b


class TestUpdate:
    def test_worked_example(self):
        s = observe_exposures(ControllerState.create(2.0, 0.10, gamma=0.1, window=1), 0.12, 1.0)
        s, rep = maybe_update(s)
        assert rep.rho_after == pytest.approx(2.04)
        assert s.rho_thres == pytest.approx(2.04)
        assert rep.realized_m == pytest.approx(0.12) and rep.rho_before == 2.0
        assert rep.relative_deviation == pytest.approx(0.2)
        assert s.window_ad_exposures == 0 and s.requests_in_window == 0 and s.window_index == 1

    def test_fixed_point(self):
        s = observe_exposures(ControllerState.create(2.0, 0.10, window=1), 0.1, 1.0)
        s, _ = maybe_update(s)
        assert s.rho_thres == pytest.approx(2.0)

    def test_no_update_before_window_closes(self):
        s = observe_exposures(ControllerState.create(2.0, 0.10, window=3), 0.5, 1.0, requests=2)
        s2, rep = maybe_update(s)
        assert rep is None and s2 == s

    def test_empty_window_is_skipped(self):
        s = observe_exposures(ControllerState.create(2.0, 0.10, window=1), 0.0, 0.0)
        s, rep = maybe_update(s)
        assert rep is None and s.rho_thres == 2.0 and s.window_index == 1

    @given(rho=st.floats(0.01, 100), m=st.floats(0.0, 1.0), m_star=st.floats(0.01, 0.9), gamma=st.floats(0.01, 1))
    def test_sign_and_clamp(self, rho, m, m_star, gamma):
        s = ControllerState.create(rho, m_star, gamma=gamma, window=1, rho_min=0.5 * rho, rho_max=1.5 * rho)
        s, rep = maybe_update(observe_exposures(s, m, 1.0))
        assert 0.5 * rho <= s.rho_thres <= 1.5 * rho
        if not (math.isclose(s.rho_thres, 0.5 * rho) or math.isclose(s.rho_thres, 1.5 * rho)):
            assert np.sign(rep.rho_after - rep.rho_before) == np.sign(m - m_star) or math.isclose(m, m_star)

    def test_low_rate_lowers_threshold(self):
        s = observe_exposures(ControllerState.create(2.0, 0.10, window=1), 0.05, 1.0)
        s, _ = maybe_update(s)
        assert s.rho_thres < 2.0


class TestKnapsack:
    def test_capacity(self):
        assert capacity(0.0, 0.1) == 0.0
        assert capacity(10000, 0.10) == pytest.approx(1000)
        with pytest.raises(ValueError):
            capacity(-1.0, 0.1)

    def test_greedy_order_and_threshold(self):
        chosen, thr = greedy_select([4.0, 3.0, 1.0, -1.0], [1.0, 2.0, 1.0, 1.0], cap=2.0)
        # densities 4, 1.5, 1: take the first, reject the second
        np.testing.assert_array_equal(chosen, [True, False, False, False])
        assert thr == pytest.approx(1.5)

    def test_overshoot_by_at_most_one(self):
        chosen, _ = greedy_select([4.0, 3.0, 1.0], [1.0, 2.0, 1.0], cap=2.0, overshoot=True)
        np.testing.assert_array_equal(chosen, [True, True, False])

    @given(seed=st.integers(0, 100_000))
    @settings(max_examples=60, deadline=None)
    def test_greedy_within_one_item_of_dp(self, seed):
        rng = np.random.default_rng(seed)
        n = 30
        w = rng.integers(1, 20, n)
        v = rng.exponential(1.0, n) * w * rng.uniform(0.2, 2.0, n)
        cap = int(rng.integers(10, 120))
        chosen, _ = greedy_select(v, w.astype(float), cap)
        assert w[chosen].sum() <= cap
        assert v[chosen].sum() >= knapsack_dp(v, w, cap) - v.max() - 1e-9


class TestCalibration:
    def test_hits_target(self, small_batch):
        cfg, batch = small_batch
        qa = cfg.exposure_model().as_array()
        rho = calibrate_threshold(batch, qa, 0.5, 0.08, 3)
        assert abs(expected_rate(batch, qa, 0.5, rho, 3) - 0.08) < 2e-3

    def test_unreachable_target_gives_zero(self, small_batch):
        cfg, batch = small_batch
        qa = cfg.exposure_model().as_array()
        assert calibrate_threshold(batch, qa, 0.5, 0.9, 3) == 0.0

    def test_rate_non_increasing_in_threshold(self, small_batch):
        cfg, batch = small_batch
        qa = cfg.exposure_model().as_array()
        rates = [expected_rate(batch, qa, 0.5, rho, 3) for rho in (0.0, 0.01, 0.05, 0.2, 1.0)]
        assert all(b <= a for a, b in zip(rates, rates[1:]))
