import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hca2e.core import ConstraintViolation, ExposureTemplate, RequestBatch, SlotExposureModel, validate_template
from hca2e.evaluator import (
    TemplateScore,
    TradeoffParams,
    kvi,
    page_utility,
    request_value,
    request_weight,
    score_batch,
    score_template,
    vpw,
)

from conftest import make_request, random_request


@pytest.fixture
def two_slot():
    # recs u_rec = [2, 1]; one ad with u_ad = 3, u_rec = 0
    return make_request([2.0, 1.0], [(3.0, 0.0)], L=2), SlotExposureModel((1.0, 0.5))


def displaced_value(r, t, q, alpha):
    """Value through the slot-by-slot displacement form, independent of page_utility."""
    out = 0.0
    n_ad = n_rec = 0
    for l, is_ad in enumerate(t.slots):
        natural = r.rec_list[l].utility_rec
        if is_ad:
            a = r.ad_list[n_ad]
            out += q.q[l] * (a.utility_ad + alpha * a.utility_rec - alpha * natural)
            n_ad += 1
        else:
            out += q.q[l] * alpha * (r.rec_list[n_rec].utility_rec - natural)
            n_rec += 1
    return out


class TestWorkedExamples:
    def test_page_utility(self, two_slot):
        r, q = two_slot
        assert page_utility(r, ExposureTemplate.from_string("01"), q, 0.5) == pytest.approx(2.5)

    def test_no_ad_utility(self, two_slot):
        r, q = two_slot
        assert page_utility(r, ExposureTemplate.no_ad(2), q, 0.5) == pytest.approx(0.5 * (2.0 + 0.5 * 1.0))

    def test_value(self, two_slot):
        r, q = two_slot
        assert request_value(r, ExposureTemplate.from_string("01"), q, 0.5) == pytest.approx(1.25)

    def test_weight(self, q4):
        r = make_request([4.0, 3.0, 2.0, 1.0], [(1.0, 0.0), (1.0, 0.0)], tas=2, mag=2)
        assert request_weight(r, ExposureTemplate.from_string("0101"), q4) == pytest.approx(0.625)

    def test_weight_counts_slots_when_undiscounted(self):
        r = make_request([4.0, 3.0, 2.0, 1.0], [(1.0, 0.0)] * 3)
        q = SlotExposureModel((1.0,) * 4)
        assert request_weight(r, ExposureTemplate.from_string("1011"), q) == 3.0

    def test_tiny_alpha_is_pure_ad_utility(self, two_slot):
        r, q = two_slot
        assert page_utility(r, ExposureTemplate.from_string("01"), q, 1e-12) == pytest.approx(1.5)

    def test_vpw_and_kvi(self):
        assert vpw(0.0, 0.0) == 0.0
        assert vpw(1.25, 0.5) == 2.5
        assert vpw(-0.3, 0.5) == pytest.approx(-0.6)
        assert kvi(1.25, 0.5, 2.0) == pytest.approx(0.25)
        with pytest.raises(ValueError):
            vpw(1.0, -0.1)

    def test_no_ad_scores_are_zero(self, two_slot):
        r, q = two_slot
        assert score_template(r, ExposureTemplate.no_ad(2), q, TradeoffParams(0.5, 3.0)) == TemplateScore.zero()

    def test_infeasible_template_raises(self, two_slot):
        r, q = two_slot
        with pytest.raises(ConstraintViolation):
            request_value(r, ExposureTemplate.from_string("11"), q, 0.5)

    def test_alpha_must_be_positive(self):
        with pytest.raises(ValueError):
            TradeoffParams(0.0)


class TestProperties:
    @given(seed=st.integers(0, 10_000), alpha=st.floats(0.05, 1.0))
    @settings(max_examples=50, deadline=None)
    def test_displacement_decomposition(self, seed, alpha):
        rng = np.random.default_rng(seed)
        r = random_request(rng, 7, 2, 2)
        q = SlotExposureModel.geometric(7, 0.9)
        for bits in itertools.product((False, True), repeat=7):
            t = ExposureTemplate(bits)
            if validate_template(t, r.constraints, len(r.ad_list)):
                assert request_value(r, t, q, alpha) == pytest.approx(displaced_value(r, t, q, alpha), abs=1e-12)

    @given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 10.0))
    @settings(max_examples=40, deadline=None)
    def test_linearity(self, seed, scale):
        rng = np.random.default_rng(seed)
        r = random_request(rng, 6, 1, 2, max_ads=3)
        rs = make_request([c.utility_rec * scale for c in r.rec_list],
                          [(a.utility_ad * scale, a.utility_rec * scale) for a in r.ad_list], tas=1, mag=2)
        q = SlotExposureModel.geometric(6, 0.9)
        t = ExposureTemplate.from_ad_slots(6, [1, 3, 5][: len(r.ad_list)])
        assert request_value(rs, t, q, 0.5) == pytest.approx(scale * request_value(r, t, q, 0.5), rel=1e-12, abs=1e-12)
        assert request_weight(rs, t, q) == request_weight(r, t, q)

    @given(v=st.floats(-10, 10), w=st.floats(1e-6, 10), rho=st.floats(0, 10))
    def test_kvi_sign_matches_threshold(self, v, w, rho):
        k = kvi(v, w, rho)
        if abs(k) > 1e-9 * max(1.0, abs(v), rho * w):
            assert (k > 0) == (vpw(v, w) > rho)


class TestBatchScoring:
    def test_bit_identical_to_scalar(self, rng):
        reqs = [random_request(rng, 8, 2, 2, rid=i) for i in range(40)]
        batch = RequestBatch.from_requests(reqs)
        q = SlotExposureModel.geometric(8, 0.93)
        params = TradeoffParams(0.7, 0.4)
        templates, rows, expected = [], [], []
        for i, r in enumerate(reqs):
            for bits in itertools.product((False, True), repeat=8):
                t = ExposureTemplate(bits)
                if validate_template(t, r.constraints, len(r.ad_list)):
                    templates.append(bits)
                    rows.append(i)
                    expected.append(score_template(r, t, q, params))
        got = score_batch(batch, np.array(templates), q.as_array(), 0.7, 0.4, rows=np.array(rows))
        for j, s in enumerate(expected):
            assert (got.value[j], got.weight[j], got.kvi[j], got.vpw[j]) == (s.value, s.weight, s.kvi, s.vpw)
