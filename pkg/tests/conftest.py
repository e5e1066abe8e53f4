import numpy as np
import pytest

from hca2e.core import Candidate, Kind, Request, RequestBatch, RequestConstraints, SlotExposureModel


def organic(rank, u_rec, pctr=0.0, pcvr=0.0, price=0.0):
    return Candidate(f"r{rank}", Kind.ORGANIC, rank, utility_rec=u_rec, pctr=pctr, pcvr=pcvr, item_price=price)


def ad(rank, u_ad, u_rec=0.0, pctr=0.0, pcvr=0.0, price=0.0, ppc=0.0):
    return Candidate(f"a{rank}", Kind.AD, rank, utility_rec=u_rec, utility_ad=u_ad, pctr=pctr, pcvr=pcvr,
                     item_price=price, price_per_click=ppc)


def make_request(rec_utils, ad_utils, L=None, tas=1, mag=1, rid=0):
    """Request from plain utility lists; ``ad_utils`` holds ``(u_ad, u_rec)`` pairs."""
    L = len(rec_utils) if L is None else L
    recs = [organic(k + 1, u) for k, u in enumerate(rec_utils)]
    ads = [ad(k + 1, ua, ur) for k, (ua, ur) in enumerate(ad_utils)]
    return Request(rid, recs, ads, RequestConstraints(L, tas, mag))


def random_request(rng, L, tas, mag, max_ads=None, rid=0):
    """Random request with recs and ads in descending upstream order."""
    max_ads = L if max_ads is None else max_ads
    n_ads = int(rng.integers(0, max_ads + 1))
    rec_u = np.sort(rng.exponential(1.0, L))[::-1]
    recs = [organic(k + 1, float(u), pctr=float(rng.uniform(0, 0.2)), pcvr=float(rng.uniform(0, 0.2)),
                    price=float(rng.uniform(1, 10)))
            for k, u in enumerate(rec_u)]
    ads = []
    for k in range(n_ads):
        ads.append(ad(k + 1, float(rng.exponential(1.0)), float(rng.exponential(0.5)),
                      pctr=float(rng.uniform(0, 0.2)), pcvr=float(rng.uniform(0, 0.2)),
                      price=float(rng.uniform(1, 10)), ppc=float(rng.uniform(0.1, 2))))
    return Request(rid, recs, ads, RequestConstraints(L, tas, mag))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def q4():
    return SlotExposureModel((1.0, 0.5, 0.25, 0.125))


@pytest.fixture
def small_batch():
    from hca2e.simulator import GeneratorConfig, generate_stream

    cfg = GeneratorConfig(seed=3, num_requests=400, page_length=20, top_ad_slot=3, min_ad_gap=3, num_ads_max=6)
    return cfg, generate_stream(cfg)


def batch_of(requests):
    return RequestBatch.from_requests(list(requests))
