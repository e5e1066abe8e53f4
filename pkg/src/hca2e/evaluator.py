"""Template value, weight, value-per-weight and knapsack value increment.

Utilities are discounted by the slot exposure probability and mixed as
``utility_ad + alpha * utility_rec``. A template's value is its page
utility minus the no-ad page utility, its weight the expected number of
ad exposures.

All sums accumulate slot by slot, left to right, in both the scalar and
the batched code paths so the two agree to the last bit on the same
template. The search relies on that for exact oracle equality.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .core import (
    ExposureTemplate,
    Request,
    RequestBatch,
    SlotExposureModel,
    merge_rpp,
)


@dataclass(frozen=True)
class TemplateScore:
    value: float
    weight: float
    kvi: float
    vpw: float

    @classmethod
    def zero(cls) -> "TemplateScore":
        return cls(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class TradeoffParams:
    alpha: float
    rho_thres: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


def page_utility(r: Request, t: ExposureTemplate, q: SlotExposureModel, alpha: float) -> float:
    page = merge_rpp(r, t)
    acc = 0.0
    for slot, cand in page.entries:
        acc += q.q[slot - 1] * (cand.utility_ad + alpha * cand.utility_rec)
    return acc


def request_value(r: Request, t: ExposureTemplate, q: SlotExposureModel, alpha: float) -> float:
    if t.is_no_ad:
        return 0.0
    return page_utility(r, t, q, alpha) - page_utility(r, ExposureTemplate.no_ad(len(t)), q, alpha)


def request_weight(r: Request, t: ExposureTemplate, q: SlotExposureModel) -> float:
    merge_rpp(r, t)  # feasibility check only
    acc = 0.0
    for slot in t.ad_slots:
        acc += q.q[slot - 1]
    return acc


def vpw(value_v: float, weight_w: float) -> float:
    """Value per weight; zero for a weightless (no-ad) template."""
    if weight_w < 0:
        raise ValueError(f"weight must be non-negative, got {weight_w}")
    if weight_w == 0:
        return 0.0
    return value_v / weight_w


def kvi(value_v: float, weight_w: float, rho_thres: float) -> float:
    return value_v - rho_thres * weight_w


def score_template(r: Request, t: ExposureTemplate, q: SlotExposureModel, params: TradeoffParams) -> TemplateScore:
    v = request_value(r, t, q, params.alpha)
    w = request_weight(r, t, q)
    if w == 0:
        return TemplateScore(0.0, 0.0, 0.0, 0.0)
    return TemplateScore(v, w, kvi(v, w, params.rho_thres), vpw(v, w))


# ---------------------------------------------------------------------------
# batched scoring
# ---------------------------------------------------------------------------


class BatchScores(NamedTuple):
    value: np.ndarray
    weight: np.ndarray
    kvi: np.ndarray
    vpw: np.ndarray


def slot_sources(templates: np.ndarray):
    """For each slot, the index into the ad list or rec list it draws from."""
    t = templates.astype(np.int64)
    ad_idx = np.cumsum(t, axis=-1) - 1
    rec_idx = np.cumsum(1 - t, axis=-1) - 1
    return ad_idx, rec_idx


def page_utilities(batch: RequestBatch, templates: np.ndarray, q: np.ndarray, alpha: float,
                   rows: Optional[np.ndarray] = None) -> np.ndarray:
    """Page utility of each template; ``rows[m]`` picks the request for row m."""
    templates = np.asarray(templates, dtype=bool)
    m, length = templates.shape
    if rows is None:
        rows = np.arange(m)
    ad_idx, rec_idx = slot_sources(templates)
    ad_idx = np.clip(ad_idx, 0, batch.ad_width - 1)
    rec_u = batch.rec["utility_rec"]
    ad_ua = batch.ad["utility_ad"]
    ad_ur = batch.ad["utility_rec"]
    acc = np.zeros(m)
    for l in range(length):
        is_ad = templates[:, l]
        ua = np.where(is_ad, ad_ua[rows, ad_idx[:, l]], 0.0)
        ur = np.where(is_ad, ad_ur[rows, ad_idx[:, l]], rec_u[rows, rec_idx[:, l]])
        acc = acc + q[l] * (ua + alpha * ur)
    return acc


def template_weights(templates: np.ndarray, q: np.ndarray) -> np.ndarray:
    templates = np.asarray(templates, dtype=bool)
    acc = np.zeros(templates.shape[0])
    for l in range(templates.shape[1]):
        acc = acc + np.where(templates[:, l], q[l], 0.0)
    return acc


def score_batch(batch: RequestBatch, templates: np.ndarray, q: np.ndarray, alpha: float, rho: float,
                rows: Optional[np.ndarray] = None) -> BatchScores:
    """Vectorised ``score_template``; bit-identical to the scalar path."""
    templates = np.asarray(templates, dtype=bool)
    if rows is None:
        rows = np.arange(templates.shape[0])
    empty = ~templates.any(axis=1)
    u = page_utilities(batch, templates, q, alpha, rows)
    u0 = page_utilities(batch, np.zeros_like(templates), q, alpha, rows)
    value = np.where(empty, 0.0, u - u0)
    weight = template_weights(templates, q)
    zero_w = weight == 0
    value = np.where(zero_w, 0.0, value)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(zero_w, 0.0, value - rho * weight)
        ratio = np.where(zero_w, 0.0, value / np.where(zero_w, 1.0, weight))
    return BatchScores(value, weight, k, ratio)
