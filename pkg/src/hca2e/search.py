"""Exposure template search: layered beam search with constraint pruning.

Layer ``l`` extends every surviving sub-template by an organic slot and an
ad slot. Children breaking the top-ad-slot, min-ad-gap or ad-supply rules
are dropped, the rest are ranked by the knapsack value increment of the
prefix (first ``l`` slots filled in upstream order) and the best ``B``
survive. The final pick re-scores the full templates exactly and always
considers the no-ad template too.

Ranking order everywhere: higher increment, then fewer ads, then the
lexicographically smaller slot sequence (organic before ad).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from .core import (
    ExposureTemplate,
    HCA2EError,
    Request,
    RequestBatch,
    SlotExposureModel,
    StructuralError,
    validate_template,
)
from .evaluator import TemplateScore, TradeoffParams, score_batch, score_template

NO_LAST_AD = -(10**9)


@dataclass(frozen=True)
class SearchConfig:
    beam_size: int = 5
    oracle_cap: int = 16

    def __post_init__(self):
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")


@dataclass
class SearchStats:
    """Counters updated in place by the search; handy for complexity checks."""

    node_evaluations: int = 0
    requests: int = 0
    per_request_max: int = 0


@dataclass(frozen=True)
class BeamNode:
    sub_template: Tuple[bool, ...]
    kvi_so_far: float
    last_ad_index: Optional[int]
    ads_used: int


class BatchSearchResult(NamedTuple):
    templates: np.ndarray  # (N, L) bool, best template before thresholding
    value: np.ndarray
    weight: np.ndarray
    kvi: np.ndarray
    vpw: np.ndarray


def _rank(neg_kvi: np.ndarray, ads: np.ndarray, lex: np.ndarray) -> np.ndarray:
    return np.lexsort((lex, ads, neg_kvi), axis=-1)


def search_batch(
    batch: RequestBatch,
    q: np.ndarray,
    alpha: float,
    rho: float,
    beam_size: int,
    stats: Optional[SearchStats] = None,
    trace: Optional[list] = None,
) -> BatchSearchResult:
    """Beam search for every request in ``batch`` under one threshold.

    If ``trace`` is a list, one entry per layer is appended holding the
    surviving nodes of each request as :class:`BeamNode` lists.
    """
    c = batch.constraints
    length = c.page_length
    q = np.asarray(q, dtype=float)
    if len(q) != length:
        raise StructuralError(f"exposure model has {len(q)} slots, page has {length}")
    n, B = len(batch), beam_size
    rows = np.arange(n)[:, None]
    rec_u = batch.rec["utility_rec"]
    ad_ua = batch.ad["utility_ad"]
    ad_ur = batch.ad["utility_rec"]
    ad_cap = batch.ad_count[:, None]
    width = batch.ad_width

    bits = np.zeros((n, B, length), dtype=bool)
    score = np.full((n, B), -np.inf)
    score[:, 0] = 0.0
    ads = np.zeros((n, B), dtype=np.int64)
    last = np.full((n, B), NO_LAST_AD, dtype=np.int64)
    lex = np.zeros((n, B), dtype=np.int64)
    alive = np.zeros((n, B), dtype=bool)
    alive[:, 0] = True
    evals = np.zeros(n, dtype=np.int64)

    for l in range(1, length + 1):
        ql = q[l - 1]
        here = (ql * (alpha * rec_u[:, l - 1]))[:, None]
        rec_idx = (l - 1) - ads
        d_rec = ql * (alpha * rec_u[rows, rec_idx]) - here
        aidx = np.minimum(ads, width - 1)
        penalty = rho * ql if ql > 0 else 0.0
        d_ad = ql * (ad_ua[rows, aidx] + alpha * ad_ur[rows, aidx]) - here - penalty

        ad_ok = alive & (l >= c.top_ad_slot) & (l - last >= c.min_ad_gap) & (ads < ad_cap)
        evals += 2 * alive.sum(axis=1)

        child_score = np.concatenate([np.where(alive, score + d_rec, -np.inf),
                                      np.where(ad_ok, score + d_ad, -np.inf)], axis=1)
        child_alive = np.concatenate([alive, ad_ok], axis=1)
        child_ads = np.concatenate([ads, ads + 1], axis=1)
        child_lex = np.concatenate([2 * lex, 2 * lex + 1], axis=1)

        order = _rank(-child_score, child_ads, child_lex)[:, :B]
        parent = order % B
        is_ad_child = order >= B

        bits = bits[rows, parent]
        bits[:, :, l - 1] = is_ad_child
        score = np.take_along_axis(child_score, order, axis=1)
        alive = np.take_along_axis(child_alive, order, axis=1)
        ads = np.take_along_axis(child_ads, order, axis=1)
        last = np.where(is_ad_child, l, last[rows, parent])
        sel_lex = np.where(alive, np.take_along_axis(child_lex, order, axis=1), np.iinfo(np.int64).max)
        lex = np.argsort(np.argsort(sel_lex, axis=1, kind="stable"), axis=1, kind="stable")

        if trace is not None:
            trace.append([
                [BeamNode(tuple(bits[i, j, :l]), float(score[i, j]),
                          int(last[i, j]) if last[i, j] != NO_LAST_AD else None, int(ads[i, j]))
                 for j in range(B) if alive[i, j]]
                for i in range(n)
            ])

    # exact re-scoring of the final layer, plus the no-ad template
    flat = bits.reshape(n * B, length)
    flat_rows = np.repeat(np.arange(n), B)
    full = score_batch(batch, flat, q, alpha, rho, rows=flat_rows)
    fk = np.where(alive.ravel(), full.kvi, -np.inf).reshape(n, B)
    cand_kvi = np.concatenate([np.zeros((n, 1)), fk], axis=1)
    cand_ads = np.concatenate([np.zeros((n, 1), dtype=np.int64), ads], axis=1)
    cand_lex = np.concatenate([np.full((n, 1), -1, dtype=np.int64), lex], axis=1)
    best = _rank(-cand_kvi, cand_ads, cand_lex)[:, 0]

    pick = np.maximum(best - 1, 0)
    templates = np.where((best > 0)[:, None], bits[np.arange(n), pick], False)
    fv = full.value.reshape(n, B)[np.arange(n), pick]
    fw = full.weight.reshape(n, B)[np.arange(n), pick]
    fr = full.vpw.reshape(n, B)[np.arange(n), pick]
    chosen_kvi = fk[np.arange(n), pick]
    none = best == 0
    result = BatchSearchResult(
        templates=templates,
        value=np.where(none, 0.0, fv),
        weight=np.where(none, 0.0, fw),
        kvi=np.where(none, 0.0, chosen_kvi),
        vpw=np.where(none, 0.0, fr),
    )
    if stats is not None:
        stats.node_evaluations += int(evals.sum())
        stats.requests += n
        if n:
            stats.per_request_max = max(stats.per_request_max, int(evals.max()))
    return result


def finalize_batch(result: BatchSearchResult, rho: float) -> np.ndarray:
    """Keep each best template only where its value per weight beats ``rho``."""
    keep = result.vpw > rho
    return result.templates & keep[:, None]


def ets_search(
    r: Request,
    q: SlotExposureModel,
    params: TradeoffParams,
    cfg: SearchConfig = SearchConfig(),
    stats: Optional[SearchStats] = None,
    trace: Optional[list] = None,
) -> Tuple[ExposureTemplate, TemplateScore]:
    """Best template for one request together with its exact score."""
    batch = RequestBatch.from_requests([r])
    layer_trace = [] if trace is not None else None
    res = search_batch(batch, q.as_array(), params.alpha, params.rho_thres, cfg.beam_size, stats, layer_trace)
    if trace is not None:
        trace.extend(layer[0] for layer in layer_trace)
    t = ExposureTemplate(tuple(res.templates[0]))
    if t.is_no_ad:
        return t, TemplateScore.zero()
    return t, score_template(r, t, q, params)


def finalize_template(best: ExposureTemplate, score: TemplateScore, rho_thres: float) -> ExposureTemplate:
    if score.vpw > rho_thres:
        return best
    return ExposureTemplate.no_ad(len(best))


class OracleRefused(HCA2EError):
    pass


def exhaustive_oracle(
    r: Request,
    q: SlotExposureModel,
    params: TradeoffParams,
    cap: int = 16,
) -> Tuple[ExposureTemplate, TemplateScore]:
    """Enumerate all 2^L templates and return the best feasible one."""
    length = r.page_length
    if length > cap:
        raise OracleRefused(f"page length {length} exceeds oracle cap {cap}")
    best_key, best = None, None
    for bits in itertools.product((False, True), repeat=length):
        t = ExposureTemplate(bits)
        if not validate_template(t, r.constraints, len(r.ad_list)):
            continue
        s = score_template(r, t, q, params)
        key = (-s.kvi, t.num_ads, bits)
        if best_key is None or key < best_key:
            best_key, best = key, (t, s)
    return best


def feasible_templates(r: Request) -> List[ExposureTemplate]:
    out = []
    for bits in itertools.product((False, True), repeat=r.page_length):
        t = ExposureTemplate(bits)
        if validate_template(t, r.constraints, len(r.ad_list)):
            out.append(t)
    return out
