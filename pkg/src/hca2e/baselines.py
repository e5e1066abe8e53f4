"""Request-level comparison strategies: fixed positions and score blending.

The blend strategies walk the page top to bottom and, at every slot,
compare the next organic (score ``alpha * utility_rec``) with the next ad
(score ``beta * (utility_ad + alpha * utility_rec)``). The ad wins the slot
when its score is strictly higher and the slot is legal for an ad;
otherwise an organic is placed and the ad waits. Both lists are consumed
in upstream order, so within-type ranking is preserved.

The gap-aware variant multiplies the ad score by
``gap_decay ** max(0, 2 * min_gap - d)`` with ``d`` the distance to the
previous ad, penalising packing beyond the hard gap floor.

These are reconstructions of joint-ranking blenders, not reproductions of
any published scoring.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .core import (
    ExposureTemplate,
    HCA2EError,
    Request,
    RequestBatch,
    RequestConstraints,
    validate_template,
)


class BaselineConfigError(HCA2EError, ValueError):
    pass


class CalibrationError(HCA2EError):
    def __init__(self, message: str, achievable_max: float):
        super().__init__(message)
        self.achievable_max = achievable_max


class BaselineKind(enum.Enum):
    FIXED = "fixed"
    WPO = "wpo"
    GEA = "gea"


@dataclass(frozen=True)
class BaselineConfig:
    kind: BaselineKind
    fixed_positions: Optional[Tuple[int, ...]] = None
    beta: float = 1.0
    gea_gap_decay: float = 0.8

    def __post_init__(self):
        if self.beta < 0:
            raise BaselineConfigError("beta must be non-negative")
        if not 0.0 < self.gea_gap_decay <= 1.0:
            raise BaselineConfigError("gap decay must lie in (0, 1]")


def fixed_template(c: RequestConstraints, cfg: BaselineConfig) -> ExposureTemplate:
    positions = tuple(sorted(cfg.fixed_positions or ()))
    try:
        t = ExposureTemplate.from_ad_slots(c.page_length, positions)
    except ValueError as exc:
        raise BaselineConfigError(str(exc)) from exc
    if len(set(positions)) != len(positions) or not validate_template(t, c, len(positions)):
        raise BaselineConfigError(f"fixed positions {positions} violate the page constraints")
    return t


def fixed_batch(batch: RequestBatch, template: ExposureTemplate) -> np.ndarray:
    """Apply one fixed template to every request.

    Requests with fewer ads than the template asks for keep only their
    first ``ad_count`` ad slots; dropping trailing ads keeps the result
    feasible without moving any ad.
    """
    t = np.asarray(template.slots, dtype=bool)
    out = np.broadcast_to(t, (len(batch), len(t))).copy()
    rank = np.cumsum(out, axis=1)
    out &= rank <= batch.ad_count[:, None]
    return out


def blend_batch(batch: RequestBatch, beta: float, alpha: float, gap_decay: float = 1.0) -> np.ndarray:
    """Merge-style joint ranking for every request; returns (N, L) templates."""
    c = batch.constraints
    n, length = len(batch), c.page_length
    rows = np.arange(n)
    rec_u = batch.rec["utility_rec"]
    ad_score_base = batch.ad["utility_ad"] + alpha * batch.ad["utility_rec"]
    width = batch.ad_width
    out = np.zeros((n, length), dtype=bool)
    used = np.zeros(n, dtype=np.int64)
    last = np.full(n, -(10**9), dtype=np.int64)
    for l in range(1, length + 1):
        allowed = (l >= c.top_ad_slot) & (l - last >= c.min_ad_gap) & (used < batch.ad_count)
        if math.isinf(beta):
            place = allowed
        else:
            head = ad_score_base[rows, np.minimum(used, width - 1)]
            ad_score = beta * head
            if gap_decay < 1.0:
                d = l - last
                ad_score = ad_score * gap_decay ** np.maximum(0, 2 * c.min_ad_gap - d)
            org_score = alpha * rec_u[rows, (l - 1) - used]
            place = allowed & (ad_score > org_score)
        out[:, l - 1] = place
        used += place
        last = np.where(place, l, last)
    return out


def wpo_blend(r: Request, beta: float, c: Optional[RequestConstraints] = None, alpha: float = 0.5) -> ExposureTemplate:
    return gea_blend(r, beta, c, alpha, 1.0)


def gea_blend(r: Request, beta: float, c: Optional[RequestConstraints] = None, alpha: float = 0.5,
              gap_decay: float = 0.8) -> ExposureTemplate:
    if c is not None and c != r.constraints:
        r = Request(r.request_id, r.rec_list, r.ad_list, c)
    batch = RequestBatch.from_requests([r])
    return ExposureTemplate(tuple(blend_batch(batch, beta, alpha, gap_decay)[0]))


def expected_m(templates: np.ndarray, q: np.ndarray) -> float:
    q = np.asarray(q, dtype=float)
    if len(templates) == 0:
        return 0.0
    return float((templates * q).sum() / (len(templates) * q.sum()))


def calibrate_beta(batch: RequestBatch, q: np.ndarray, alpha: float, m_star: float, gap_decay: float = 1.0,
                   tol: float = 1e-3, max_iter: int = 40) -> float:
    """Bisection on beta (log scale) until the expected rate is within ``tol`` of ``m_star``.

    Raises :class:`CalibrationError` carrying the densest achievable rate
    when the target is out of reach.
    """
    if m_star <= 0:
        return 0.0
    rate = lambda b: expected_m(blend_batch(batch, b, alpha, gap_decay), q)  # noqa: E731
    m_max = rate(math.inf)
    if m_star > m_max + tol:
        raise CalibrationError(f"target {m_star:.4f} above achievable {m_max:.4f}", m_max)
    lo, hi = 1.0, 1.0
    m_hi = rate(hi)
    steps = 0
    while m_hi < m_star and steps < 60:
        lo, hi = hi, hi * 4.0
        m_hi = rate(hi)
        steps += 1
    while rate(lo) > m_star and steps < 120:
        lo /= 4.0
        steps += 1
    best, best_err = hi, abs(m_hi - m_star)
    for _ in range(max_iter):
        if best_err <= tol:
            break
        mid = math.sqrt(lo * hi)
        m = rate(mid)
        if abs(m - m_star) < best_err:
            best, best_err = mid, abs(m - m_star)
        if m < m_star:
            lo = mid
        else:
            hi = mid
    return best


def even_positions(c: RequestConstraints, gap: float) -> Tuple[int, ...]:
    """Ad slots starting at the top ad slot with (rounded) spacing ``gap``."""
    gap = max(gap, float(c.min_ad_gap))
    out = []
    x = float(c.top_ad_slot)
    while round(x) <= c.page_length:
        p = int(round(x))
        if not out or p - out[-1] >= c.min_ad_gap:
            out.append(p)
        x += gap
    return tuple(out)


def calibrate_fixed_positions(batch: RequestBatch, q: np.ndarray, m_star: float,
                              gaps: Optional[Sequence[float]] = None) -> Tuple[int, ...]:
    """Evenly spaced positions whose expected rate is closest to ``m_star``."""
    c = batch.constraints
    if gaps is None:
        gaps = np.arange(c.min_ad_gap, c.page_length + 1, 0.05)
    best, best_err = (), abs(m_star)
    seen = set()
    for g in gaps:
        pos = even_positions(c, float(g))
        if pos in seen:
            continue
        seen.add(pos)
        t = ExposureTemplate.from_ad_slots(c.page_length, pos)
        err = abs(expected_m(fixed_batch(batch, t), q) - m_star)
        if err < best_err:
            best, best_err = pos, err
    return best
