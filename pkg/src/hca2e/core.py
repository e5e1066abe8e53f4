"""Domain types for blended feeds: candidates, requests, exposure templates.

Slot indices are 1-based throughout. A template is a length-L boolean
vector where ``True`` marks an ad slot; the all-organic template is the
"no-ad" strategy every request can fall back to.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np


class HCA2EError(Exception):
    """Base class for all package errors."""


class StructuralError(HCA2EError, ValueError):
    """Malformed input: wrong lengths, broken rank sequences, bad ranges."""


class ConstraintViolation(HCA2EError, ValueError):
    """A template breaks the top-ad-slot, min-ad-gap or ad-supply rule."""


class Kind(enum.Enum):
    ORGANIC = "organic"
    AD = "ad"


@dataclass(frozen=True)
class Candidate:
    """One pre-scored item coming out of the recommendation or ad system."""

    id: str
    kind: Kind
    upstream_rank: int
    utility_rec: float
    utility_ad: float = 0.0
    pctr: float = 0.0
    pcvr: float = 0.0
    item_price: float = 0.0
    price_per_click: float = 0.0

    def __post_init__(self):
        if self.upstream_rank < 1:
            raise StructuralError(f"{self.id}: upstream_rank must be >= 1")
        for name in ("utility_rec", "utility_ad", "item_price", "price_per_click"):
            if getattr(self, name) < 0:
                raise StructuralError(f"{self.id}: {name} must be non-negative")
        for name in ("pctr", "pcvr"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise StructuralError(f"{self.id}: {name} must lie in [0, 1]")
        if self.kind is Kind.ORGANIC and (self.utility_ad != 0 or self.price_per_click != 0):
            raise StructuralError(f"{self.id}: organic items carry no ad utility or price")


@dataclass(frozen=True)
class RequestConstraints:
    page_length: int
    top_ad_slot: int
    min_ad_gap: int

    def __post_init__(self):
        if self.page_length < 1 or self.top_ad_slot < 1 or self.min_ad_gap < 1:
            raise StructuralError("page_length, top_ad_slot and min_ad_gap must all be >= 1")


def _check_ranked(items: Sequence[Candidate], kind: Kind, label: str) -> None:
    for k, c in enumerate(items, start=1):
        if c.kind is not kind:
            raise StructuralError(f"{label}[{k}] has kind {c.kind.value}, expected {kind.value}")
        if c.upstream_rank != k:
            raise StructuralError(f"{label} ranks must be 1..K in order; got {c.upstream_rank} at {k}")


@dataclass(frozen=True)
class Request:
    request_id: object
    rec_list: Tuple[Candidate, ...]
    ad_list: Tuple[Candidate, ...]
    constraints: RequestConstraints

    def __post_init__(self):
        object.__setattr__(self, "rec_list", tuple(self.rec_list))
        object.__setattr__(self, "ad_list", tuple(self.ad_list))
        _check_ranked(self.rec_list, Kind.ORGANIC, "rec_list")
        _check_ranked(self.ad_list, Kind.AD, "ad_list")
        if len(self.rec_list) < self.constraints.page_length:
            raise StructuralError(
                f"request {self.request_id}: rec_list has {len(self.rec_list)} items, "
                f"page needs {self.constraints.page_length}"
            )

    @property
    def page_length(self) -> int:
        return self.constraints.page_length


@dataclass(frozen=True)
class ExposureTemplate:
    slots: Tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "slots", tuple(bool(s) for s in self.slots))

    @classmethod
    def no_ad(cls, length: int) -> "ExposureTemplate":
        return cls((False,) * length)

    @classmethod
    def from_string(cls, bits: str) -> "ExposureTemplate":
        """``"0101"`` -> ad slots at 2 and 4."""
        if set(bits) - {"0", "1"}:
            raise StructuralError(f"template string must be 0/1 only: {bits!r}")
        return cls(tuple(b == "1" for b in bits))

    @classmethod
    def from_ad_slots(cls, length: int, ad_slots: Sequence[int]) -> "ExposureTemplate":
        slots = [False] * length
        for s in ad_slots:
            if not 1 <= s <= length:
                raise StructuralError(f"ad slot {s} outside 1..{length}")
            slots[s - 1] = True
        return cls(tuple(slots))

    def __len__(self) -> int:
        return len(self.slots)

    def __str__(self) -> str:
        return "".join("1" if s else "0" for s in self.slots)

    @property
    def ad_slots(self) -> Tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.slots, start=1) if s)

    @property
    def num_ads(self) -> int:
        return sum(self.slots)

    @property
    def is_no_ad(self) -> bool:
        return not any(self.slots)


@dataclass(frozen=True)
class SlotExposureModel:
    """Per-slot exposure probabilities, non-increasing down the page."""

    q: Tuple[float, ...]

    def __post_init__(self):
        q = tuple(float(x) for x in self.q)
        if not q:
            raise StructuralError("exposure model needs at least one slot")
        if q[0] > 1.0 or q[-1] < 0.0:
            raise StructuralError("exposure probabilities must lie in [0, 1]")
        if any(b > a for a, b in zip(q, q[1:])):
            raise StructuralError("exposure probabilities must be non-increasing")
        object.__setattr__(self, "q", q)

    @classmethod
    def geometric(cls, length: int, kappa: float = 0.95) -> "SlotExposureModel":
        if not 0.0 <= kappa <= 1.0:
            raise StructuralError(f"kappa must lie in [0, 1], got {kappa}")
        return cls(tuple(kappa ** l for l in range(length)))

    def __len__(self) -> int:
        return len(self.q)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.q, dtype=float)

    @property
    def total(self) -> float:
        acc = 0.0
        for x in self.q:
            acc += x
        return acc


@dataclass(frozen=True)
class MergedPage:
    entries: Tuple[Tuple[int, Candidate], ...]
    template: ExposureTemplate

    @property
    def ads(self) -> Tuple[Candidate, ...]:
        return tuple(c for _, c in self.entries if c.kind is Kind.AD)

    @property
    def organics(self) -> Tuple[Candidate, ...]:
        return tuple(c for _, c in self.entries if c.kind is Kind.ORGANIC)


def validate_template(t: ExposureTemplate, c: RequestConstraints, ads_available: int) -> bool:
    """True iff ``t`` respects the top ad slot, the minimum ad gap and ad supply."""
    if len(t) != c.page_length:
        raise StructuralError(f"template length {len(t)} != page length {c.page_length}")
    ad_slots = t.ad_slots
    if not ad_slots:
        return True
    if ad_slots[0] < c.top_ad_slot:
        return False
    if any(j - i < c.min_ad_gap for i, j in zip(ad_slots, ad_slots[1:])):
        return False
    return len(ad_slots) <= ads_available


def merge_rpp(r: Request, t: ExposureTemplate) -> MergedPage:
    """Fill the template with ads and organics in their upstream order.

    The k-th ad slot receives ``ad_list[k]`` and the k-th organic slot
    receives ``rec_list[k]``; candidates are passed through untouched so
    auction prices survive the merge.
    """
    if not validate_template(t, r.constraints, len(r.ad_list)):
        raise ConstraintViolation(f"template {t} infeasible for request {r.request_id}")
    entries = []
    n_ad = n_rec = 0
    for slot, is_ad in enumerate(t.slots, start=1):
        if is_ad:
            entries.append((slot, r.ad_list[n_ad]))
            n_ad += 1
        else:
            entries.append((slot, r.rec_list[n_rec]))
            n_rec += 1
    return MergedPage(tuple(entries), t)


# ---------------------------------------------------------------------------
# Columnar storage for request streams
# ---------------------------------------------------------------------------

REC_FIELDS = ("utility_rec", "pctr", "pcvr", "item_price")
AD_FIELDS = ("utility_ad", "utility_rec", "pctr", "pcvr", "item_price", "price_per_click", "bid")


@dataclass(frozen=True)
class RequestBatch:
    """Many requests sharing one set of constraints, stored as padded arrays.

    ``rec[name]`` has shape (N, R); ``ad[name]`` has shape (N, A) and entries
    at column ``>= ad_count[n]`` are zero padding. Row order within each
    array is upstream rank order. ``bid`` is the auction input behind
    ``price_per_click`` and is kept for auditing only.
    """

    request_ids: np.ndarray
    constraints: RequestConstraints
    rec: dict
    ad: dict
    ad_count: np.ndarray

    def __post_init__(self):
        n = len(self.request_ids)
        for name in REC_FIELDS:
            arr = self.rec[name]
            if arr.ndim != 2 or arr.shape[0] != n:
                raise StructuralError(f"rec.{name} must have shape (N, R)")
            if arr.shape[1] < self.constraints.page_length:
                raise StructuralError("rec_list shorter than page length")
        width = self.ad["utility_ad"].shape[1]
        for name in AD_FIELDS:
            if self.ad[name].shape != (n, width):
                raise StructuralError(f"ad.{name} must have shape (N, A)")
        if self.ad_count.shape != (n,) or (self.ad_count > width).any() or (self.ad_count < 0).any():
            raise StructuralError("ad_count out of range")

    def __len__(self) -> int:
        return len(self.request_ids)

    @property
    def page_length(self) -> int:
        return self.constraints.page_length

    @property
    def ad_width(self) -> int:
        return self.ad["utility_ad"].shape[1]

    def slice(self, start: int, stop: int) -> "RequestBatch":
        return RequestBatch(
            request_ids=self.request_ids[start:stop],
            constraints=self.constraints,
            rec={k: v[start:stop] for k, v in self.rec.items()},
            ad={k: v[start:stop] for k, v in self.ad.items()},
            ad_count=self.ad_count[start:stop],
        )

    def chunks(self, size: int) -> Iterator[Tuple[int, "RequestBatch"]]:
        for start in range(0, len(self), size):
            yield start, self.slice(start, min(start + size, len(self)))

    def request(self, i: int) -> Request:
        rid = self.request_ids[i]
        recs = tuple(
            Candidate(
                id=f"{rid}:r{k + 1}",
                kind=Kind.ORGANIC,
                upstream_rank=k + 1,
                utility_rec=float(self.rec["utility_rec"][i, k]),
                pctr=float(self.rec["pctr"][i, k]),
                pcvr=float(self.rec["pcvr"][i, k]),
                item_price=float(self.rec["item_price"][i, k]),
            )
            for k in range(self.rec["utility_rec"].shape[1])
        )
        ads = tuple(
            Candidate(
                id=f"{rid}:a{k + 1}",
                kind=Kind.AD,
                upstream_rank=k + 1,
                utility_rec=float(self.ad["utility_rec"][i, k]),
                utility_ad=float(self.ad["utility_ad"][i, k]),
                pctr=float(self.ad["pctr"][i, k]),
                pcvr=float(self.ad["pcvr"][i, k]),
                item_price=float(self.ad["item_price"][i, k]),
                price_per_click=float(self.ad["price_per_click"][i, k]),
            )
            for k in range(int(self.ad_count[i]))
        )
        return Request(rid, recs, ads, self.constraints)

    def requests(self) -> Iterator[Request]:
        for i in range(len(self)):
            yield self.request(i)

    @classmethod
    def from_requests(cls, requests: Sequence[Request], bids: Optional[Sequence[Sequence[float]]] = None) -> "RequestBatch":
        if not requests:
            raise StructuralError("cannot build a batch from zero requests")
        c = requests[0].constraints
        if any(r.constraints != c for r in requests):
            raise StructuralError("all requests in a batch must share constraints")
        n = len(requests)
        n_rec = min(len(r.rec_list) for r in requests)
        width = max(1, max(len(r.ad_list) for r in requests))
        rec = {k: np.zeros((n, n_rec)) for k in REC_FIELDS}
        ad = {k: np.zeros((n, width)) for k in AD_FIELDS}
        count = np.zeros(n, dtype=np.int64)
        for i, r in enumerate(requests):
            for k, cand in enumerate(r.rec_list[:n_rec]):
                for name in REC_FIELDS:
                    rec[name][i, k] = getattr(cand, name)
            for k, cand in enumerate(r.ad_list):
                for name in AD_FIELDS[:-1]:
                    ad[name][i, k] = getattr(cand, name)
                if bids is not None:
                    ad["bid"][i, k] = bids[i][k]
            count[i] = len(r.ad_list)
        ids = np.empty(n, dtype=object)
        ids[:] = [r.request_id for r in requests]
        return cls(ids, c, rec, ad, count)


def templates_to_array(templates: Sequence[ExposureTemplate]) -> np.ndarray:
    return np.array([t.slots for t in templates], dtype=bool)


def validate_templates(templates: np.ndarray, c: RequestConstraints, ads_available: np.ndarray) -> np.ndarray:
    """Vectorised ``validate_template`` over an (N, L) boolean array."""
    templates = np.asarray(templates, dtype=bool)
    if templates.ndim != 2 or templates.shape[1] != c.page_length:
        raise StructuralError(f"templates must have shape (N, {c.page_length})")
    n, length = templates.shape
    ok = templates.sum(axis=1) <= np.asarray(ads_available)
    ok &= ~templates[:, : max(0, min(c.top_ad_slot - 1, length))].any(axis=1)
    last = np.full(n, -(10**9))
    for l in range(1, length + 1):
        col = templates[:, l - 1]
        ok &= ~(col & (l - last < c.min_ad_gap))
        last = np.where(col, l, last)
    return ok
