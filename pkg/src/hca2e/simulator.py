"""Synthetic request streams, stochastic users, run loop and sweep harness.

User behaviour: a scroll depth ``D`` is drawn with ``P(D >= l) = q_l``;
every slot above the depth is exposed, an exposed item is clicked with its
pctr and a click converts with its pcvr. Ad clicks pay the auction price,
conversions add the item price to GMV (ads and organics alike).

Batched runs use common random numbers: every candidate of a request gets
its own click and conversion uniforms, drawn from a stream keyed by the
user seed and the request's chunk. Two strategies showing the same item
therefore see the same outcome for it, which keeps strategy comparisons
from drowning in sampling noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .baselines import (
    blend_batch,
    calibrate_beta,
    calibrate_fixed_positions,
    fixed_batch,
)
from .controller import ControllerState, WindowReport, calibrate_threshold, maybe_update, observe_exposures
from .core import (
    ExposureTemplate,
    HCA2EError,
    Kind,
    MergedPage,
    RequestBatch,
    RequestConstraints,
    SlotExposureModel,
    StructuralError,
)
from .evaluator import slot_sources
from .search import finalize_batch, search_batch


class GeneratorConfigError(HCA2EError, ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int = 0
    num_requests: int = 100_000
    page_length: int = 50
    top_ad_slot: int = 5
    min_ad_gap: int = 4
    num_ads_min: int = 0
    num_ads_max: int = 12
    # log-normal families: log-mean / log-std
    bid_mu: float = 0.0
    bid_sigma: float = 0.5
    price_mu: float = 3.0
    price_sigma: float = 0.8
    # beta families for rates
    rec_pctr_a: float = 2.0
    rec_pctr_b: float = 38.0
    ad_pctr_a: float = 2.0
    ad_pctr_b: float = 48.0
    pcvr_a: float = 2.0
    pcvr_b: float = 48.0
    # per-request multipliers on pctr (log-std, mean one)
    rec_affinity_sigma: float = 0.6
    ad_affinity_sigma: float = 0.8
    reserve_price: float = 0.05
    kappa: float = 0.95

    def __post_init__(self):
        checks = [
            ("num_requests", self.num_requests >= 0, "must be >= 0"),
            ("page_length", self.page_length >= 1, "must be >= 1"),
            ("top_ad_slot", self.top_ad_slot >= 1, "must be >= 1"),
            ("min_ad_gap", self.min_ad_gap >= 1, "must be >= 1"),
            ("num_ads_min", 0 <= self.num_ads_min <= self.num_ads_max, "need 0 <= num_ads_min <= num_ads_max"),
            ("bid_sigma", self.bid_sigma >= 0, "must be >= 0"),
            ("price_sigma", self.price_sigma >= 0, "must be >= 0"),
            ("rec_affinity_sigma", self.rec_affinity_sigma >= 0, "must be >= 0"),
            ("ad_affinity_sigma", self.ad_affinity_sigma >= 0, "must be >= 0"),
            ("reserve_price", self.reserve_price >= 0, "must be >= 0"),
            ("kappa", 0 <= self.kappa <= 1, "must lie in [0, 1]"),
        ]
        for name in ("rec_pctr_a", "rec_pctr_b", "ad_pctr_a", "ad_pctr_b", "pcvr_a", "pcvr_b"):
            checks.append((name, getattr(self, name) > 0, "beta shape parameters must be positive"))
        for key, ok, msg in checks:
            if not ok:
                raise GeneratorConfigError(key, msg)

    @property
    def constraints(self) -> RequestConstraints:
        return RequestConstraints(self.page_length, self.top_ad_slot, self.min_ad_gap)

    def exposure_model(self) -> SlotExposureModel:
        return SlotExposureModel.geometric(self.page_length, self.kappa)


def gsp_prices(bids, pctrs, reserve: float = 0.0):
    """Rank ads by eCPM and price each click at the runner-up's critical bid.

    Returns ``(order, prices)`` where ``order`` lists input indices by
    descending ``bid * pctr`` (stable on ties) and ``prices[k]`` is the
    per-click price of the k-th ranked ad, capped at its own bid. The last
    ad pays the reserve.
    """
    bids = np.asarray(bids, dtype=float)
    pctrs = np.asarray(pctrs, dtype=float)
    order = np.argsort(-(bids * pctrs), kind="stable")
    b, p = bids[order], pctrs[order]
    prices = np.full(len(b), float(reserve))
    if len(b) > 1:
        runner = b[1:] * p[1:] / p[:-1]
        prices[:-1] = np.maximum(reserve, runner)
    return order, np.minimum(prices, b)


def _beta_clipped(rng, a, b, scale, shape):
    return np.clip(rng.beta(a, b, size=shape) * scale, 0.0, 1.0)


def generate_stream(cfg: GeneratorConfig) -> RequestBatch:
    """Draw a synthetic request stream; identical config gives identical data."""
    rng = np.random.default_rng(cfg.seed)
    n, length = cfg.num_requests, cfg.page_length
    width = max(1, cfg.num_ads_max)

    rec_aff = rng.lognormal(-0.5 * cfg.rec_affinity_sigma**2, cfg.rec_affinity_sigma, size=(n, 1))
    rec_pctr = _beta_clipped(rng, cfg.rec_pctr_a, cfg.rec_pctr_b, rec_aff, (n, length))
    rec_pcvr = rng.beta(cfg.pcvr_a, cfg.pcvr_b, size=(n, length))
    rec_price = rng.lognormal(cfg.price_mu, cfg.price_sigma, size=(n, length))
    rec_util = rec_pctr * rec_pcvr * rec_price
    order = np.argsort(-rec_util, axis=1, kind="stable")
    rec = {
        "utility_rec": np.take_along_axis(rec_util, order, axis=1),
        "pctr": np.take_along_axis(rec_pctr, order, axis=1),
        "pcvr": np.take_along_axis(rec_pcvr, order, axis=1),
        "item_price": np.take_along_axis(rec_price, order, axis=1),
    }

    count = rng.integers(cfg.num_ads_min, cfg.num_ads_max + 1, size=n)
    ad_aff = rng.lognormal(-0.5 * cfg.ad_affinity_sigma**2, cfg.ad_affinity_sigma, size=(n, 1))
    ad_pctr = _beta_clipped(rng, cfg.ad_pctr_a, cfg.ad_pctr_b, ad_aff, (n, width))
    ad_pcvr = rng.beta(cfg.pcvr_a, cfg.pcvr_b, size=(n, width))
    ad_price = rng.lognormal(cfg.price_mu, cfg.price_sigma, size=(n, width))
    bids = cfg.reserve_price + rng.lognormal(cfg.bid_mu, cfg.bid_sigma, size=(n, width))

    valid = np.arange(width)[None, :] < count[:, None]
    ecpm = np.where(valid, bids * ad_pctr, -np.inf)
    order = np.argsort(-ecpm, axis=1, kind="stable")
    take = lambda a: np.take_along_axis(a, order, axis=1)  # noqa: E731
    bids, ad_pctr, ad_pcvr, ad_price = take(bids), take(ad_pctr), take(ad_pcvr), take(ad_price)
    # generalized second price: next ad's eCPM over own pctr, reserve for the last
    runner = np.full((n, width), cfg.reserve_price)
    with np.errstate(divide="ignore", invalid="ignore"):
        runner[:, :-1] = np.maximum(cfg.reserve_price, bids[:, 1:] * ad_pctr[:, 1:] / ad_pctr[:, :-1])
    is_last = np.arange(width)[None, :] == (count - 1)[:, None]
    runner = np.where(is_last, cfg.reserve_price, runner)
    ppc = np.minimum(runner, bids)

    mask = lambda a: np.where(valid, a, 0.0)  # noqa: E731
    ad = {
        "utility_ad": mask(ad_pctr * ppc),
        "utility_rec": mask(ad_pctr * ad_pcvr * ad_price),
        "pctr": mask(ad_pctr),
        "pcvr": mask(ad_pcvr),
        "item_price": mask(ad_price),
        "price_per_click": mask(ppc),
        "bid": mask(bids),
    }
    ids = np.arange(n, dtype=np.int64).astype(object)
    return RequestBatch(ids, cfg.constraints, rec, ad, count.astype(np.int64))


# ---------------------------------------------------------------------------
# users
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UserEvent:
    request_id: object
    scroll_depth: int
    clicks: Tuple[int, ...]
    conversions: Tuple[int, ...]
    revenue: float
    gmv: float
    ad_slots: Tuple[int, ...] = ()

    def __post_init__(self):
        if not set(self.conversions) <= set(self.clicks):
            raise StructuralError("conversions must be a subset of clicks")
        if any(not 1 <= s <= self.scroll_depth for s in self.clicks):
            raise StructuralError("clicks must lie on exposed slots")

    def to_record(self) -> dict:
        return {
            "request_id": self.request_id,
            "scroll_depth": self.scroll_depth,
            "clicks": list(self.clicks),
            "conversions": list(self.conversions),
            "revenue": self.revenue,
            "gmv": self.gmv,
            "ad_slots": list(self.ad_slots),
        }


def depth_from_uniform(u, q: np.ndarray):
    """Scroll depth with P(D >= l) = q_l for a non-increasing q."""
    return (np.asarray(q)[None, :] > np.asarray(u).reshape(-1, 1)).sum(axis=1)


def simulate_user(page: MergedPage, q: SlotExposureModel, rng: np.random.Generator, request_id=None) -> UserEvent:
    length = len(page.template)
    u = rng.random(1 + 2 * length)
    depth = int(depth_from_uniform(u[:1], q.as_array())[0])
    clicks, convs = [], []
    revenue = gmv = 0.0
    for slot, cand in page.entries:
        if slot > depth:
            break
        if u[slot] < cand.pctr:
            clicks.append(slot)
            if cand.kind is Kind.AD:
                revenue += cand.price_per_click
            if u[length + slot] < cand.pcvr:
                convs.append(slot)
                gmv += cand.item_price
    return UserEvent(request_id, depth, tuple(clicks), tuple(convs), revenue, gmv, page.template.ad_slots)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricAccumulator:
    page_length: int
    requests: int = 0
    rev: float = 0.0
    gmv: float = 0.0
    clk: int = 0
    ad_clk: int = 0
    exposures: int = 0
    ad_exposures: int = 0
    expected_ad: float = 0.0
    expected_total: float = 0.0
    expected_rev: float = 0.0
    expected_gmv: float = 0.0
    ad_slot_counts: np.ndarray = None

    def __post_init__(self):
        if self.ad_slot_counts is None:
            self.ad_slot_counts = np.zeros(self.page_length, dtype=np.int64)


@dataclass(frozen=True)
class AdPositionReport:
    bucket_starts: Tuple[int, ...]
    shares: Tuple[float, ...]
    avg_position: float
    total_ad_exposures: int

    @property
    def empty(self) -> bool:
        return self.total_ad_exposures == 0


def bucket_slot_counts(slot_counts: np.ndarray, top_ad_slot: int, width: int) -> AdPositionReport:
    slot_counts = np.asarray(slot_counts)
    total = int(slot_counts.sum())
    if total == 0:
        return AdPositionReport((), (), 0.0, 0)
    length = len(slot_counts)
    starts = tuple(range(top_ad_slot, length + 1, width))
    counts = [int(slot_counts[s - 1 : min(s - 1 + width, length)].sum()) for s in starts]
    slots = np.arange(1, length + 1)
    avg = float((slots * slot_counts).sum() / total)
    return AdPositionReport(starts, tuple(c / total for c in counts), avg, total)


def ad_position_report(events: Iterable[UserEvent], constraints: RequestConstraints) -> AdPositionReport:
    """Share of exposed ads per bucket of ``min_ad_gap`` slots, and mean position."""
    counts = np.zeros(constraints.page_length, dtype=np.int64)
    for ev in events:
        for s in ev.ad_slots:
            if s <= ev.scroll_depth:
                counts[s - 1] += 1
    return bucket_slot_counts(counts, constraints.top_ad_slot, constraints.min_ad_gap)


@dataclass(frozen=True)
class RunMetrics:
    requests: int
    rev: float
    gmv: float
    clk: int
    ctr: float
    ad_ctr: float
    exposures: int
    realized_m: float
    expected_m: float
    expected_rev: float
    expected_gmv: float
    avg_ad_position: float
    ad_position_histogram: Dict[int, float]

    @classmethod
    def from_accumulator(cls, acc: MetricAccumulator, c: RequestConstraints) -> "RunMetrics":
        rep = bucket_slot_counts(acc.ad_slot_counts, c.top_ad_slot, c.min_ad_gap)
        return cls(
            requests=acc.requests,
            rev=acc.rev,
            gmv=acc.gmv,
            clk=acc.clk,
            ctr=acc.clk / acc.exposures if acc.exposures else 0.0,
            ad_ctr=acc.ad_clk / acc.ad_exposures if acc.ad_exposures else 0.0,
            exposures=acc.exposures,
            realized_m=acc.ad_exposures / acc.exposures if acc.exposures else 0.0,
            expected_m=acc.expected_ad / acc.expected_total if acc.expected_total else 0.0,
            expected_rev=acc.expected_rev,
            expected_gmv=acc.expected_gmv,
            avg_ad_position=rep.avg_position,
            ad_position_histogram=dict(zip(rep.bucket_starts, rep.shares)),
        )


def advantage(metric: float, baseline_metric: float) -> float:
    """Relative advantage over a reference, in percent."""
    if not baseline_metric > 0:
        raise ValueError(f"reference metric must be positive, got {baseline_metric}")
    return (metric - baseline_metric) / baseline_metric * 100.0


# ---------------------------------------------------------------------------
# strategies and the run loop
# ---------------------------------------------------------------------------


@dataclass
class Strategy:
    """A calibrated exposure strategy.

    ``name`` is one of ``hca2e``, ``fixed``, ``wpo`` or ``gea``. Only
    ``hca2e`` consumes the controller threshold.
    """

    name: str
    alpha: float = 0.5
    beam_size: int = 5
    beta: float = 1.0
    gap_decay: float = 0.8
    fixed_positions: Tuple[int, ...] = ()
    rho_init: float = 0.0

    @property
    def label(self) -> str:
        return f"hca2e(B={self.beam_size})" if self.name == "hca2e" else self.name

    def plan(self, chunk: RequestBatch, q: np.ndarray, rho: Optional[float]) -> np.ndarray:
        if self.name == "hca2e":
            res = search_batch(chunk, q, self.alpha, rho, self.beam_size)
            return finalize_batch(res, rho)
        if self.name == "fixed":
            t = ExposureTemplate.from_ad_slots(chunk.page_length, self.fixed_positions)
            return fixed_batch(chunk, t)
        if self.name == "wpo":
            return blend_batch(chunk, self.beta, self.alpha, 1.0)
        if self.name == "gea":
            return blend_batch(chunk, self.beta, self.alpha, self.gap_decay)
        raise ValueError(f"unknown strategy {self.name!r}")


def calibrate_strategy(name: str, calib: RequestBatch, q: np.ndarray, alpha: float, m_star: float, *,
                       beam_size: int = 5, gap_decay: float = 0.8,
                       fixed_positions: Optional[Sequence[int]] = None) -> Strategy:
    """Fit the single free knob of a strategy so its expected rate hits ``m_star``."""
    if name == "hca2e":
        rho = calibrate_threshold(calib, q, alpha, m_star, beam_size)
        return Strategy("hca2e", alpha=alpha, beam_size=beam_size, rho_init=rho)
    if name == "fixed":
        pos = tuple(fixed_positions) if fixed_positions else calibrate_fixed_positions(calib, q, m_star)
        return Strategy("fixed", alpha=alpha, fixed_positions=pos)
    if name in ("wpo", "gea"):
        decay = 1.0 if name == "wpo" else gap_decay
        beta = calibrate_beta(calib, q, alpha, m_star, decay)
        return Strategy(name, alpha=alpha, beta=beta, gap_decay=decay)
    raise ValueError(f"unknown strategy {name!r}")


@dataclass
class RunResult:
    metrics: RunMetrics
    windows: List[WindowReport] = field(default_factory=list)
    templates: Optional[np.ndarray] = None
    events: Optional[List[UserEvent]] = None
    final_rho: Optional[float] = None


def _simulate_chunk(chunk: RequestBatch, templates: np.ndarray, q: np.ndarray, seed: int, start: int,
                    acc: MetricAccumulator, events: Optional[list]) -> None:
    n, length = templates.shape
    rng = np.random.default_rng([seed, start])
    u_depth = rng.random(n)
    u_click_rec = rng.random(chunk.rec["pctr"].shape)
    u_conv_rec = rng.random(chunk.rec["pctr"].shape)
    u_click_ad = rng.random((n, chunk.ad_width))
    u_conv_ad = rng.random((n, chunk.ad_width))

    depth = depth_from_uniform(u_depth, q)
    exposed = np.arange(1, length + 1)[None, :] <= depth[:, None]
    ad_idx, rec_idx = slot_sources(templates)
    ad_idx = np.clip(ad_idx, 0, chunk.ad_width - 1)
    rows = np.arange(n)[:, None]

    def pick(ad_arr, rec_arr):
        return np.where(templates, ad_arr[rows, ad_idx], rec_arr[rows, rec_idx])

    pctr = pick(chunk.ad["pctr"], chunk.rec["pctr"])
    pcvr = pick(chunk.ad["pcvr"], chunk.rec["pcvr"])
    price = pick(chunk.ad["item_price"], chunk.rec["item_price"])
    ppc = np.where(templates, chunk.ad["price_per_click"][rows, ad_idx], 0.0)
    uc = pick(u_click_ad, u_click_rec)
    uv = pick(u_conv_ad, u_conv_rec)

    click = exposed & (uc < pctr)
    conv = click & (uv < pcvr)
    ad_exposed = exposed & templates

    rev_req = np.where(click, ppc, 0.0).sum(axis=1)
    gmv_req = np.where(conv, price, 0.0).sum(axis=1)

    acc.requests += n
    acc.rev += float(rev_req.sum())
    acc.gmv += float(gmv_req.sum())
    acc.clk += int(click.sum())
    acc.ad_clk += int((click & templates).sum())
    acc.exposures += int(depth.sum())
    acc.ad_exposures += int(ad_exposed.sum())
    acc.ad_slot_counts += ad_exposed.sum(axis=0)
    acc.expected_ad += float((templates * q).sum())
    acc.expected_total += float(n * q.sum())
    acc.expected_rev += float((q * pctr * ppc).sum())
    acc.expected_gmv += float((q * pctr * pcvr * price).sum())

    if events is not None:
        slots = np.arange(1, length + 1)
        for i in range(n):
            events.append(UserEvent(
                request_id=chunk.request_ids[i],
                scroll_depth=int(depth[i]),
                clicks=tuple(int(s) for s in slots[click[i]]),
                conversions=tuple(int(s) for s in slots[conv[i]]),
                revenue=float(rev_req[i]),
                gmv=float(gmv_req[i]),
                ad_slots=tuple(int(s) for s in slots[templates[i]]),
            ))


def run(strategy: Strategy, stream: RequestBatch, q: SlotExposureModel, *,
        controller: Optional[ControllerState] = None, user_seed: int = 0, chunk_size: int = 2000,
        collect_templates: bool = False, collect_events: bool = False,
        on_window: Optional[Callable[[WindowReport], None]] = None) -> RunResult:
    """Serve every request of ``stream`` with ``strategy`` and simulate its user.

    For ``hca2e`` the controller (if given) sets the threshold; its window
    size then overrides ``chunk_size`` so every request in a window sees the
    same threshold. Without a controller the strategy's ``rho_init`` is
    used throughout.
    """
    qa = q.as_array()
    if len(qa) != stream.page_length:
        raise StructuralError("exposure model length does not match page length")
    acc = MetricAccumulator(stream.page_length)
    windows: List[WindowReport] = []
    templates_out = [] if collect_templates else None
    events = [] if collect_events else None
    state = controller
    if state is not None:
        chunk_size = state.window_size_dt
    rho = state.rho_thres if state is not None else strategy.rho_init

    for start, chunk in stream.chunks(chunk_size):
        templates = strategy.plan(chunk, qa, rho)
        _simulate_chunk(chunk, templates, qa, user_seed, start, acc, events)
        if templates_out is not None:
            templates_out.append(templates)
        if state is not None:
            state = observe_exposures(state, float((templates * qa).sum()), float(len(chunk) * qa.sum()), len(chunk))
            state, report = maybe_update(state)
            if report is not None:
                windows.append(report)
                if on_window is not None:
                    on_window(report)
            rho = state.rho_thres

    return RunResult(
        metrics=RunMetrics.from_accumulator(acc, stream.constraints),
        windows=windows,
        templates=np.concatenate(templates_out) if templates_out else (
            np.zeros((0, stream.page_length), dtype=bool) if collect_templates else None),
        events=events,
        final_rho=rho if strategy.name == "hca2e" else None,
    )


# ---------------------------------------------------------------------------
# Pareto sweep
# ---------------------------------------------------------------------------

METRIC_COLUMNS = ("rev", "gmv", "clk", "ctr")


def metrics_row(strategy: Strategy, m_star: float, metrics: RunMetrics, reference: Optional[RunMetrics]) -> dict:
    row = {
        "strategy": strategy.name,
        "alpha": strategy.alpha,
        "B": strategy.beam_size if strategy.name == "hca2e" else "",
        "m_star": m_star,
        "rev": metrics.rev,
        "gmv": metrics.gmv,
        "clk": metrics.clk,
        "ctr": metrics.ctr,
        "expected_m": metrics.expected_m,
        "realized_m": metrics.realized_m,
        "avg_ad_position": metrics.avg_ad_position,
        "expected_rev": metrics.expected_rev,
        "expected_gmv": metrics.expected_gmv,
        "beta": strategy.beta if strategy.name in ("wpo", "gea") else "",
        "rho": strategy.rho_init if strategy.name == "hca2e" else "",
    }
    for name in METRIC_COLUMNS + ("expected_rev", "expected_gmv"):
        base = getattr(reference, name) if reference is not None else 0.0
        row[f"d_{name}_pct"] = advantage(getattr(metrics, name), base) if base > 0 else ""
    return row


def run_cell(name: str, beam_size: int, alpha: float, stream: RequestBatch, q: SlotExposureModel,
             m_star: float, *, calib: RequestBatch, gamma: float = 0.1, window: int = 2000,
             user_seed: int = 0, gap_decay: float = 0.8, fixed_positions: Optional[Sequence[int]] = None,
             rho_min: float = 0.0, rho_max: Optional[float] = None, use_controller: bool = True,
             collect_events: bool = False, on_window=None) -> Tuple[Strategy, RunResult]:
    """Calibrate one strategy on ``calib`` and run it over ``stream``."""
    s = calibrate_strategy(name, calib, q.as_array(), alpha, m_star, beam_size=beam_size or 5,
                           gap_decay=gap_decay, fixed_positions=fixed_positions)
    ctrl = None
    if name == "hca2e" and use_controller:
        ctrl = ControllerState.create(s.rho_init, m_star, gamma, window, rho_min, rho_max)
    res = run(s, stream, q, controller=ctrl, user_seed=user_seed, chunk_size=window,
              collect_events=collect_events, on_window=on_window)
    return s, res


def pareto_sweep(alphas: Sequence[float], strategies: Sequence[Tuple[str, int]], stream: RequestBatch,
                 q: SlotExposureModel, m_star: float, *, calib: Optional[RequestBatch] = None,
                 gamma: float = 0.1, window: int = 2000, user_seed: int = 0, gap_decay: float = 0.8,
                 fixed_positions: Optional[Sequence[int]] = None,
                 progress: Optional[Callable[[dict], None]] = None) -> List[dict]:
    """One metrics row per (alpha, strategy), with advantages over Fixed.

    ``strategies`` holds ``(name, beam_size)`` pairs; beam size is ignored
    for the baselines. Fixed does not depend on alpha and is run once.
    """
    if any(not 0 < a <= 1 for a in alphas):
        raise ValueError("alphas must lie in (0, 1]")
    calib = calib if calib is not None else stream.slice(0, min(len(stream), 5000))
    kw = dict(calib=calib, gamma=gamma, window=window, user_seed=user_seed, gap_decay=gap_decay,
              fixed_positions=fixed_positions)
    fixed, fixed_res = run_cell("fixed", 0, alphas[0], stream, q, m_star, **kw)
    fixed_metrics = fixed_res.metrics
    rows = []
    for alpha in alphas:
        for name, beam in strategies:
            if name == "fixed":
                s = Strategy("fixed", alpha=alpha, fixed_positions=fixed.fixed_positions)
                metrics = fixed_metrics
            else:
                s, res = run_cell(name, beam, alpha, stream, q, m_star, **kw)
                metrics = res.metrics
            row = metrics_row(s, m_star, metrics, fixed_metrics)
            rows.append(row)
            if progress is not None:
                progress(row)
    return rows


def non_dominated(points: Sequence[Tuple[float, float]]) -> List[int]:
    """Indices of points not weakly dominated by another (maximising both)."""
    keep = []
    for i, (a, b) in enumerate(points):
        dominated = any(
            (c >= a and d >= b) and (c > a or d > b)
            for j, (c, d) in enumerate(points) if j != i
        )
        if not dominated:
            keep.append(i)
    return keep


def front_covers(front: Sequence[Tuple[float, float]], point: Tuple[float, float], tol: float = 0.0) -> bool:
    """True if ``point`` is weakly dominated by ``front`` or by a segment between two front points.

    Segments count because mixing two policies across requests attains any
    convex combination of their metric pairs.
    """
    x, y = point
    for fx, fy in front:
        if fx >= x - tol and fy >= y - tol:
            return True
    pts = sorted(front)
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        if x0 <= x <= x1 and x1 > x0:
            yi = y0 + (y1 - y0) * (x - x0) / (x1 - x0)
            if yi >= y - tol:
                return True
    return False
