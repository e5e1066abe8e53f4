"""Feedback control of the value-per-weight threshold.

Every ``window_size`` requests the monetization rate of the window is
compared with the target and the threshold is rescaled:

    rho <- rho * (1 + gamma * (m_window / m_target - 1))

Exposure counts are expected (probability-weighted) exposures so that they
share units with the template weights the search optimises.

Also holds the offline pieces that surround the loop: the knapsack
capacity, threshold-greedy selection over frozen templates, and the
bisection that picks the starting threshold from a calibration slice.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .core import HCA2EError, MergedPage, RequestBatch, SlotExposureModel
from .search import finalize_batch, search_batch


class ControllerConfigError(HCA2EError, ValueError):
    pass


@dataclass(frozen=True)
class ControllerState:
    rho_thres: float
    target_m_star: float
    learning_rate_gamma: float = 0.1
    window_size_dt: int = 2000
    rho_min: float = 0.0
    rho_max: float = math.inf
    window_ad_exposures: float = 0.0
    window_total_exposures: float = 0.0
    requests_in_window: int = 0
    window_index: int = 0

    def __post_init__(self):
        if not 0.0 < self.target_m_star < 1.0:
            raise ControllerConfigError(f"target monetization rate must lie in (0, 1), got {self.target_m_star}")
        if not self.learning_rate_gamma > 0:
            raise ControllerConfigError("learning rate must be positive")
        if self.window_size_dt <= 0:
            raise ControllerConfigError("window size must be positive")
        if self.rho_min < 0 or self.rho_max < self.rho_min:
            raise ControllerConfigError("need 0 <= rho_min <= rho_max")
        if self.rho_thres < 0:
            raise ControllerConfigError("threshold must be non-negative")

    @classmethod
    def create(cls, rho_init: float, m_star: float, gamma: float = 0.1, window: int = 2000,
               rho_min: float = 0.0, rho_max: Optional[float] = None) -> "ControllerState":
        """Default upper clamp is a million times the starting threshold."""
        if rho_max is None:
            rho_max = 1e6 * rho_init if rho_init > 0 else math.inf
        return cls(rho_init, m_star, gamma, window, rho_min, rho_max)


@dataclass(frozen=True)
class WindowReport:
    window_index: int
    realized_m: float
    rho_before: float
    rho_after: float
    requests: int = 0
    m_star: float = 0.0

    @property
    def relative_deviation(self) -> float:
        return (self.realized_m - self.m_star) / self.m_star


def observe_exposures(state: ControllerState, ad_exposures: float, total_exposures: float,
                      requests: int = 1) -> ControllerState:
    return dataclasses.replace(
        state,
        window_ad_exposures=state.window_ad_exposures + ad_exposures,
        window_total_exposures=state.window_total_exposures + total_exposures,
        requests_in_window=state.requests_in_window + requests,
    )


def observe(state: ControllerState, page: MergedPage, q: SlotExposureModel) -> ControllerState:
    ad = 0.0
    total = 0.0
    for slot, is_ad in enumerate(page.template.slots, start=1):
        total += q.q[slot - 1]
        if is_ad:
            ad += q.q[slot - 1]
    return observe_exposures(state, ad, total, 1)


def maybe_update(state: ControllerState) -> Tuple[ControllerState, Optional[WindowReport]]:
    if state.requests_in_window < state.window_size_dt:
        return state, None
    cleared = dataclasses.replace(
        state, window_ad_exposures=0.0, window_total_exposures=0.0, requests_in_window=0,
        window_index=state.window_index + 1,
    )
    if state.window_total_exposures <= 0:
        # nothing was shown; leave the threshold alone
        return cleared, None
    m = state.window_ad_exposures / state.window_total_exposures
    rho = state.rho_thres * (1.0 + state.learning_rate_gamma * (m / state.target_m_star - 1.0))
    rho = min(max(rho, state.rho_min), state.rho_max)
    report = WindowReport(state.window_index, m, state.rho_thres, rho, state.requests_in_window,
                          state.target_m_star)
    return dataclasses.replace(cleared, rho_thres=rho), report


def capacity(total_expected_exposures: float, m_star: float) -> float:
    if total_expected_exposures < 0 or m_star < 0:
        raise ValueError("capacity inputs must be non-negative")
    return m_star * total_expected_exposures


def greedy_select(values, weights, cap: float, overshoot: bool = False):
    """Threshold-greedy knapsack over frozen (value, weight) pairs.

    Requests are taken in descending value-per-weight order; only positive
    values are eligible. With ``overshoot=False`` selection stops before the
    first request that would break the capacity. With ``overshoot=True`` that
    request is included too, so the load can exceed ``cap`` by at most one
    request's weight.

    Returns the boolean selection mask and the implied screening threshold
    (value per weight of the first rejected request, or 0).
    """
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    eligible = (values > 0) & (weights > 0)
    ratio = np.where(eligible, values / np.where(weights > 0, weights, 1.0), -np.inf)
    order = np.argsort(-ratio, kind="stable")
    chosen = np.zeros(len(values), dtype=bool)
    load = 0.0
    threshold = 0.0
    for i in order:
        if not eligible[i]:
            break
        if load + weights[i] > cap:
            if overshoot:
                chosen[i] = True
                load += weights[i]
            threshold = ratio[i]
            break
        chosen[i] = True
        load += weights[i]
    return chosen, threshold


def expected_rate(batch: RequestBatch, q: np.ndarray, alpha: float, rho: float, beam_size: int) -> float:
    """Expected monetization rate on ``batch`` under a frozen threshold."""
    res = search_batch(batch, q, alpha, rho, beam_size)
    final = finalize_batch(res, rho)
    ad = (final * q).sum()
    return float(ad / (len(batch) * q.sum()))


def calibrate_threshold(batch: RequestBatch, q: np.ndarray, alpha: float, m_star: float, beam_size: int,
                        rel_tol: float = 1e-4, max_iter: int = 60) -> float:
    """Bisection (in log space) for the threshold whose expected rate hits ``m_star``.

    The rate is a step function of the threshold on a finite slice, so the
    tolerance may be unreachable; the closest threshold seen is returned.
    A target above the rate at threshold zero returns zero.
    """
    q = np.asarray(q, dtype=float)
    rate = lambda rho: expected_rate(batch, q, alpha, rho, beam_size)  # noqa: E731
    if rate(0.0) <= m_star:
        return 0.0
    hi = 1.0
    while rate(hi) > m_star:
        hi *= 4.0
        if hi > 1e12:
            raise HCA2EError("could not bracket the threshold from above")
    lo = hi / 4.0
    while lo > 1e-12 and rate(lo) < m_star:
        lo /= 4.0
    best, best_err = hi, abs(rate(hi) - m_star)
    for _ in range(max_iter):
        mid = math.sqrt(lo * hi)
        m = rate(mid)
        err = abs(m - m_star)
        if err < best_err:
            best, best_err = mid, err
        if err <= rel_tol * m_star:
            break
        if m > m_star:
            lo = mid
        else:
            hi = mid
    return best
