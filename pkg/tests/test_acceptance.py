"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s``; the full default
sweep makes this module take several minutes.
"""

import math
import os
import time

import numpy as np
import pytest

from hca2e import cli
from hca2e.controller import ControllerState, calibrate_threshold, capacity, greedy_select
from hca2e.core import ExposureTemplate, SlotExposureModel, merge_rpp, validate_templates
from hca2e.evaluator import TradeoffParams
from hca2e.io import read_table
from hca2e.search import SearchConfig, ets_search, exhaustive_oracle, search_batch
from hca2e.simulator import (
    GeneratorConfig,
    calibrate_strategy,
    front_covers,
    generate_stream,
    non_dominated,
    run,
    simulate_user,
)

from conftest import random_request

M_STAR = 0.10
ALPHA = 0.5


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {n}] {'PASS' if ok else 'FAIL'}: {detail}")
        return ok
    return emit


@pytest.fixture(scope="module")
def bench():
    cfg = GeneratorConfig()
    stream = generate_stream(cfg)
    q = cfg.exposure_model()
    return cfg, stream, q, stream.slice(0, 5000)


@pytest.fixture(scope="module")
def controlled_run(bench):
    cfg, stream, q, calib = bench
    t0 = time.perf_counter()
    s = calibrate_strategy("hca2e", calib, q.as_array(), ALPHA, M_STAR, beam_size=5)
    ctrl = ControllerState.create(s.rho_init, M_STAR, gamma=0.1, window=2000)
    res = run(s, stream, q, controller=ctrl, collect_templates=True)
    return s, res, time.perf_counter() - t0


def test_1_oracle_equivalence(report):
    rng = np.random.default_rng(2024)
    q = SlotExposureModel.geometric(10)
    reqs = [random_request(rng, 10, 2, 2, rid=i) for i in range(200)]
    rhos = rng.uniform(0.0, 0.5, len(reqs))
    t0 = time.perf_counter()
    found = [ets_search(r, q, TradeoffParams(ALPHA, float(p)), SearchConfig(2**10)) for r, p in zip(reqs, rhos)]
    elapsed = time.perf_counter() - t0
    exact = [exhaustive_oracle(r, q, TradeoffParams(ALPHA, float(p))) for r, p in zip(reqs, rhos)]
    mismatch = sum(a[0] != b[0] or a[1].kvi != b[1].kvi for a, b in zip(found, exact))
    with_ads = sum(not t.is_no_ad for t, _ in found)
    ok = mismatch == 0 and elapsed < 10.0
    assert report(1, ok, f"{mismatch}/200 mismatches ({with_ads} with ads), search {elapsed:.2f}s < 10s")


def test_2_constraint_compliance(report, bench, controlled_run):
    cfg, stream, q, calib = bench
    counts = {"hca2e(B=5)": int((~validate_templates(controlled_run[1].templates, stream.constraints,
                                                        stream.ad_count)).sum())}
    for name in ("wpo", "gea", "fixed"):
        s = calibrate_strategy(name, calib, q.as_array(), ALPHA, M_STAR)
        t = run(s, stream, q, collect_templates=True).templates
        assert len(t) == len(stream)
        counts[name] = int((~validate_templates(t, stream.constraints, stream.ad_count)).sum())
    ok = all(v == 0 for v in counts.values()) and len(stream) == 100_000
    assert report(2, ok, f"violations over {len(stream)} requests: {counts}")


def test_3_controller_convergence(report, controlled_run):
    _, res, elapsed = controlled_run
    ms = np.array([w.realized_m for w in res.windows])
    after = ms[10:]
    mean_dev = float(np.mean(np.abs(after - M_STAR)))
    worst = float(np.max(np.abs(after - M_STAR)))
    ok = len(ms) == 50 and mean_dev <= 0.005 and worst <= 0.02 and elapsed < 120
    assert report(3, ok, f"{len(ms)} windows, post burn-in mean |m-m*| = {mean_dev * 100:.3f} pp, "
                         f"max = {worst * 100:.3f} pp, runtime {elapsed:.1f}s")


def test_4_threshold_weight_monotonicity(report):
    rng = np.random.default_rng(77)
    bad, pairs = 0, 0
    for i in range(100):
        L = int(rng.integers(3, 11))
        r = random_request(rng, L, int(rng.integers(1, 4)), int(rng.integers(1, 4)), rid=i)
        q = SlotExposureModel.geometric(L, 0.9)
        r1, r2 = np.sort(rng.uniform(0.0, 2.0, 2))
        if r1 == r2:
            continue
        _, s1 = exhaustive_oracle(r, q, TradeoffParams(ALPHA, float(r1)))
        _, s2 = exhaustive_oracle(r, q, TradeoffParams(ALPHA, float(r2)))
        pairs += 1
        bad += s2.weight > s1.weight
    assert report(4, bad == 0 and pairs == 100, f"{bad} violations over {pairs} threshold pairs")


def test_5_beam_size_trend(report, bench):
    _, stream, q, calib = bench
    qa = q.as_array()
    rho = calibrate_threshold(calib, qa, ALPHA, M_STAR, 5)
    means = {b: float(search_batch(stream, qa, ALPHA, rho, b).kvi.mean()) for b in (1, 3, 7)}
    gaps = (means[7] - means[3], means[3] - means[1])
    ok = all(g >= -1e-9 for g in gaps)
    assert report(5, ok, f"rho={rho:.5g}, mean kvi B=1 {means[1]:.6f}, B=3 {means[3]:.6f}, B=7 {means[7]:.6f}")


def dp_knapsack(values, weights, cap):
    best = np.zeros(cap + 1)
    for v, w in zip(values, weights):
        if v <= 0 or w > cap:
            continue
        best[w:] = np.maximum(best[w:], best[:-w] + v if w > 0 else best + v)
    return float(best[cap])


def test_6_greedy_capacity_bound(report, bench):
    _, stream, q, _ = bench
    qa = q.as_array()
    worst, batches = math.inf, 0
    for start in range(0, 2000, 50):
        chunk = stream.slice(start, start + 50)
        res = search_batch(chunk, qa, ALPHA, 0.0, 5)
        values = res.value
        weights = np.rint(res.weight * 1000).astype(np.int64)
        cap = int(capacity(1000 * len(chunk) * qa.sum(), M_STAR))
        chosen, _ = greedy_select(values, weights.astype(float), cap)
        greedy = float(values[chosen].sum())
        opt = dp_knapsack(values, weights, cap)
        worst = min(worst, greedy - (opt - values.max()))
        batches += 1
    assert report(6, worst >= 0, f"{batches} batches, min(greedy - (DP - max v)) = {worst:.6g}")


def test_7_monte_carlo_revenue(report, bench):
    cfg, stream, q, _ = bench
    i = int(np.argmax(stream.ad_count))
    r = stream.request(i)
    t = ExposureTemplate.from_ad_slots(cfg.page_length, range(cfg.top_ad_slot, cfg.page_length + 1,
                                                              cfg.min_ad_gap)[: len(r.ad_list)])
    page = merge_rpp(r, t)
    analytic = sum(q.q[s - 1] * c.pctr * c.price_per_click for s, c in page.entries if s in t.ad_slots)
    rng = np.random.default_rng(99)
    n = 100_000
    rev = np.array([simulate_user(page, q, rng).revenue for _ in range(n)])
    sigma = rev.std(ddof=1) / math.sqrt(n)
    z = (rev.mean() - analytic) / sigma
    assert report(7, abs(z) <= 3, f"mean {rev.mean():.6f} vs analytic {analytic:.6f}, z = {z:+.2f}")


def test_8_pareto_sweep(report, tmp_path):
    out = tmp_path / "sweep"
    t0 = time.perf_counter()
    code = cli.main(["sweep", "--out", str(out), "--jobs", str(os.cpu_count() or 1)])
    elapsed = time.perf_counter() - t0
    assert code == 0
    long = read_table(out / "pareto_long.csv")
    rows = read_table(out / "metrics.csv")
    well_formed = (
        list(long[0]) == list(cli.LONG_COLUMNS)
        and len(rows) == 10 * 4
        and len(long) == len(rows) * len(cli.LONG_METRICS)
        and all(math.isfinite(float(r["value"])) for r in long)
        and {r["strategy"] for r in rows} == {"hca2e", "wpo", "gea", "fixed"}
    )
    m = [float(r["realized_m"]) for r in rows]
    matched = max(m) - min(m) <= 0.003

    def front(strategy, x, y):
        pts = [(float(r[x]), float(r[y])) for r in rows if r["strategy"] == strategy]
        return [pts[i] for i in non_dominated(pts)]

    lines = {}
    for kind, x, y in (("expected", "d_expected_gmv_pct", "d_expected_rev_pct"), ("realized", "d_gmv_pct", "d_rev_pct")):
        h = front("hca2e", x, y)
        lines[kind] = {b: [p for p in front(b, x, y) if not front_covers(h, p)] for b in ("wpo", "gea", "fixed")}
    dominated = all(not v for v in lines["expected"].values())
    ok = well_formed and matched and dominated and elapsed < 1800
    realized_gaps = {b: len(v) for b, v in lines["realized"].items()}
    assert report(8, ok, f"{elapsed:.0f}s, {len(long)} long rows, realized m spread {100 * (max(m) - min(m)):.2f} pp, "
                         f"uncovered baseline front points (expected REV/GMV) "
                         f"{ {b: len(v) for b, v in lines['expected'].items()} }; "
                         f"realized REV/GMV, informational: {realized_gaps}")


def test_9_determinism(report, tmp_path):
    small = ["--set", "generator.num_requests=1500", "--set", "controller.window=300",
             "--set", "calibration.requests=500", "--set", "sweep.alphas=[0.3, 0.9]"]
    dirs = []
    for k in range(2):
        d = tmp_path / f"inv{k}"
        stream = d / "gen" / "stream.jsonl.gz"
        assert cli.main(["generate", "--out", str(d / "gen"), *small]) == 0
        assert cli.main(["run", "--out", str(d / "run"), *small, "--set", f"stream.path={stream}",
                         "--set", "strategy.names=[hca2e, wpo, gea, fixed]"]) == 0
        assert cli.main(["sweep", "--out", str(d / "sweep"), *small]) == 0
        assert cli.main(["report", "--out", str(d / "report"), "--set", f"report.run_dir={d / 'run'}"]) == 0
        dirs.append(d)
    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
    other = sorted(p.relative_to(dirs[1]) for p in dirs[1].rglob("*") if p.is_file())
    # the stream path differs between the two trees and is echoed into the run manifest
    differ = [str(f) for f in files
              if f.name != "manifest.json" or f.parts[0] != "run"
              if (dirs[0] / f).read_bytes() != (dirs[1] / f).read_bytes()]
    ok = files == other and not differ
    assert report(9, ok, f"{len(files)} files compared, differing: {differ or 'none'}")
