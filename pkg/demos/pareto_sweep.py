"""Trace REV/GMV fronts over the utility weight for every strategy.

A reduced stream keeps the run short; the CLI ``sweep`` command runs the
full-size version and writes the long-format table.

    python demos/pareto_sweep.py
"""

from hca2e import GeneratorConfig, generate_stream
from hca2e.simulator import front_covers, non_dominated, pareto_sweep

ALPHAS = (0.1, 0.3, 0.5, 0.7, 1.0)
STRATEGIES = (("hca2e", 5), ("wpo", 0), ("gea", 0), ("fixed", 0))


def main():
    cfg = GeneratorConfig(num_requests=20_000)
    stream = generate_stream(cfg)
    rows = pareto_sweep(ALPHAS, STRATEGIES, stream, cfg.exposure_model(), 0.10)

    print(f"{'strategy':<12} {'alpha':>5} {'m':>7} {'dREV%':>8} {'dGMV%':>8}")
    for r in rows:
        print(f"{r['strategy']:<12} {r['alpha']:>5} {r['realized_m']:>7.4f} "
              f"{r['d_expected_rev_pct']:>8.2f} {r['d_expected_gmv_pct']:>8.2f}")

    def front(name):
        pts = [(r["d_expected_gmv_pct"], r["d_expected_rev_pct"]) for r in rows if r["strategy"] == name]
        return [pts[i] for i in non_dominated(pts)]

    ours = front("hca2e")
    for name in ("wpo", "gea", "fixed"):
        missed = [p for p in front(name) if not front_covers(ours, p)]
        print(f"{name}: {len(missed)} front points not covered by hca2e")


if __name__ == "__main__":
    main()
