"""Compare where each strategy places ads once all are held to the same ad share.

    python demos/ad_positions.py
"""

from hca2e import GeneratorConfig, ad_position_report, calibrate_strategy, generate_stream, run

M_STAR = 0.10


def main():
    cfg = GeneratorConfig(num_requests=20_000)
    stream = generate_stream(cfg)
    q = cfg.exposure_model()
    calib = stream.slice(0, 5000)
    for name in ("hca2e", "wpo", "gea", "fixed"):
        s = calibrate_strategy(name, calib, q.as_array(), 0.5, M_STAR)
        res = run(s, stream, q, collect_events=True)
        rep = ad_position_report(res.events, stream.constraints)
        shares = "  ".join(f"{lo}+:{share:.2f}" for lo, share in zip(rep.bucket_starts, rep.shares))
        print(f"{s.label:<12} mean slot {rep.avg_position:5.1f}  {shares}")


if __name__ == "__main__":
    main()
