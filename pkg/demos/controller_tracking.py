"""Show the threshold controller pulling the ad share back to target after a bad start.

    python demos/controller_tracking.py
"""

from hca2e import ControllerState, GeneratorConfig, calibrate_strategy, generate_stream, run

M_STAR = 0.10


def main():
    cfg = GeneratorConfig(num_requests=40_000)
    stream = generate_stream(cfg)
    q = cfg.exposure_model()
    strategy = calibrate_strategy("hca2e", stream.slice(0, 5000), q.as_array(), 0.5, M_STAR, beam_size=5)
    print(f"calibrated starting threshold: {strategy.rho_init:.5f}")

    # start five times too low so the ad share overshoots; at gamma=0.1 each
    # window moves the threshold by only a few percent, so recovery is gradual
    for label, rho0 in (("calibrated", strategy.rho_init), ("rho0 / 5", strategy.rho_init / 5)):
        ctrl = ControllerState.create(rho0, M_STAR, gamma=0.1, window=2000)
        res = run(strategy, stream, q, controller=ctrl)
        print(f"\n{label}")
        print(f"{'window':>6} {'m':>8} {'rho after':>10}")
        for w in res.windows:
            print(f"{w.window_index:>6} {w.realized_m:>8.4f} {w.rho_after:>10.5f}")


if __name__ == "__main__":
    main()
