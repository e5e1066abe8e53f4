"""Walk through the beam search on one small request and compare it to brute force.

    python demos/template_search.py
"""

from hca2e import (
    Candidate,
    Kind,
    Request,
    RequestConstraints,
    SearchConfig,
    SlotExposureModel,
    TradeoffParams,
    ets_search,
    exhaustive_oracle,
    merge_rpp,
)
from hca2e.search import feasible_templates


def organic(i, u):
    return Candidate(f"rec{i}", Kind.ORGANIC, i, utility_rec=u)


def ad(i, u_ad, u_rec):
    return Candidate(f"ad{i}", Kind.AD, i, utility_rec=u_rec, utility_ad=u_ad)


def main():
    # four slots, first ad allowed at slot 2, ads at least two slots apart
    r = Request("demo",
                rec_list=[organic(i + 1, u) for i, u in enumerate([4.0, 3.0, 2.0, 1.0])],
                ad_list=[ad(1, 5.0, 0.0), ad(2, 2.0, 0.0)],
                constraints=RequestConstraints(4, 2, 2))
    q = SlotExposureModel((1.0, 0.5, 0.25, 0.125))
    params = TradeoffParams(alpha=1.0, rho_thres=0.0)

    print("feasible templates:", [str(t) for t in feasible_templates(r)])

    trace = []
    best, score = ets_search(r, q, params, SearchConfig(beam_size=2), trace=trace)
    for depth, layer in enumerate(trace, start=1):
        print(f"layer {depth}:", ", ".join(f"{''.join('1' if b else '0' for b in n.sub_template)}({n.kvi_so_far:.3f})"
                                              for n in layer))
    print(f"beam best: {best}  value={score.value:.4f} weight={score.weight:.4f} kvi={score.kvi:.4f}")

    exact, exact_score = exhaustive_oracle(r, q, params)
    print(f"brute force: {exact}  kvi={exact_score.kvi:.4f}")

    page = merge_rpp(r, best)
    print("merged page:", " ".join(f"{slot}:{c.id}" for slot, c in page.entries))

    # raising the threshold makes ad exposure more expensive
    for rho in (0.0, 2.0, 5.0, 10.0):
        t, s = exhaustive_oracle(r, q, TradeoffParams(1.0, rho))
        print(f"rho={rho:>4}: {t}  weight={s.weight:.3f}")


if __name__ == "__main__":
    main()
