"""Command-line entry point: ``hca2e {generate,run,sweep,report}``.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import hashlib
import json
import logging
import math
import multiprocessing as mp
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import io as hio
from .baselines import BaselineConfigError, CalibrationError
from .config import (
    ConfigError,
    build_config,
    config_hash,
    generator_config,
    manifest,
    parse_strategy,
    user_seed,
)
from .controller import ControllerConfigError
from .core import SlotExposureModel, StructuralError
from .simulator import (
    GeneratorConfigError,
    RunMetrics,
    Strategy,
    generate_stream,
    metrics_row,
    run_cell,
)

log = logging.getLogger("hca2e")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

TABLE_COLUMNS = (
    "strategy", "alpha", "B", "m_star", "rev", "gmv", "clk", "ctr", "expected_m", "realized_m",
    "avg_ad_position", "expected_rev", "expected_gmv", "beta", "rho",
    "d_rev_pct", "d_gmv_pct", "d_clk_pct", "d_ctr_pct", "d_expected_rev_pct", "d_expected_gmv_pct",
)
LONG_METRICS = ("d_rev_pct", "d_gmv_pct", "d_clk_pct", "d_ctr_pct", "d_expected_rev_pct",
                "d_expected_gmv_pct", "expected_m", "realized_m", "avg_ad_position")
LONG_COLUMNS = ("strategy", "B", "alpha", "m_star", "metric", "value")
WINDOW_FIELDS = ("window_index", "realized_m", "rho_before", "rho_after", "requests", "m_star")


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def label(name: str, beam: int) -> str:
    return f"hca2e-B{beam}" if name == "hca2e" else name


def exposure_model(cfg: dict, page_length: int) -> SlotExposureModel:
    q = cfg["exposure"]["q"]
    if q is None:
        return SlotExposureModel.geometric(page_length, cfg["generator"]["kappa"])
    if len(q) != page_length:
        raise hio.DataError(f"exposure.q has {len(q)} entries but the stream has {page_length} slots")
    try:
        return SlotExposureModel(tuple(float(x) for x in q))
    except ValueError as exc:
        raise ConfigError(str(exc), "exposure.q") from exc


def load_stream(cfg: dict):
    path = cfg["stream"]["path"]
    if path:
        return hio.read_stream(path)
    return generate_stream(generator_config(cfg))


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def file_sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def metrics_to_dict(m: RunMetrics) -> dict:
    d = {k: getattr(m, k) for k in RunMetrics.__dataclass_fields__ if k != "ad_position_histogram"}
    d["ad_position_histogram"] = {str(k): v for k, v in m.ad_position_histogram.items()}
    return d


def metrics_from_dict(d: dict) -> RunMetrics:
    d = dict(d)
    d["ad_position_histogram"] = {int(k): v for k, v in d["ad_position_histogram"].items()}
    return RunMetrics(**d)


# Worker state; set before the pool forks so children inherit it without pickling.
_CTX: Dict[str, object] = {}


def _set_context(cfg: dict, stream) -> None:
    q = exposure_model(cfg, stream.page_length)
    _CTX.clear()
    _CTX.update(cfg=cfg, stream=stream, q=q,
                calib=stream.slice(0, min(len(stream), cfg["calibration"]["requests"])))


def _cell(task: Tuple[str, int, float, float, bool]) -> dict:
    """Run one (strategy, beam, alpha, m_star) cell against the shared stream."""
    name, beam, alpha, m_star, events = task
    cfg, stream, q = _CTX["cfg"], _CTX["stream"], _CTX["q"]
    ctrl, strat = cfg["controller"], cfg["strategy"]
    s, res = run_cell(
        name, beam, alpha, stream, q, m_star,
        calib=_CTX["calib"], gamma=ctrl["gamma"], window=ctrl["window"], user_seed=user_seed(cfg),
        gap_decay=strat["gap_decay"], fixed_positions=strat["fixed_positions"],
        rho_min=ctrl["rho_min"], rho_max=ctrl["rho_max"], use_controller=ctrl["enabled"],
        collect_events=events,
    )
    return {
        "strategy": {"name": s.name, "alpha": s.alpha, "beam_size": s.beam_size, "beta": s.beta,
                     "gap_decay": s.gap_decay, "fixed_positions": list(s.fixed_positions),
                     "rho_init": s.rho_init},
        "m_star": m_star,
        "metrics": metrics_to_dict(res.metrics),
        "windows": [{k: getattr(w, k) for k in WINDOW_FIELDS} for w in res.windows],
        "events": [e.to_record() for e in res.events] if res.events is not None else None,
    }


def _map(tasks: Sequence, jobs: int):
    if jobs <= 1 or len(tasks) <= 1:
        return [_cell(t) for t in tasks]
    ctx = mp.get_context("fork")
    with cf.ProcessPoolExecutor(max_workers=min(jobs, len(tasks)), mp_context=ctx) as pool:
        return list(pool.map(_cell, tasks))


def _strategy_of(cell: dict) -> Strategy:
    s = dict(cell["strategy"])
    s["fixed_positions"] = tuple(s["fixed_positions"])
    return Strategy(**s)


def _row(cell: dict, reference: Optional[dict]) -> dict:
    ref = metrics_from_dict(reference["metrics"]) if reference is not None else None
    return metrics_row(_strategy_of(cell), cell["m_star"], metrics_from_dict(cell["metrics"]), ref)


def _position_rows(cell: dict, page_length: int) -> List[dict]:
    s = cell["strategy"]
    rows = []
    for start, share in sorted((int(k), v) for k, v in cell["metrics"]["ad_position_histogram"].items()):
        rows.append({"strategy": s["name"], "B": s["beam_size"] if s["name"] == "hca2e" else "",
                     "alpha": s["alpha"], "m_star": cell["m_star"], "bucket_start": start, "share": share})
    return rows


def _window_rows(cell: dict) -> List[dict]:
    s = cell["strategy"]
    out = []
    for w in cell["windows"]:
        rec = {"strategy": s["name"], "B": s["beam_size"], "alpha": s["alpha"]}
        rec.update(w)
        rec["relative_deviation"] = (w["realized_m"] - w["m_star"]) / w["m_star"]
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_generate(cfg: dict, out: Path, jobs: int = 1) -> Path:
    gen = generator_config(cfg)
    stream = generate_stream(gen)
    path = out / "stream.jsonl.gz"
    hio.write_stream(path, stream)
    write_json(out / "manifest.json", manifest(cfg, "generate", num_requests=len(stream),
                                                 stream_file=path.name, stream_sha256=file_sha256(path)))
    log.info("wrote %d requests to %s", len(stream), path)
    return path


def cmd_run(cfg: dict, out: Path, jobs: int = 1) -> Path:
    stream = load_stream(cfg)
    _set_context(cfg, stream)
    m_star = cfg["controller"]["m_star"]
    alpha = cfg["strategy"]["alpha"]
    events = bool(cfg["simulation"]["events"])
    wanted = []
    for token in cfg["strategy"]["names"]:
        name, beam = parse_strategy(token)
        if name == "hca2e" and ":" not in str(token):
            beam = cfg["strategy"]["beam_size"]
        wanted.append((name, beam))
    tasks = [("fixed", 0, alpha, m_star, events and ("fixed", 0) in wanted)]
    tasks += [(n, b, alpha, m_star, events) for n, b in wanted if n != "fixed"]
    cells = _map(tasks, jobs)
    reference = cells[0]
    by_key = {(c["strategy"]["name"], c["strategy"]["beam_size"] if c["strategy"]["name"] == "hca2e" else 0): c
              for c in cells}
    rows, positions, windows = [], [], []
    for name, beam in wanted:
        cell = by_key[(name, beam)]
        rows.append(_row(cell, reference))
        positions += _position_rows(cell, stream.page_length)
        windows += _window_rows(cell)
        if cell["events"] is not None:
            hio.write_jsonl(out / f"events_{label(name, beam)}.jsonl.gz", cell["events"])
    hio.write_table(out / "metrics.csv", rows, TABLE_COLUMNS)
    hio.write_table(out / "ad_positions.csv", positions,
                    ("strategy", "B", "alpha", "m_star", "bucket_start", "share"))
    hio.write_jsonl(out / "windows.jsonl", windows)
    write_json(out / "manifest.json", manifest(cfg, "run", num_requests=len(stream),
                                                 calibrated=[c["strategy"] for c in cells]))
    for r in rows:
        log.info("%s alpha=%s m=%.4f rev=%.1f gmv=%.1f", r["strategy"], r["alpha"], r["expected_m"],
                 r["rev"], r["gmv"])
    return out / "metrics.csv"


def _cell_name(name: str, beam: int, alpha: float, m_star: float) -> str:
    return f"m{m_star:g}_{label(name, beam)}_a{alpha:g}.json"


def cmd_sweep(cfg: dict, out: Path, jobs: int = 1) -> Path:
    stream = load_stream(cfg)
    _set_context(cfg, stream)
    sw = cfg["sweep"]
    strategies = [parse_strategy(t) for t in sw["strategies"]]
    # cells depend on everything except the sweep grid itself
    key = config_hash({k: v for k, v in cfg.items() if k not in ("sweep", "report")})
    cell_dir = out / "cells"
    plan = []
    for m_star in sw["m_stars"]:
        plan.append(("fixed", 0, sw["alphas"][0], m_star))
        for alpha in sw["alphas"]:
            for name, beam in strategies:
                if name != "fixed":
                    plan.append((name, beam, alpha, m_star))
    todo = []
    for name, beam, alpha, m_star in plan:
        path = cell_dir / _cell_name(name, beam, alpha, m_star)
        if path.exists():
            try:
                if json.loads(path.read_text())["key"] == key:
                    continue
            except (ValueError, KeyError):
                pass
        todo.append((name, beam, alpha, m_star))
    log.info("%d of %d cells to compute", len(todo), len(plan))
    if todo:
        tasks = [(n, b, a, m, False) for n, b, a, m in todo]
        if jobs <= 1:
            for t, task in zip(todo, tasks):
                cell = _cell(task)
                cell["key"] = key
                write_json(cell_dir / _cell_name(*t), cell)
        else:
            ctx = mp.get_context("fork")
            with cf.ProcessPoolExecutor(max_workers=min(jobs, len(tasks)), mp_context=ctx) as pool:
                futures = {pool.submit(_cell, task): t for t, task in zip(todo, tasks)}
                for fut in cf.as_completed(futures):
                    cell = fut.result()
                    cell["key"] = key
                    write_json(cell_dir / _cell_name(*futures[fut]), cell)

    rows, long_rows, positions, windows = [], [], [], []
    for m_star in sw["m_stars"]:
        ref = json.loads((cell_dir / _cell_name("fixed", 0, sw["alphas"][0], m_star)).read_text())
        for alpha in sw["alphas"]:
            for name, beam in strategies:
                if name == "fixed":
                    cell = dict(ref)
                    cell["strategy"] = dict(ref["strategy"], alpha=alpha)
                else:
                    cell = json.loads((cell_dir / _cell_name(name, beam, alpha, m_star)).read_text())
                row = _row(cell, ref)
                rows.append(row)
                positions += _position_rows(cell, stream.page_length)
                windows += _window_rows(cell)
                for metric in LONG_METRICS:
                    long_rows.append({"strategy": row["strategy"], "B": row["B"], "alpha": row["alpha"],
                                      "m_star": m_star, "metric": metric, "value": row[metric]})
    hio.write_table(out / "metrics.csv", rows, TABLE_COLUMNS)
    hio.write_table(out / "pareto_long.csv", long_rows, LONG_COLUMNS)
    hio.write_table(out / "ad_positions.csv", positions,
                    ("strategy", "B", "alpha", "m_star", "bucket_start", "share"))
    hio.write_jsonl(out / "windows.jsonl", windows)
    write_json(out / "manifest.json", manifest(cfg, "sweep", num_requests=len(stream), cells=len(plan)))
    return out / "pareto_long.csv"


def _fmt(x, spec=".2f") -> str:
    if x in ("", None):
        return "-"
    return format(float(x), spec)


def render_report(run_dir: Path, alpha: float) -> str:
    if not run_dir.is_dir():
        raise hio.DataError(f"run directory {run_dir} does not exist")
    metrics_path = run_dir / "metrics.csv"
    if not metrics_path.exists():
        raise hio.DataError(f"missing input {metrics_path}: run 'hca2e run' or 'hca2e sweep' first")
    rows = hio.read_table(metrics_path)
    if not rows:
        raise hio.DataError(f"{metrics_path} has no rows")
    pick = [r for r in rows if math.isclose(float(r["alpha"]), alpha)] or rows
    lines = [f"# Advantage over Fixed (alpha = {alpha:g})", ""]
    for m_star in sorted({r["m_star"] for r in pick}, key=float):
        lines.append(f"m* = {float(m_star):.0%}")
        lines.append(f"{'strategy':<12}{'m':>8}{'dREV%':>9}{'dGMV%':>9}{'dCLK%':>9}{'dCTR%':>9}{'avg pos':>9}")
        seen = set()
        for r in pick:
            name = r["strategy"] + (f"(B={r['B']})" if r["B"] else "")
            if r["m_star"] != m_star or name in seen:
                continue
            seen.add(name)
            lines.append(f"{name:<12}{float(r['realized_m']):>8.2%}{_fmt(r['d_rev_pct']):>9}{_fmt(r['d_gmv_pct']):>9}"
                         f"{_fmt(r['d_clk_pct']):>9}{_fmt(r['d_ctr_pct']):>9}{_fmt(r['avg_ad_position']):>9}")
        lines.append("")

    pos_path = run_dir / "ad_positions.csv"
    if pos_path.exists():
        pos = [p for p in hio.read_table(pos_path) if math.isclose(float(p["alpha"]), alpha)]
        if pos:
            lines += ["# Ad exposure share by slot bucket", ""]
            groups: Dict[tuple, Dict[int, float]] = {}
            for p in pos:
                groups.setdefault((p["strategy"], p["B"], p["m_star"]), {})[int(p["bucket_start"])] = float(p["share"])
            starts = sorted({s for g in groups.values() for s in g})
            lines.append(f"{'strategy':<12}{'m*':>6}" + "".join(f"{s:>7}:" for s in starts))
            for (name, b, m), g in groups.items():
                tag = name + (f"(B={b})" if b else "")
                lines.append(f"{tag:<12}{float(m):>6.0%}" + "".join(f"{g.get(s, 0.0):>8.3f}" for s in starts))
            lines.append("")

    win_path = run_dir / "windows.jsonl"
    if win_path.exists():
        wins = [w for w in hio.read_jsonl(win_path) if math.isclose(float(w["alpha"]), alpha)]
        if wins:
            lines += ["# Relative deviation of m from m* per control window", ""]
            groups2: Dict[tuple, list] = {}
            for w in wins:
                groups2.setdefault((w["strategy"], w["B"], w["m_star"]), []).append(w)
            for (name, b, m), ws in groups2.items():
                lines.append(f"{name}(B={b}) m*={m:.0%}: window, (m - m*)/m*")
                for w in ws:
                    lines.append(f"  {w['window_index']:>4} {w['relative_deviation']:+.4f}")
            lines.append("")
    return "\n".join(lines)


def cmd_report(cfg: dict, out: Path, jobs: int = 1) -> Path:
    run_dir = Path(cfg["report"]["run_dir"]) if cfg["report"]["run_dir"] else out
    text = render_report(run_dir, float(cfg["report"]["alpha"]))
    out.mkdir(parents=True, exist_ok=True)
    path = out / "report.txt"
    path.write_text(text + "\n", encoding="utf-8")
    print(text)
    return path


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "sweep": cmd_sweep, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON config file")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a dotted config key (repeatable)")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--seed", type=int, help="generator seed (overrides generator.seed)")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="hca2e", description="Adaptive ad exposure simulator.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(fn.__doc__ or name).strip().splitlines()[0])
    return parser


cmd_generate.__doc__ = "Write a synthetic request log and manifest."
cmd_run.__doc__ = "Run strategies over a request stream."
cmd_sweep.__doc__ = "Sweep alpha for every strategy and write the Pareto tables."
cmd_report.__doc__ = "Render advantage, ad-position and controller tables."


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = build_config(args.config, args.overrides, args.seed)
        COMMANDS[args.command](cfg, args.out, args.jobs)
    except (ConfigError, GeneratorConfigError, ControllerConfigError, BaselineConfigError,
            CalibrationError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (hio.DataError, StructuralError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
