"""Command-line entry point: ``multimean run|grid --config cfg.json``.

Writes ``results.json`` (every trial result plus the summary),
``summary.csv`` (one row per point and method) and ``series.csv``
(long format ``x, y, series`` for external plotting) into ``--out``.

Exit codes: 0 success, 2 configuration error, 3 at least one method failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import asdict, replace
from typing import List, Optional

from multimean import __version__, _backend
from multimean.bench.runner import (
    SWEEPABLE,
    ExperimentConfig,
    RunOutput,
    excess_risk_series,
    run,
    slope_report,
    summarize,
)
from multimean.exceptions import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_FAILURE = 0, 2, 3

log = logging.getLogger("multimean")


def _clean(x):
    """JSON-safe copy: non-finite floats become ``None``."""
    if isinstance(x, float):
        return x if math.isfinite(x) else None
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item"):
        return _clean(x.item())
    return x


def series_rows(out: RunOutput, summary: List[dict]) -> List[dict]:
    """Plot-ready rows.

    Excess-risk runs give one series per method and delta with ``x = d`` and
    ``y`` the mean excess relative risk. Otherwise ``x`` is the first swept
    scenario parameter (the point index if nothing is swept) and ``y`` the
    improvement over NE in percent, or the mean error without an NE baseline.
    """
    rows = []
    if out.config["scenario"] == "excess_risk_vs_dim":
        for m in out.methods:
            for delta, pts in excess_risk_series(out, m).items():
                for d, y in pts.items():
                    rows.append({"x": d, "y": y, "series": f"{m} delta={delta:g}"})
        return rows
    swept = [k for k in SWEEPABLE if len({p.get(k) for p in out.points}) > 1]
    for r in summary:
        x = r[swept[0]] if swept else r["point"]
        y = r.get("improvement_pct", r["mean_error"])
        rows.append({"x": x, "y": y, "series": r["method"]})
    return rows


def write_outputs(out: RunOutput, summary: List[dict], path: str) -> None:
    os.makedirs(path, exist_ok=True)
    doc = {
        "version": __version__,
        "backend": _backend.NAME,
        "config": out.config,
        "points": out.points,
        "summary": summary,
        "info": [out.info.get(i, []) for i in range(len(out.points))],
        "failures": [list(f) for f in out.failures],
        "results": [asdict(r) for r in out.results],
    }
    if out.config["scenario"] == "excess_risk_vs_dim":
        doc["slopes"] = {m: {str(k): v for k, v in slope_report(out, m).items()} for m in out.methods}
    with open(os.path.join(path, "results.json"), "w", encoding="utf-8") as fh:
        json.dump(_clean(doc), fh, indent=1, allow_nan=False)

    cols = ["point", *[k for k in SWEEPABLE if any(k in r for r in summary)], "method",
            "mean_error", "improvement_pct", "failed"]
    with open(os.path.join(path, "summary.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        w.writerows(summary)

    with open(os.path.join(path, "series.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["x", "y", "series"])
        w.writeheader()
        w.writerows(series_rows(out, summary))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="multimean", description="Run multi-mean estimation experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run the methods listed in a config"),
                       ("grid", "also expand the config's parameter grid")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--config", required=True, help="JSON experiment config")
        s.add_argument("--seed", type=int, help="root seed (overrides the config)")
        s.add_argument("--trials", type=int, help="trial count (overrides the config)")
        s.add_argument("--out", default="out", help="output directory (default: ./out)")
        s.add_argument("--split", action="store_true", help="estimate on one half, test on the other")
        s.add_argument("--jobs", type=int, default=1, help="worker processes; MULTIMEAN_JOBS overrides")
        s.add_argument("-q", "--quiet", action="store_true")
    return p


def load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.trials is not None:
        changes["trials"] = args.trials
    if args.split:
        changes["split"] = True
    if changes:
        try:
            cfg = replace(cfg, **changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
    if args.command == "grid" and not cfg.grid:
        raise ConfigError("grid needs a non-empty 'grid' object in the config")
    if args.command == "run" and cfg.grid:
        cfg = replace(cfg, grid=None)
    return cfg


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args)
        out = run(cfg, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    summary = summarize(out)
    write_outputs(out, summary, args.out)
    if not args.quiet:
        for r in summary:
            imp = r.get("improvement_pct")
            tail = "" if imp is None else f"  improvement {imp:7.2f}%"
            print(f"point {r['point']:>3}  {r['method']:<28} error {r['mean_error']:.6g}{tail}")
    if out.failures:
        print(f"{len(out.failures)} method failures; see results.json", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
