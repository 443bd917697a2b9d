"""Command-line entry point: ``geolab <experiment-id> --config <path> [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .experiments import EXPERIMENTS, ConfigError, ExperimentConfig, ExperimentResult, run

GNUPLOT_TEMPLATE = """set terminal pngcairo size 800,600
set output '{name}.png'
set datafile separator ','
set key off
set xlabel '{xlabel}'
set ylabel '{ylabel}'
{logscale}plot '{data}' using {x}:{y} every ::1 with linespoints
"""


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, complex):
        return repr(v)
    return str(v)


def write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def write_outputs(result: ExperimentResult, cfg: ExperimentConfig, out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "results.csv", result.columns, result.rows)
    for name, (cols, rows) in result.tables.items():
        write_csv(out / f"{name}.csv", cols, rows)
    if result.plot is not None:
        p = result.plot
        logscale = ""
        if p.get("logx"):
            logscale += "set logscale x\n"
        if p.get("logy"):
            logscale += "set logscale y\n"
        (out / f"{p['table']}.gp").write_text(GNUPLOT_TEMPLATE.format(
            name=p["table"], data=f"{p['table']}.csv", x=p["x"], y=p["y"],
            xlabel=p.get("xlabel", ""), ylabel=p.get("ylabel", ""), logscale=logscale))
    (out / "config.txt").write_text(cfg.as_text())
    summary = {
        "experiment": result.experiment,
        "seed": cfg["seed"],
        "passed": result.passed,
        "runtime_seconds": round(result.runtime, 3),
        "assertions": [a.to_dict() for a in result.assertions],
        "reports": result.reports,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True, default=str))
    return summary


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="geolab", description="Run a geometry experiment.")
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", type=Path, help="flat key = value config file")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out", type=Path)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    text = args.config.read_text() if args.config else ""
    overrides = {"experiment": args.experiment}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = str(args.out)
    try:
        cfg = ExperimentConfig.parse(text, overrides)
    except ConfigError as exc:
        print(f"geolab: {exc}", file=sys.stderr)
        return 2
    result = run(cfg)
    summary = write_outputs(result, cfg, Path(cfg["out"]))
    for a in summary["assertions"]:
        status = "PASS" if a["pass"] else "FAIL"
        print(f"{status}  {a['name']}: {a['measured']} {a['relation']} {a['tolerance']}")
    print(f"{result.experiment}: {'all assertions passed' if result.passed else 'assertions failed'}"
          f" ({result.runtime:.1f} s)")
    return 0 if result.passed else 1


if __name__ == "__main__":
    sys.exit(main())
