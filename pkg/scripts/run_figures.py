#!/usr/bin/env python3
"""Run the standard experiment sweeps and render summary figures.

Each sweep config in configs/ is executed through the experiment harness,
its per-value NMSE/FAN/cost table written to results/<name>.csv, and a
reconstruction-error figure rendered to results/<name>.png when matplotlib
is importable.  At the shipped trial counts the four sweeps together take
roughly half an hour of simulation on one core; use --trials for a quick
pass (--trials 8 finishes in a few minutes) and --only to run a subset.

    python3 scripts/run_figures.py --trials 8 --only sweep_snr
"""

import argparse
import csv
import io
import sys
import time
from pathlib import Path

from censorcs import cli

SWEEPS = ("sweep_beta", "sweep_alpha", "sweep_m", "sweep_snr")
LABELS = {
    "cs_l1": "uncensored l1",
    "csc_l1": "censored, stacked l1",
    "csc_modified_l1": "censored, weighted l1",
}


def load_config(path: Path, trials: int | None, seed: int | None):
    pairs = cli.parse_config_text(path.read_text())
    if trials is not None:
        pairs["trials"] = str(trials)
    if seed is not None:
        pairs["seed"] = str(seed)
    return cli.build_config(pairs)


def render(rows: list[dict], out_png: Path) -> bool:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return False
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    sweep_param = rows[0]["sweep_param"]
    for protocol, label in LABELS.items():
        chosen = [r for r in rows if r["protocol"] == protocol]
        if not chosen:
            continue
        x = [float(r["sweep_value"]) for r in chosen]
        y = [float(r["nmse_db"]) for r in chosen]
        lo = [float(r["nmse_db_lo"]) for r in chosen]
        hi = [float(r["nmse_db_hi"]) for r in chosen]
        line, = ax.plot(x, y, marker="o", label=label)
        ax.fill_between(x, lo, hi, alpha=0.15, color=line.get_color())
    ax.set_xlabel(sweep_param)
    ax.set_ylabel("NMSE [dB]")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_png, dpi=150)
    plt.close(fig)
    return True


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--configs", default="configs", help="config directory")
    parser.add_argument("--results", default="results", help="output directory")
    parser.add_argument("--trials", type=int, help="override trials per point")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument(
        "--only", action="append", choices=SWEEPS,
        help="run just these sweeps (repeatable)",
    )
    args = parser.parse_args(argv)
    config_dir = Path(args.configs)
    results = Path(args.results)
    results.mkdir(parents=True, exist_ok=True)
    names = tuple(args.only) if args.only else SWEEPS
    status = 0
    for name in names:
        cfg = load_config(config_dir / f"{name}.cfg", args.trials, args.seed)
        start = time.time()
        csv_text, failure_fraction = cli.run_sweep(
            cfg, progress=lambda msg: print(f"  {msg}", file=sys.stderr)
        )
        out_csv = results / f"{name}.csv"
        out_csv.write_text(csv_text)
        rows = list(csv.DictReader(io.StringIO(csv_text)))
        plotted = render(rows, results / f"{name}.png")
        print(
            f"{name}: {len(rows)} rows -> {out_csv}"
            f"{' (+png)' if plotted else ''}, {time.time() - start:.0f}s"
        )
        if failure_fraction > cli.MAX_FAILURE_FRACTION:
            print(
                f"{name}: solver failure fraction {failure_fraction:.3f}",
                file=sys.stderr,
            )
            status = 3
    return status


if __name__ == "__main__":
    sys.exit(main())
