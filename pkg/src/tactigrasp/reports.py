"""Delimited outputs and report figures.

CSV cells are written with repr() so floats round-trip losslessly; every
report path renders a companion PNG next to the delimited file. matplotlib
is imported lazily with the Agg backend so headless runs and fast CLI paths
never touch a display.
"""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

TABLE1_COLUMNS = ("family", "trial", "shape_params", "method", "status",
                  "final_f_rad", "iters", "seed")

RUNS_COLUMNS = ("scenario", "family", "size", "perturbation", "magnitude",
                "seed", "variant", "outcome", "final_mean_angle_deg",
                "time_to_stop_s", "mode_transitions", "integration_steps",
                "sensor_samples", "qp_solves")


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (dict, list)):
        return json.dumps(v, sort_keys=True)
    return str(v)


def rows_to_csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(rows_to_csv_text(header, rows))
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [tuple(row) for row in reader]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _plt():
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt
    return plt


def table1_figure(rates: dict, path) -> Path:
    """Grouped bars of convergence rate per shape family and method."""
    plt = _plt()
    families = list(rates.keys())
    x = np.arange(len(families))
    width = 0.35
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for off, method, color in ((-width / 2, "pgd", "#c44e52"),
                               (width / 2, "cfgd", "#4c72b0")):
        vals = [100.0 * rates[f][method] for f in families]
        ax.bar(x + off, vals, width, label=method.upper(), color=color)
        for xi, v in zip(x + off, vals):
            ax.text(xi, v + 1.5, f"{v:.0f}%", ha="center", fontsize=8)
    ax.set_xticks(x)
    ax.set_xticklabels(families)
    ax.set_ylabel("converged (%)")
    ax.set_ylim(0, 112)
    ax.set_title("Antipodal convergence rate by descent method")
    ax.legend(frameon=False)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def campaign_figure(run_rows, path) -> Path:
    """Distribution of the final mean angle at stop, per controller variant."""
    plt = _plt()
    variants = []
    for row in run_rows:
        if row[6] not in variants:
            variants.append(row[6])
    fig, ax = plt.subplots(figsize=(6, 3.5))
    data = []
    for v in variants:
        vals = [row[8] for row in run_rows if row[6] == v and math.isfinite(row[8])]
        data.append(vals)
    ax.boxplot(data, tick_labels=[v.upper() for v in variants], showfliers=True)
    ax.axhline(10.0, color="#888", lw=0.8, ls="--", label="stability threshold")
    ax.set_ylabel("final mean angle (deg)")
    ax.set_title("Mean angle at stop by controller variant")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def trace_figure(trace_rows, path, title="") -> Path:
    """Mean-angle timeline with both-contact markers and mode bands."""
    plt = _plt()
    t = np.array([r[0] for r in trace_rows], dtype=float)
    f = np.array([r[4] for r in trace_rows], dtype=float)
    both = np.array([bool(r[5]) and bool(r[6]) for r in trace_rows])
    mean_deg = np.degrees(0.5 * f)
    fig, ax = plt.subplots(figsize=(6.5, 3.2))
    ax.plot(t, mean_deg, color="#4c72b0", lw=1.0, label="mean angle")
    ax.plot(t[both], mean_deg[both], ".", color="#c44e52", ms=3,
            label="both tips in contact")
    modes = [r[1] for r in trace_rows]
    start = 0
    colors = {"reaching": "#f0f0f0", "closing": "#fff3d4",
              "adjusting": "#e8f0e8", "stable": "#dce8f5"}
    for i in range(1, len(modes) + 1):
        if i == len(modes) or modes[i] != modes[start]:
            ax.axvspan(t[start], t[min(i, len(t) - 1)],
                       color=colors.get(modes[start], "#ffffff"), zorder=0)
            start = i
    ax.axhline(10.0, color="#888", lw=0.8, ls="--")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("mean angle (deg)")
    if title:
        ax.set_title(title, fontsize=10)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
