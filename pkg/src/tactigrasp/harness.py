"""Campaign orchestration shared by the CLI and the acceptance suite.

Scenarios run across a worker pool when requested; each scenario owns its
seed-derived RNG stream, so parallel and serial execution produce the same
rows. A single collector orders output by (scenario index, variant).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .reports import RUNS_COLUMNS, TABLE1_COLUMNS, rows_to_csv_text
from .world import TRACE_COLUMNS, Scenario, ScenarioResult, run_scenario

DEFAULT_VARIANTS = ("vanilla", "pgd", "cfgd")


def table1_rows_to_csv(rows) -> str:
    out = [(r.family, r.trial, r.shape_params, r.method, r.status,
            r.final_f_rad, r.iters, r.seed) for r in rows]
    return rows_to_csv_text(TABLE1_COLUMNS, out)


def trace_rows_to_csv(trace_rows) -> str:
    return rows_to_csv_text(TRACE_COLUMNS, trace_rows)


def run_row(scenario: Scenario, variant: str, res: ScenarioResult) -> tuple:
    meta = scenario.meta
    return (scenario.name, meta.get("family", scenario.surface.kind),
            meta.get("size", float("nan")), meta.get("perturbation", "none"),
            meta.get("magnitude", 0.0), scenario.seed, variant, res.outcome,
            res.final_mean_angle_deg, res.time_to_stop, res.mode_transitions,
            res.integration_steps, res.sensor_samples, res.qp_solves)


def _work(args):
    idx, variant, model, scenario = args
    res = run_scenario(model, scenario, variant)
    return idx, variant, res


def run_campaign(model, scenarios, variants=DEFAULT_VARIANTS, threads: int = 1,
                 keep_traces: bool = True):
    """Run every (scenario, variant) pair. Returns (run_rows, traces) where
    traces maps (scenario_name, variant) to trace rows."""
    tasks = [(i, v, model, sc)
             for i, sc in enumerate(scenarios) for v in variants]
    results: dict[tuple[int, str], ScenarioResult] = {}
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for idx, variant, res in pool.map(_work, tasks):
                results[(idx, variant)] = res
    else:
        for t in tasks:
            idx, variant, res = _work(t)
            results[(idx, variant)] = res
    rows = []
    traces = {}
    for i, sc in enumerate(scenarios):
        for v in variants:
            res = results[(i, v)]
            rows.append(run_row(sc, v, res))
            if keep_traces:
                traces[(sc.name, v)] = res.rows
    return rows, traces


def summarize_campaign(run_rows) -> dict:
    """Aggregates recomputable from the row data (and asserted so in tests)."""
    variants = []
    for row in run_rows:
        if row[6] not in variants:
            variants.append(row[6])
    summary = {"schema": 1, "runs": len(run_rows), "variants": {}}
    for v in variants:
        rows = [r for r in run_rows if r[6] == v]
        angles = np.array([r[8] for r in rows], dtype=float)
        finite = angles[np.isfinite(angles)]
        stable = sum(1 for r in rows if r[7] == "stable")
        summary["variants"][v] = {
            "runs": len(rows),
            "stable_rate": stable / len(rows) if rows else float("nan"),
            "mean_final_angle_deg": float(np.mean(finite)) if finite.size else float("nan"),
            "median_final_angle_deg": float(np.median(finite)) if finite.size else float("nan"),
            "p90_final_angle_deg": float(np.percentile(finite, 90)) if finite.size else float("nan"),
        }
    if "cfgd" in variants and "vanilla" in variants:
        pairs = {}
        for r in run_rows:
            pairs.setdefault(r[0], {})[r[6]] = r[8]
        wins = total = 0
        for vals in pairs.values():
            if "cfgd" in vals and "vanilla" in vals:
                total += 1
                if vals["cfgd"] <= vals["vanilla"] + 1e-9:
                    wins += 1
        summary["paired_cfgd_le_vanilla_rate"] = wins / total if total else float("nan")
    return summary
