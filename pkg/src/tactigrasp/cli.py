"""Command-line harness.

Subcommands:
  table1  paired convergence-rate experiment over random shapes
  sim     batch simulation campaign (vanilla / pgd / cfgd variants)
  trace   single-scenario trace
  accept  machine-readable acceptance report

Every report path writes delimited output (CSV + summary JSON) and renders a
companion PNG figure. Exit codes: 0 success, 1 failed acceptance criterion,
2 configuration error, 3 runtime failure (partial results flushed).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .errors import SchemaError

EXIT_OK = 0
EXIT_CRITERIA_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise SchemaError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise SchemaError(f"config JSON does not parse: {e}")
    if not isinstance(doc, dict):
        raise SchemaError("config root must be a JSON object")
    schema = doc.get("schema", 1)
    if schema != 1:
        raise SchemaError(f"config field 'schema' is {schema!r}; expected 1")
    return doc


def _controller_params(cfg: dict):
    from .controller import ControllerParams
    fields = cfg.get("controller", {})
    try:
        return ControllerParams.from_dict(fields)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"config field 'controller' invalid: {e}")


def cmd_table1(args) -> int:
    from .descent import DescentConfig, run_table1
    from .harness import table1_rows_to_csv
    from .reports import table1_figure, write_json

    cfg = _load_config(args.config)
    trials = args.trials if args.trials is not None else int(cfg.get("trials", 100))
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 12345))
    dcfg = DescentConfig(
        step_size=cfg.get("step_size"),
        max_iters=int(cfg.get("max_iters", 800)),
        converge_tol=math.radians(float(cfg.get("converge_tol_deg", 2.0))),
        right_angle_tol=math.radians(float(cfg.get("right_angle_tol_deg", 3.0))),
    )
    families = tuple(cfg.get("families", ("ellipsoid", "superquadric", "torus")))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        rows, rates = run_table1(trials, dcfg, rng_seed=seed, families=families,
                                 shape_ranges=cfg.get("shape_ranges"))
    except Exception as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    (out / "trials.csv").write_text(table1_rows_to_csv(rows))
    write_json(out / "summary.json",
               {"schema": 1, "trials": trials, "seed": seed, "rates": rates})
    table1_figure(rates, out / "rates.png")
    for fam, r in rates.items():
        print(f"{fam}: pgd {100 * r['pgd']:.0f}%  cfgd {100 * r['cfgd']:.0f}%")
    print(f"wrote {out / 'trials.csv'}, summary.json, rates.png")
    return EXIT_OK


def cmd_sim(args) -> int:
    from .harness import run_campaign, summarize_campaign, trace_rows_to_csv
    from .kinematics import default_model, load_model
    from .reports import RUNS_COLUMNS, campaign_figure, write_csv, write_json
    from .scenarios import DEFAULT_PERTURBATIONS, FAMILIES, SIZE_LIST, default_campaign
    from .world import NoiseParams

    cfg = _load_config(args.config)
    model = load_model(cfg["robot"]) if cfg.get("robot") else default_model()
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 1))
    params = _controller_params(cfg)
    if args.method:
        variants = ("vanilla", args.method)
    else:
        variants = tuple(cfg.get("variants", ("vanilla", "pgd", "cfgd")))
    families = tuple(cfg.get("families", FAMILIES))
    sizes = tuple(cfg.get("sizes", SIZE_LIST))
    perturbations = cfg.get("perturbations")
    if perturbations is not None:
        perturbations = {f: tuple((k, float(m)) for k, m in v)
                         for f, v in perturbations.items()}
    scenarios = default_campaign(model, base_seed=seed, params=params,
                                 families=families, sizes=sizes,
                                 perturbations=perturbations)
    if cfg.get("noise"):
        noise = NoiseParams(**cfg["noise"])
        for sc in scenarios:
            sc.noise = noise
    out = Path(args.out)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    rows = []
    try:
        rows, traces = run_campaign(model, scenarios, variants,
                                    threads=args.threads)
        for (name, variant), trace in traces.items():
            (out / "traces" / f"{name}_{variant}.csv").write_text(
                trace_rows_to_csv(trace))
    except Exception as e:
        write_csv(out / "runs.csv", RUNS_COLUMNS, rows)
        print(f"runtime failure (partial results flushed): {e}", file=sys.stderr)
        return EXIT_RUNTIME
    write_csv(out / "runs.csv", RUNS_COLUMNS, rows)
    summary = summarize_campaign(rows)
    write_json(out / "summary.json", summary)
    campaign_figure(rows, out / "angles.png")
    for v, s in summary["variants"].items():
        print(f"{v}: stable {100 * s['stable_rate']:.0f}%  "
              f"median angle {s['median_final_angle_deg']:.2f} deg")
    if "paired_cfgd_le_vanilla_rate" in summary:
        print(f"paired cfgd <= vanilla: "
              f"{100 * summary['paired_cfgd_le_vanilla_rate']:.0f}%")
    print(f"wrote {out / 'runs.csv'}, summary.json, angles.png, traces/")
    return EXIT_OK


def cmd_trace(args) -> int:
    from .harness import trace_rows_to_csv
    from .kinematics import default_model, load_model
    from .reports import trace_figure, write_json
    from .scenarios import build_scenario
    from .world import NoiseParams, Perturbation, run_scenario

    cfg = _load_config(args.config)
    model = load_model(cfg["robot"]) if cfg.get("robot") else default_model()
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    variant = args.method or cfg.get("variant", "cfgd")
    pert = cfg.get("perturbation", {})
    scenario = build_scenario(
        model, cfg.get("family", "ellipsoid"), float(cfg.get("size", 0.1)),
        Perturbation(pert.get("kind", "none"), float(pert.get("magnitude", 0.0))),
        seed, params=_controller_params(cfg),
        noise=NoiseParams(**cfg.get("noise", {})))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        res = run_scenario(model, scenario, variant)
    except Exception as e:
        print(f"runtime failure: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    (out / "trace.csv").write_text(trace_rows_to_csv(res.rows))
    write_json(out / "result.json", {
        "schema": 1, "scenario": scenario.name, "variant": variant,
        "outcome": res.outcome, "final_mean_angle_deg": res.final_mean_angle_deg,
        "time_to_stop_s": res.time_to_stop,
        "mode_transitions": res.mode_transitions,
        "integration_steps": res.integration_steps,
        "sensor_samples": res.sensor_samples, "qp_solves": res.qp_solves})
    trace_figure(res.rows, out / "trace.png", title=scenario.name)
    print(f"{scenario.name} [{variant}]: {res.outcome}, "
          f"final mean angle {res.final_mean_angle_deg:.2f} deg "
          f"at t={res.time_to_stop:.2f}s")
    print(f"wrote {out / 'trace.csv'}, result.json, trace.png")
    return EXIT_OK


def cmd_accept(args) -> int:
    from .acceptance import results_to_dict, run_acceptance
    from .kinematics import load_model
    from .reports import write_json

    if args.robot:
        load_model(args.robot)  # validate; SchemaError -> exit 2
    results, ok = run_acceptance(args.filter)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_json(out / "acceptance.json", results_to_dict(results))
        print(f"wrote {out / 'acceptance.json'}")
    return EXIT_OK if ok else EXIT_CRITERIA_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tactigrasp",
        description="Tactile-reactive antipodal grasp adjustment: descent "
                    "experiments, simulation campaigns, and acceptance checks.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials=False, method=False, threads=False, filt=False):
        p.add_argument("--config", default=None, help="JSON config path")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        if trials:
            p.add_argument("--trials", type=int, default=None,
                           help="trials per shape family")
        if method:
            p.add_argument("--method", choices=("pgd", "cfgd", "vanilla"),
                           default=None, help="controller variant override")
        if threads:
            p.add_argument("--threads", type=int, default=1,
                           help="worker processes (1 = deterministic reference)")
        if filt:
            p.add_argument("--filter", default=None,
                           help="run only criteria whose name contains this")

    p = sub.add_parser("table1", help="convergence-rate experiment")
    common(p, trials=True)
    p.set_defaults(fn=cmd_table1)

    p = sub.add_parser("sim", help="batch simulation campaign")
    common(p, method=True, threads=True)
    p.set_defaults(fn=cmd_sim)

    p = sub.add_parser("trace", help="single-scenario trace")
    common(p, method=True)
    p.set_defaults(fn=cmd_trace)

    p = sub.add_parser("accept", help="run the acceptance suite")
    p.add_argument("--out", default=None, help="directory for acceptance.json")
    p.add_argument("--filter", default=None,
                   help="run only criteria whose name contains this")
    p.add_argument("--robot", default=None,
                   help="robot model JSON to validate and use")
    p.set_defaults(fn=cmd_accept)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SchemaError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
