"""Experiment runner.

Subcommands:

- ``compare``: run the configured algorithms on shared drops and emit
  per-drop rates, convergence traces, overhead counts, stored decisions,
  and rendered figures.
- ``ddm-export``: write a training dataset (drops + first-step features).
- ``ddm-eval``: score a trained allocator's decision file against a dataset
  and/or evaluate time-step-truncated numerical algorithms.
- ``validate``: run the oracle self-check suites and exit nonzero on any
  failure.

The ``CFRB_WORKERS`` environment variable sets the drop-level worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import distributed, learned, validation
from .ota import PilotNoiseConfig, overhead_accounting
from .scenario import (STREAM_INIT, STREAM_PILOT_NOISE, Scenario,
                       desk_scenario, generate_drop, load_scenario)
from .wmmse import CentralizedConfig, centralized_wmmse, initial_decisions

ALGORITHMS = ("centralized", "sequential", "clustered", "parallel")


def build_scenario(args) -> Scenario:
    if getattr(args, "scenario", None):
        scenario = load_scenario(args.scenario)
    elif getattr(args, "profile", "desk") == "paper":
        scenario = Scenario()
    else:
        scenario = desk_scenario()
    if getattr(args, "seed", None) is not None:
        scenario = Scenario.from_dict({**scenario.to_dict(),
                                       "seed": args.seed})
    return scenario


def make_schedule(scenario: Scenario, algo: str) -> distributed.UpdateSchedule:
    if algo == "sequential":
        return distributed.UpdateSchedule.sequential(scenario.n_aps)
    if algo == "clustered":
        return distributed.UpdateSchedule.clustered(scenario.clusters)
    if algo == "parallel":
        return distributed.UpdateSchedule.parallel(scenario.n_aps)
    raise ValueError(f"unknown algorithm {algo!r}")


def run_one_drop(task: tuple) -> dict:
    """Worker entry: run one algorithm on one drop (picklable args only)."""
    scenario_dict, algo, drop_index, mode, max_iterations, snr_db, \
        max_time_steps = task
    scenario = Scenario.from_dict(scenario_dict)
    chan = generate_drop(scenario, drop_index)
    rng = scenario.drop_rng(drop_index, STREAM_INIT)

    if algo == "centralized":
        cfg = CentralizedConfig(max_iterations=max_iterations)
        v, trace = centralized_wmmse(chan, scenario.p_ap_w, cfg, rng=rng)
    else:
        noise = PilotNoiseConfig(snr_db=snr_db) if mode == "ota-noisy" else None
        cfg = distributed.RunConfig(max_iterations=max_iterations,
                                    pilot_noise=noise,
                                    max_time_steps=max_time_steps)
        res = distributed.run(
            chan, make_schedule(scenario, algo), scenario.p_ap_w,
            scenario.p_ue_w, cfg, mode="genie" if mode == "genie" else mode,
            rng=rng,
            noise_rng=scenario.drop_rng(drop_index, STREAM_PILOT_NOISE))
        v, trace = res.decisions, res.trace

    counts = overhead_accounting(trace)
    from .metrics import sum_rate_per_subcarrier  # local: keeps workers light
    return {
        "algorithm": algo, "drop": drop_index,
        "sr": sum_rate_per_subcarrier(chan, v),
        "iterations": trace.iterations, "converged": trace.converged,
        "dl_phases": counts.dl_phases, "ul_phases": counts.ul_phases,
        "trace": {
            "sr_per_subcarrier": trace.sr_per_subcarrier,
            "objective": trace.objective,
            "surrogate": trace.surrogate,
            "decision_change": trace.decision_change,
            "dl_phases": trace.dl_phases,
            "ul_phases": trace.ul_phases,
        },
        "decisions": [(drop_index, n, v[n]) for n in range(chan.n_aps)],
    }


def _n_workers() -> int:
    return max(1, int(os.environ.get("CFRB_WORKERS", "1")))


def _map_tasks(tasks):
    workers = _n_workers()
    if workers == 1:
        return [run_one_drop(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_one_drop, tasks))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_compare(args) -> int:
    scenario = build_scenario(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    algos = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    for a in algos:
        if a not in ALGORITHMS:
            raise SystemExit(f"unknown algorithm {a!r}; "
                             f"choose from {ALGORITHMS}")

    summary_rows, per_drop_rows = [], []
    for algo in algos:
        tasks = [(scenario.to_dict(), algo, d, args.mode,
                  args.max_iterations, args.pilot_snr_db, None)
                 for d in range(args.drops)]
        results = _map_tasks(tasks)
        results.sort(key=lambda r: r["drop"])

        trace_rows = []
        for r in results:
            t = r["trace"]
            for i in range(len(t["sr_per_subcarrier"])):
                trace_rows.append([
                    algo, r["drop"], i + 1, t["sr_per_subcarrier"][i],
                    t["objective"][i], t["surrogate"][i],
                    t["decision_change"][i], t["dl_phases"][i],
                    t["ul_phases"][i]])
            per_drop_rows.append([algo, r["drop"], r["sr"], r["iterations"],
                                  r["converged"], r["dl_phases"],
                                  r["ul_phases"]])
        _write_csv(out / f"trace_{algo}.csv",
                   ["algorithm", "drop", "iteration", "sr_per_subcarrier",
                    "objective", "surrogate", "decision_change", "dl_phases",
                    "ul_phases"], trace_rows)

        entries = [e for r in results for e in r["decisions"]]
        learned.write_decisions(out / f"decisions_{algo}.jsonl", entries)

        srs = np.array([r["sr"] for r in results])
        summary_rows.append([
            algo, args.drops, float(np.mean(srs)), float(np.std(srs)),
            float(np.mean([r["iterations"] for r in results])),
            int(sum(r["dl_phases"] for r in results)),
            int(sum(r["ul_phases"] for r in results))])
        print(f"{algo:12s} mean SR/C {np.mean(srs):10.3f} "
              f"(std {np.std(srs):.3f}) over {args.drops} drops")

    _write_csv(out / "per_drop.csv",
               ["algorithm", "drop", "sr_per_subcarrier", "iterations",
                "converged", "dl_phases", "ul_phases"], per_drop_rows)
    _write_csv(out / "mean_sr.csv",
               ["algorithm", "drops", "mean_sr_per_subcarrier",
                "std_sr_per_subcarrier", "mean_iterations", "dl_phases_total",
                "ul_phases_total"], summary_rows)

    if not args.no_figures:
        from . import plots
        for p in plots.render_compare_figures(out):
            print(f"figure: {p}")
    return 0


def cmd_ddm_export(args) -> int:
    scenario = build_scenario(args)
    learned.export_dataset(scenario, args.drops, args.out)
    print(f"wrote {args.drops} drops to {args.out}")
    return 0


def cmd_ddm_eval(args) -> int:
    dataset = learned.load_dataset(args.dataset)
    scenario = dataset.scenario
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    if args.decisions:
        report = learned.evaluate_decisions(
            dataset, learned.import_decisions(args.decisions))
        _write_csv(out / "decision_eval.csv",
                   ["drop", "sr_per_subcarrier"],
                   [[r.drop_id, r.sr_per_subcarrier] for r in report.rows])
        print(f"imported decisions: mean SR/C {report.mean_sr:.3f} "
              f"over {len(report.rows)} drops")

    if args.steps:
        from .metrics import sum_rate_per_subcarrier
        steps_list = [int(s) for s in args.steps.split(",")]
        algos = [a.strip() for a in args.algorithms.split(",")
                 if a.strip() and a.strip() != "centralized"]
        noise = (PilotNoiseConfig(snr_db=args.pilot_snr_db)
                 if args.mode == "ota-noisy" else None)
        rows = []
        for algo in algos:
            for steps in steps_list:
                srs = []
                for drop in dataset.drops:
                    cfg = distributed.RunConfig(
                        max_iterations=args.max_iterations,
                        max_time_steps=steps, pilot_noise=noise)
                    res = distributed.run(
                        drop.chan, make_schedule(scenario, algo),
                        scenario.p_ap_w, scenario.p_ue_w, cfg,
                        mode=args.mode, v0=drop.v0,
                        noise_rng=scenario.drop_rng(drop.drop_id,
                                                    STREAM_PILOT_NOISE))
                    srs.append(sum_rate_per_subcarrier(drop.chan,
                                                       res.v_last))
                rows.append([algo, steps, float(np.mean(srs))])
                print(f"{algo:12s} steps {steps:4d} "
                      f"mean SR/C {np.mean(srs):10.3f}")
        _write_csv(out / "sr_vs_steps.csv",
                   ["algorithm", "steps", "mean_sr_per_subcarrier"], rows)
        if not args.no_figures:
            from . import plots
            for p in plots.render_steps_figure(out):
                print(f"figure: {p}")
    return 0


def cmd_validate(args) -> int:
    results = validation.run_all(seed=args.seed)
    all_ok = True
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
        all_ok = all_ok and bool(r.passed)
    print(json.dumps({"passed": all_ok,
                      "suites": {r.name: bool(r.passed) for r in results}}))
    return 0 if all_ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cellfree-rb",
        description="Resource-block allocation experiments for cell-free "
                    "OFDM networks")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scenario_flags(p):
        p.add_argument("--scenario", help="scenario YAML file")
        p.add_argument("--profile", choices=("desk", "paper"), default="desk",
                       help="built-in scenario profile when no file is given")
        p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("compare", help="compare algorithms on shared drops")
    add_scenario_flags(p)
    p.add_argument("--drops", type=int, default=20)
    p.add_argument("--mode", choices=distributed.MODES, default="ota")
    p.add_argument("--algorithms", default=",".join(ALGORITHMS))
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--pilot-snr-db", type=float, default=20.0)
    p.add_argument("--out", default="results/compare")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ddm-export", help="export a training dataset")
    add_scenario_flags(p)
    p.add_argument("--drops", type=int, default=20)
    p.add_argument("--out", required=True, help="dataset file to write")
    p.set_defaults(func=cmd_ddm_export)

    p = sub.add_parser("ddm-eval", help="evaluate allocator decisions and "
                                        "step-truncated algorithms")
    p.add_argument("--dataset", required=True)
    p.add_argument("--decisions", help="decision file from a trainer")
    p.add_argument("--steps", help="comma list of time-step budgets")
    p.add_argument("--algorithms", default="sequential,clustered,parallel")
    p.add_argument("--mode", choices=distributed.MODES, default="ota")
    p.add_argument("--pilot-snr-db", type=float, default=20.0)
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--out", default="results/ddm")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_ddm_eval)

    p = sub.add_parser("validate", help="run the oracle self-check suites")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
