"""Command-line experiment runner: run / validate / report."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import montecarlo
from .channel import draw_channel_set
from .experiments import (
    ALGORITHMS,
    SWEEP_AXES,
    ExperimentSpec,
    read_results,
    run_experiment,
    write_plotdata,
    write_summary,
)
from .optimizer import alternating_optimization, export_trace
from .scenario import ScenarioConfig


def _parse_value(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _load_config(args) -> ScenarioConfig:
    config = ScenarioConfig.from_file(args.config) if args.config else ScenarioConfig()
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise SystemExit(f"--set expects field=value, got '{item}'")
        key, text = item.split("=", 1)
        overrides[key.strip()] = _parse_value(text.strip())
    if args.seed is not None:
        overrides["rng_seed"] = args.seed
    return config.apply_overrides(overrides) if overrides else config


def _cmd_run(args) -> int:
    config = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    spec = ExperimentSpec(
        config=config,
        axis=args.axis,
        values=tuple(float(v) for v in args.values.split(",")),
        algorithms=tuple(args.algorithms.split(",")),
        repetitions=args.reps,
        output_path=os.path.join(args.out, "results.csv"),
        jobs=args.jobs,
    )
    rows = run_experiment(spec)
    write_summary(rows, os.path.join(args.out, "summary.txt"))
    infeasible = sum(1 for r in rows if r["status"] == "infeasible")
    print(f"wrote {len(rows)} rows to {spec.output_path} "
          f"({infeasible} infeasible cells)")
    return 0


def _cmd_validate(args) -> int:
    config = _load_config(args)
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(config.rng_seed)
    channels = draw_channel_set(config, rng)
    state = alternating_optimization(channels, config, rng=rng)
    export_trace(state, os.path.join(args.out, "trace.csv"))

    checks = []
    checks.append(("converged", state.status == "converged",
                   f"status={state.status} after {state.iterations} iterations"))
    checks.append(("rank_one", state.rank_residuals[-1] <= config.rank_tol,
                   f"relative residual {state.rank_residuals[-1]:.3e}"))
    checks.append(("margins", min(state.min_id_margins[-1],
                                  state.min_eh_margins[-1]) >= -1e-6,
                   f"min margins {state.min_id_margins[-1]:.3e} / "
                   f"{state.min_eh_margins[-1]:.3e}"))

    mc_rows = []
    for k in range(channels.num_users):
        rid, reh = montecarlo.mc_joint_outage(
            state.coeff_matrix, state.power, state.split, channels, config,
            k, args.samples, rng)
        mc_rows.append(("id", k, rid))
        mc_rows.append(("eh", k, reh))
        checks.append((f"mc_id_user{k}", abs(rid.z_score) <= 4.0,
                       f"mc {rid.estimate:.5f} analytic {rid.analytic_value:.5f} "
                       f"z {rid.z_score:+.2f}"))
        checks.append((f"mc_eh_user{k}", abs(reh.z_score) <= 4.0,
                       f"mc {reh.estimate:.5f} analytic {reh.analytic_value:.5f} "
                       f"z {reh.z_score:+.2f}"))

    prop2 = montecarlo.check_prop2(channels.covariances[0], 1e-4, 100_000, rng)
    checks.append(("trace_variance", 0.9 <= prop2.estimate <= 1.1,
                   f"variance ratio {prop2.estimate:.4f}"))
    rate_err = montecarlo.check_prop1(channels, state.power, state.split,
                                      state.coeff_matrix, config, None,
                                      20_000, rng)
    checks.append(("rate_approx", rate_err <= 0.01,
                   f"worst relative error {rate_err:.2e}"))
    for name in ("coeff", "power", "split"):
        if name == "coeff":
            direction = np.eye(channels.num_elements) * 0.1
        else:
            direction = np.ones(channels.num_users)
        _, best, _ = montecarlo.linearization_gradient_check(
            name, state.coeff_matrix, state.power, state.split, channels,
            config, 0, direction)
        checks.append((f"grad_{name}", best <= 1e-5,
                       f"best relative error {best:.2e}"))

    with open(os.path.join(args.out, "validation.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["constraint", "user", "estimate", "half_width_95",
                         "num_samples", "analytic", "z_score"])
        for kind, k, rep in mc_rows:
            writer.writerow([kind, k, repr(rep.estimate), repr(rep.half_width_95),
                             rep.num_samples, repr(rep.analytic_value),
                             repr(rep.z_score)])

    failed = 0
    lines = []
    for name, ok, detail in checks:
        mark = "pass" if ok else "FAIL"
        lines.append(f"[{mark}] {name}: {detail}")
        failed += not ok
    report = "\n".join(lines)
    print(report)
    with open(os.path.join(args.out, "summary.txt"), "w") as fh:
        fh.write(report + "\n")
    return 1 if failed else 0


def _cmd_report(args) -> int:
    rows = read_results(args.results)
    os.makedirs(args.out, exist_ok=True)
    write_summary(rows, os.path.join(args.out, "summary.txt"))
    paths = write_plotdata(rows, args.out)
    print(f"wrote summary and {len(paths)} plot-data files to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rmswipt",
        description="Robust sum-rate optimization experiments for "
                    "metasurface SWIPT downlinks")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML scenario file")
    common.add_argument("--set", action="append", metavar="FIELD=VALUE",
                        help="override a config field (repeatable)")
    common.add_argument("--seed", type=int, help="override the RNG seed")

    p_run = sub.add_parser("run", parents=[common], help="run a parameter sweep")
    p_run.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p_run.add_argument("--values", required=True,
                       help="comma-separated increasing sweep values")
    p_run.add_argument("--algorithms", default=",".join(ALGORITHMS))
    p_run.add_argument("--reps", type=int, default=20)
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--out", default="results")
    p_run.set_defaults(func=_cmd_run)

    p_val = sub.add_parser("validate", parents=[common],
                           help="optimize one scenario and audit it against "
                                "Monte Carlo and finite-difference oracles")
    p_val.add_argument("--samples", type=int, default=1_000_000)
    p_val.add_argument("--out", default="validation")
    p_val.set_defaults(func=_cmd_validate)

    p_rep = sub.add_parser("report", help="aggregate a results CSV")
    p_rep.add_argument("--results", required=True)
    p_rep.add_argument("--out", default="report")
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING)
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
