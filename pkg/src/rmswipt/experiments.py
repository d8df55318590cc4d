"""Sweep experiments over benchmark algorithms with paired channel draws.

Every repetition index maps to one channel realization shared by all
algorithms at that sweep point (paired comparison); sweep axes that
change the problem dimensions (element or user counts) re-derive the
draw per value. Results are plain rows written as CSV with a stable
schema; every row carries the configuration hash and the seed material
of its channel draw, so a rerun reproduces the file byte for byte.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import ChannelSet, draw_channel_set
from .optimizer import InfeasibleScenarioError, SolutionState, alternating_optimization
from .scenario import ScenarioConfig

logger = logging.getLogger(__name__)

__all__ = [
    "ExperimentSpec",
    "SWEEP_AXES",
    "ALGORITHMS",
    "run_experiment",
    "run_benchmark_variant",
    "write_results",
    "read_results",
    "summarize",
    "write_summary",
    "write_plotdata",
]

SWEEP_AXES = ("max_power", "num_elements", "num_users", "energy_threshold",
              "noise", "error_std")
ALGORITHMS = ("proposed", "random_phase", "equal_power", "fixed_rho")

CSV_FIELDS = ("axis", "value", "algorithm", "repetition", "seed", "config_hash",
              "status", "sum_rate", "iterations", "rank_residual",
              "min_id_margin", "min_eh_margin", "restored", "extra")


@dataclass(frozen=True)
class ExperimentSpec:
    config: ScenarioConfig
    axis: str
    values: tuple
    algorithms: tuple = ALGORITHMS
    repetitions: int = 20
    output_path: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.axis not in SWEEP_AXES:
            raise ValueError(f"axis must be one of {SWEEP_AXES}, got '{self.axis}'")
        vals = tuple(float(v) for v in self.values)
        if len(vals) == 0 or any(b <= a for a, b in zip(vals, vals[1:])):
            raise ValueError("sweep values must be strictly increasing")
        object.__setattr__(self, "values", vals)
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise ValueError(f"unknown algorithm '{alg}'")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")


def _config_for(base: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "max_power":
        return base.replace(max_power=value)
    if axis == "num_elements":
        side = math.isqrt(int(round(value)))
        if side * side != int(round(value)):
            raise ValueError("element counts must be perfect squares for a "
                             "square planar array")
        return base.replace(elements_x=side, elements_z=side)
    if axis == "num_users":
        return base.replace(num_users=int(round(value)))
    if axis == "energy_threshold":
        return base.replace(energy_threshold=value)
    if axis == "noise":
        return base.replace(antenna_noise=value, decoder_noise=value)
    if axis == "error_std":
        return base.replace(error_variance=value ** 2)
    raise ValueError(axis)


def _dims_change(axis: str) -> bool:
    return axis in ("num_elements", "num_users")


def _cell_seed_words(spec: ExperimentSpec, value: float, rep: int) -> list[int]:
    words = [spec.config.rng_seed, rep]
    if _dims_change(spec.axis):
        words.append(int(round(value)))
    return words


def run_benchmark_variant(name: str, channels: ChannelSet, config: ScenarioConfig,
                          rng=None) -> SolutionState:
    """Run one algorithm variant; frozen blocks keep their initial values."""
    if name == "proposed":
        return alternating_optimization(channels, config, rng=rng)
    if name == "random_phase":
        return alternating_optimization(channels, config, optimize_coeff=False,
                                        rng=rng)
    if name == "equal_power":
        return alternating_optimization(channels, config, optimize_power=False,
                                        rng=rng)
    if name == "fixed_rho":
        return alternating_optimization(channels, config, optimize_split=False,
                                        rng=rng)
    raise ValueError(f"unknown benchmark variant '{name}'")


def _run_cell(args):
    spec, value, rep = args
    config = _config_for(spec.config, spec.axis, value)
    words = _cell_seed_words(spec, value, rep)
    channel_rng = np.random.default_rng(np.random.SeedSequence(words))
    channels = draw_channel_set(config, channel_rng)
    extra = ""
    if spec.axis == "error_std":
        # expected spectral norm of the error matrix (semicircle edge)
        extra = repr(2.0 * value * math.sqrt(config.num_elements))

    rows = []
    for alg in spec.algorithms:
        init_rng = np.random.default_rng(np.random.SeedSequence(words + [1]))
        row = {
            "axis": spec.axis, "value": repr(value), "algorithm": alg,
            "repetition": rep, "seed": "-".join(str(w) for w in words),
            "config_hash": config.content_hash(), "extra": extra,
        }
        try:
            state = run_benchmark_variant(alg, channels, config, rng=init_rng)
            row.update(status=state.status, sum_rate=repr(float(state.sum_rate)),
                       iterations=state.iterations,
                       rank_residual=repr(float(state.rank_residuals[-1])),
                       min_id_margin=repr(float(state.min_id_margins[-1])),
                       min_eh_margin=repr(float(state.min_eh_margins[-1])),
                       restored=int(state.restored))
        except InfeasibleScenarioError as exc:
            row.update(status="infeasible", sum_rate="", iterations=0,
                       rank_residual="", min_id_margin="", min_eh_margin="",
                       restored="")
            logger.info("cell (%s=%s, rep %d, %s) infeasible: %s",
                        spec.axis, value, rep, alg, exc)
        rows.append(row)
    return rows


def run_experiment(spec: ExperimentSpec) -> list[dict]:
    """Run the sweep and return result rows (also written to output_path)."""
    cells = [(spec, value, rep) for value in spec.values
             for rep in range(spec.repetitions)]
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            per_cell = list(pool.map(_run_cell, cells))
    else:
        per_cell = [_run_cell(c) for c in cells]
    rows = [row for cell_rows in per_cell for row in cell_rows]
    if spec.output_path:
        write_results(rows, spec.output_path)
    return rows


def write_results(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_results(path) -> list[dict]:
    with open(path) as fh:
        return list(csv.DictReader(fh))


def summarize(rows: list[dict]) -> list[dict]:
    """Per (value, algorithm) mean sum rate over feasible repetitions."""
    groups: dict = {}
    for row in rows:
        key = (float(row["value"]), row["algorithm"])
        groups.setdefault(key, []).append(row)
    out = []
    for (value, alg), members in sorted(groups.items()):
        rates = [float(r["sum_rate"]) for r in members if r["status"] != "infeasible"
                 and r["sum_rate"] != ""]
        out.append({
            "value": value,
            "algorithm": alg,
            "mean_sum_rate": float(np.mean(rates)) if rates else float("nan"),
            "feasible": len(rates),
            "total": len(members),
        })
    return out


def paired_differences(rows: list[dict], baseline: str, other: str) -> dict:
    """Per sweep value, mean of (baseline - other) over commonly feasible reps."""
    by_key: dict = {}
    for row in rows:
        by_key[(float(row["value"]), row["algorithm"], int(row["repetition"]))] = row
    values = sorted({float(r["value"]) for r in rows})
    reps = sorted({int(r["repetition"]) for r in rows})
    out = {}
    for value in values:
        diffs = []
        for rep in reps:
            a = by_key.get((value, baseline, rep))
            b = by_key.get((value, other, rep))
            if not a or not b or a["sum_rate"] == "" or b["sum_rate"] == "":
                continue
            diffs.append(float(a["sum_rate"]) - float(b["sum_rate"]))
        out[value] = float(np.mean(diffs)) if diffs else float("nan")
    return out


def write_summary(rows: list[dict], path) -> None:
    summary = summarize(rows)
    algs = sorted({s["algorithm"] for s in summary})
    with open(path, "w") as fh:
        fh.write(f"{'value':>14} {'algorithm':>14} {'mean_rate':>12} "
                 f"{'feasible':>9}\n")
        for s in summary:
            fh.write(f"{s['value']:>14.6g} {s['algorithm']:>14} "
                     f"{s['mean_sum_rate']:>12.5f} "
                     f"{s['feasible']:>4d}/{s['total']:<4d}\n")
        if "proposed" in algs:
            for other in algs:
                if other == "proposed":
                    continue
                diffs = paired_differences(rows, "proposed", other)
                fh.write(f"\npaired mean (proposed - {other}):\n")
                for value, diff in diffs.items():
                    fh.write(f"{value:>14.6g} {diff:>+12.5f}\n")


def write_plotdata(rows: list[dict], directory) -> list[str]:
    """One whitespace-delimited file per algorithm: value, mean rate, counts."""
    import os

    summary = summarize(rows)
    axis = rows[0]["axis"] if rows else "value"
    paths = []
    for alg in sorted({s["algorithm"] for s in summary}):
        path = os.path.join(directory, f"rate_vs_{axis}_{alg}.dat")
        with open(path, "w") as fh:
            fh.write(f"# {axis} mean_sum_rate feasible total\n")
            for s in summary:
                if s["algorithm"] != alg:
                    continue
                fh.write(f"{s['value']:.10g} {s['mean_sum_rate']:.10g} "
                         f"{s['feasible']} {s['total']}\n")
        paths.append(path)
    return paths
