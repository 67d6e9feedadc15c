"""Experiment execution: seeded trials over a worker pool, order-deterministic
gathering, and report emission (CSV + summary JSON + figures)."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..models import trial_seed
from .config import ConfigError, ExperimentConfig, resolve_constants, resolve_operator_constants
from .experiments import PLANS
from .plots import write_rate_png, write_scree_png, write_scree_svg
from .report import frequencies, write_csv, write_summary


@dataclass
class RunResult:
    config: ExperimentConfig
    summary: dict
    csv_path: Path
    summary_path: Path
    figure_paths: list[Path] = field(default_factory=list)

    @property
    def criteria_passed(self) -> bool:
        return all(c["pass"] for c in self.summary.get("criteria", []))


def run(config: ExperimentConfig) -> RunResult:
    """Execute one experiment end to end.

    Trial t (numbered across all cases in declaration order) draws from seed
    ``base_seed + t``, so reruns of the same config are byte-identical and a
    single trial can be replayed in isolation.
    """
    if config.experiment == "Calibrate":
        raise ConfigError("run() does not execute calibration; use the calibrate entry point")
    consts = resolve_constants(config)
    op_consts = resolve_operator_constants(config)
    plan = PLANS[config.experiment](config, consts, op_consts)

    jobs = []
    index = 0
    for case_idx, case in enumerate(plan.cases):
        for rep in range(config.reps):
            jobs.append((index, case_idx, case, trial_seed(config.base_seed, index), rep))
            index += 1
    workers = config.workers or min(32, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        records = list(pool.map(lambda j: plan.trial(j[2], j[3]), jobs))

    scree = None
    rows = []
    for (idx, case_idx, case, seed, rep), rec in zip(jobs, records):
        rec = dict(rec)
        if rep == 0:
            scree = rec.get("_scree", scree)
        rec = {k: v for k, v in rec.items() if not k.startswith("_")}
        rows.append({"experiment": config.experiment, "trial": idx, "seed": seed, **rec})

    extra, criteria = plan.summarize([r for r in records])
    rate_figure = extra.pop("_rate_figure", None)
    summary = {
        "experiment": config.experiment,
        "run_id": config.run_id(),
        "config": config.to_dict(),
        "constants": consts.to_dict(),
        "trials": len(rows),
        "frequencies": frequencies(rows) if any(k.startswith("ok_") for k in rows[0]) else {},
        "criteria": [c.to_dict() for c in criteria],
        **extra,
    }
    if scree is not None:
        eigenvalues, thresholds = scree
        summary["scree_example"] = {
            "eigenvalues": [float(v) for v in eigenvalues],
            "thresholds": [[label, float(level)] for label, level in thresholds],
        }
    if rate_figure is not None:
        summary["rate_figure"] = rate_figure

    outdir = config.resolved_output_dir()
    outdir.mkdir(parents=True, exist_ok=True)
    stem = f"{config.experiment.lower()}-{summary['run_id']}"
    csv_path = write_csv(rows, outdir / f"{stem}.csv")
    summary_path = write_summary(summary, outdir / f"{stem}.json")
    figures: list[Path] = []
    if config.options.get("figures", True):
        if scree is not None:
            eigenvalues, thresholds = scree
            figures.append(write_scree_svg(eigenvalues, thresholds, outdir / f"{stem}-scree.svg"))
            figures.append(
                write_scree_png(
                    eigenvalues, thresholds, outdir / f"{stem}-scree.png", title=config.experiment
                )
            )
        if rate_figure is not None:
            figures.append(
                write_rate_png(
                    rate_figure["xs"],
                    rate_figure["ys"],
                    rate_figure["slope"],
                    rate_figure["intercept"],
                    rate_figure["xlabel"],
                    rate_figure["ylabel"],
                    outdir / f"{stem}-rate.png",
                )
            )
    return RunResult(config, summary, csv_path, summary_path, figures)
