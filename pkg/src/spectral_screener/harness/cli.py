"""Command line interface: run, calibrate, audit, plot.

Exit codes: 0 success, 2 configuration error, 3 acceptance-check failure when
--assert is passed.  The SPECTRAL_SCREENER_OUT environment variable overrides
the configured output directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, ExperimentConfig, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSERT = 3


def _parse_int_list(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.replace(",", " ").split())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spectral-screener",
        description="Monte Carlo verification harness for covariance spectrum screening rules.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment from a JSON config")
    run_p.add_argument("--config", type=Path, help="JSON experiment config")
    run_p.add_argument("--experiment", help="experiment name (overrides config)")
    run_p.add_argument("--n-list", type=_parse_int_list, help="comma separated sample sizes")
    run_p.add_argument("--m-list", type=_parse_int_list, help="comma separated grid sizes")
    run_p.add_argument("--reps", type=int, help="trials per case")
    run_p.add_argument("--base-seed", type=int, help="seed of trial 0")
    run_p.add_argument("--alpha", type=float, help="target precision in (0,1)")
    run_p.add_argument("--out", help="output directory")
    run_p.add_argument("--workers", type=int, help="worker pool size (default: cores)")
    run_p.add_argument(
        "--assert",
        dest="assert_criteria",
        action="store_true",
        help="exit 3 when any summary criterion fails",
    )

    cal_p = sub.add_parser("calibrate", help="fit the bound constants on a reference model")
    cal_p.add_argument("--config", type=Path, help="JSON calibration config")
    cal_p.add_argument("--out", help="output directory for the constants sidecar")
    cal_p.add_argument("--base-seed", type=int, default=20_000)
    cal_p.add_argument("--workers", type=int)

    audit_p = sub.add_parser("audit", help="re-check every flag and frequency in a report")
    audit_p.add_argument("--csv", type=Path, required=True)
    audit_p.add_argument("--summary", type=Path, required=True)
    audit_p.add_argument("--assert", dest="assert_criteria", action="store_true")

    plot_p = sub.add_parser("plot", help="re-render the scree figures for a finished run")
    plot_p.add_argument("--summary", type=Path, required=True)
    plot_p.add_argument("--out", help="output directory (default: beside the summary)")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    if args.config is not None:
        config = load_config(args.config)
    else:
        if args.experiment is None:
            raise ConfigError("either --config or --experiment is required")
        config = ExperimentConfig(
            experiment=args.experiment, n_list=args.n_list or (), model={"kind": "identity", "p": 10}
        )
    return config.with_overrides(
        experiment=args.experiment,
        n_list=args.n_list,
        m_list=args.m_list,
        reps=args.reps,
        base_seed=args.base_seed,
        alpha=args.alpha,
        output_dir=args.out,
        workers=args.workers,
    )


def _cmd_run(args) -> int:
    from .runner import run

    config = _config_from_args(args)
    result = run(config)
    print(f"wrote {result.csv_path}")
    print(f"wrote {result.summary_path}")
    for path in result.figure_paths:
        print(f"wrote {path}")
    for crit in result.summary["criteria"]:
        status = "PASS" if crit["pass"] else "FAIL"
        print(f"[{status}] {crit['name']}: value={crit['value']:.6g} target={crit['target']:.6g}")
    if args.assert_criteria and not result.criteria_passed:
        return EXIT_ASSERT
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    from .calibrate import CalibrationError, calibrate, default_calibration, save_constants
    from .config import build_model

    out = args.out
    if args.config is None:
        consts, op_consts, run_id = default_calibration(
            output_dir=out, base_seed=args.base_seed, workers=args.workers
        )
        print(f"run id {run_id}")
        print(f"c1={consts.c1:.6g} C={consts.C:.6g}")
        print(f"operator constants: {op_consts.to_dict()}")
        return EXIT_OK
    raw = json.loads(Path(args.config).read_text())
    model = build_model(raw["model"])
    try:
        consts = calibrate(
            model,
            n=int(raw["n"]),
            reps=int(raw["reps"]),
            base_seed=int(raw.get("base_seed", args.base_seed)),
            quantile=raw.get("quantile"),
            workers=args.workers,
        )
    except CalibrationError as exc:
        raise ConfigError(str(exc)) from exc
    run_id = f"{raw['model'].get('kind', 'model')}-{raw['n']}"
    consts = consts.with_source(f"calibrated:{run_id}")
    if out is not None:
        path = save_constants(consts, out, raw["model"].get("kind", "model"), int(raw["n"]), model.p, run_id)
        print(f"wrote {path}")
    print(f"run id {run_id}")
    print(f"c1={consts.c1:.6g} C={consts.C:.6g} extras={consts.extras}")
    return EXIT_OK


def _cmd_audit(args) -> int:
    from .report import audit

    findings = audit(args.csv, args.summary)
    if not findings:
        print("audit clean: every flag and frequency re-derives from the stored columns")
        return EXIT_OK
    for finding in findings:
        print(f"[{finding.kind}] {finding.detail}")
    return EXIT_ASSERT if args.assert_criteria else EXIT_OK


def _cmd_plot(args) -> int:
    from .plots import write_rate_png, write_scree_png, write_scree_svg

    summary = json.loads(Path(args.summary).read_text())
    out = Path(args.out) if args.out else Path(args.summary).parent
    stem = f"{summary.get('experiment', 'run').lower()}-{summary.get('run_id', 'replot')}"
    fig_paths = []
    scree = summary.get("scree_example")
    if scree:
        thresholds = [(label, level) for label, level in scree.get("thresholds", [])]
        fig_paths.append(
            write_scree_svg(scree["eigenvalues"], thresholds, out / f"{stem}-scree.svg")
        )
        fig_paths.append(
            write_scree_png(scree["eigenvalues"], thresholds, out / f"{stem}-scree.png")
        )
    rate = summary.get("rate_figure")
    if rate:
        fig_paths.append(
            write_rate_png(
                rate["xs"],
                rate["ys"],
                rate["slope"],
                rate["intercept"],
                rate["xlabel"],
                rate["ylabel"],
                out / f"{stem}-rate.png",
            )
        )
    for path in fig_paths:
        print(f"wrote {path}")
    if not fig_paths:
        print("nothing to plot: the summary carries no figure data")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "calibrate": _cmd_calibrate,
        "audit": _cmd_audit,
        "plot": _cmd_plot,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:  # unreadable config, unwritable output dir
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
