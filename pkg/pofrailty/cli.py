"""Command-line surface: fit a CSV, run one scenario, or run the benchmark grid.

Exit codes: 0 success, 2 input error, 3 non-convergence or flagged scenario,
1 anything else.
"""

from __future__ import annotations

import argparse
import dataclasses
import math
from pathlib import Path
from typing import Sequence

import numpy as np
from rich.console import Console
from rich.text import Text

from pofrailty.config import RHO_MAX, default_seed, resolve_db_path, resolve_log_level, resolve_log_path
from pofrailty.constant import (
    BENCHMARK_GRID,
    CENSOR_MEANS,
    M_CLUSTERS,
    RATS_TOLERANCE,
    REFERENCE_ROWS,
    SCENARIO_KINDS,
    Z1_SD,
)
from pofrailty.em import FitConfig, fit, profile_loglik_rho
from pofrailty.errors import (
    ConfigError,
    DegenerateDesignError,
    EStepDegenerateError,
    FrailtyError,
    InformationSingularError,
    NewtonConvergenceError,
    SchemaError,
)
from pofrailty.frailty import CorrelationKind
from pofrailty.io import FitReport, build_fit_report, load_scenario, read_clustered_csv, report_to_json, write_summary
from pofrailty.logs import configure_logging, get_logger
from pofrailty.persistence import (
    STATUS_DONE,
    STATUS_FAILED,
    STATUS_FLAGGED,
    bootstrap_schema,
    save_replicate,
    save_run,
    update_run_status,
)
from pofrailty.rendering import format_fit_report, format_summary_table
from pofrailty.simulation import ScenarioConfig, SummaryTable, reference_gaps, run_scenario
from pofrailty.variance import sandwich

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INPUT = 2
EXIT_CONVERGENCE = 3

_RHO_PROFILE_POINTS = 100


@dataclasses.dataclass(frozen=True)
class BenchmarkOutcome:
    summaries: tuple[SummaryTable, ...]
    failures: tuple[str, ...]


def _stderr() -> Console:
    return Console(stderr=True)


def _seed(args: argparse.Namespace) -> int:
    return default_seed() if args.seed is None else int(args.seed)


def _prepare_out_dir(path: str, force: bool) -> Path:
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _reference_flags(report: FitReport, expect_beta: float | None, expect_rho: float | None) -> list[str]:
    flags = []
    if expect_beta is not None and report.beta:
        got = report.beta[0].exp_estimate
        if got is None or abs(got - expect_beta) > RATS_TOLERANCE["exp_beta"]:
            flags.append(f"reference_mismatch exp_beta={got!r} expected={expect_beta}")
    if expect_rho is not None and report.rho:
        got = report.rho[0].estimate
        if not abs(got - expect_rho) <= RATS_TOLERANCE["rho"]:
            flags.append(f"reference_mismatch rho={got!r} expected={expect_rho}")
    return flags


def cmd_fit(args: argparse.Namespace) -> FitReport:
    """Fit a clustered CSV and emit the FitReport as JSON."""
    seed = _seed(args)
    covariates = [name.strip() for name in args.covariates.split(",") if name.strip()]
    dataset = read_clustered_csv(args.data, args.cluster_col, args.time_col, args.event_col, covariates, args.member_col)
    config = FitConfig(corr_kind=CorrelationKind(args.correlation))
    logger.info("cmd_fit data=%s m=%d n=%d", args.data, dataset.m, dataset.n_obs)

    result = fit(dataset, config)
    flags: list[str] = []
    est = None
    if result.converged:
        try:
            est = sandwich(dataset, result)
        except InformationSingularError as exc:
            flags.append(f"information_singular condition_number={exc.condition_number:.3e}")
    else:
        flags.append("not_converged")
    if result.beta_at_boundary:
        flags.append("beta_at_boundary")
    if result.rho_at_boundary:
        flags.append("rho_at_boundary")

    profile: list[tuple[float, float]] = []
    if args.rho_profile and result.corr.n_params == 1:
        grid = np.linspace(0.0, RHO_MAX, _RHO_PROFILE_POINTS)
        values = profile_loglik_rho(dataset, result.beta_hat, result.baseline_hat, result.corr, grid)
        profile = list(zip(grid.tolist(), values.tolist()))

    echo = {
        "data": str(args.data),
        "cluster_col": args.cluster_col,
        "time_col": args.time_col,
        "event_col": args.event_col,
        "covariates": covariates,
        "member_col": args.member_col,
        "correlation": config.corr_kind.value,
        "tol_params": config.tol_params,
        "tol_loglik": config.tol_loglik,
    }
    report = build_fit_report(dataset, result, est, covariates, seed, echo, profile, flags)
    flags.extend(_reference_flags(report, args.expect_beta, args.expect_rho))
    report = dataclasses.replace(report, flags=tuple(flags))

    text = report_to_json(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        print(text, end="")
    _stderr().print(format_fit_report(report))
    for flag in flags:
        logger.warning("fit_flag %s", flag)
    return report


def _scenario_from_args(args: argparse.Namespace, seed: int) -> ScenarioConfig:
    if args.config:
        cfg = load_scenario(args.config, seed)
        overrides: dict[str, object] = {}
        if args.reps is not None:
            overrides["n_reps"] = args.reps
        if args.seed is not None:
            overrides["master_seed"] = seed
        if args.clusters is not None:
            overrides["m_clusters"] = args.clusters
        if args.z1_sd is not None:
            overrides["z1_sd"] = args.z1_sd
        return dataclasses.replace(cfg, **overrides) if overrides else cfg
    if args.scenario is None or args.rho is None or args.censoring is None:
        raise ConfigError("simulate needs --config or all of --scenario, --rho and --censoring")
    return ScenarioConfig(
        m_clusters=args.clusters or M_CLUSTERS,
        rho_true=args.rho,
        corr_kind=CorrelationKind(SCENARIO_KINDS[args.scenario]),
        censor_mean=CENSOR_MEANS[args.censoring],
        z1_sd=Z1_SD if args.z1_sd is None else args.z1_sd,
        n_reps=200 if args.reps is None else args.reps,
        master_seed=seed,
        label=f"{args.scenario}_c{args.censoring}_rho{args.rho:g}",
    )


def _run_stored(cfg: ScenarioConfig, args: argparse.Namespace) -> SummaryTable:
    fit_config = FitConfig(corr_kind=cfg.corr_kind)
    if args.db is None:
        return run_scenario(cfg, fit_config, workers=args.workers, show_progress=True)

    db_path = args.db or resolve_db_path()
    bootstrap_schema(db_path)
    run = save_run(cfg, db_path)
    try:
        summary = run_scenario(
            cfg,
            fit_config,
            workers=args.workers,
            on_result=lambda result: save_replicate(run.run_id, result, db_path),
            show_progress=True,
        )
    except Exception:
        update_run_status(run.run_id, STATUS_FAILED, db_path)
        raise
    update_run_status(run.run_id, STATUS_FLAGGED if summary.flagged else STATUS_DONE, db_path)
    return summary


def _report_reference_gaps(summary: SummaryTable, row: tuple[str, int, float]) -> None:
    if summary.n_converged < 2:
        return
    for gap in reference_gaps(summary, row):
        logger.warning("reference_gap label=%s %s", summary.label, gap)


def cmd_simulate(args: argparse.Namespace) -> SummaryTable:
    """Run one scenario and write its summary as CSV and JSON."""
    cfg = _scenario_from_args(args, _seed(args))
    out = _prepare_out_dir(args.out_dir, args.force)
    logger.info("cmd_simulate label=%s reps=%d seed=%d", cfg.label, cfg.n_reps, cfg.master_seed)
    summary = _run_stored(cfg, args)
    write_summary([summary], out, cfg.label)
    if not args.config:
        row = (args.scenario, args.censoring, args.rho)
        if row in REFERENCE_ROWS:
            _report_reference_gaps(summary, row)
    _stderr().print(format_summary_table([summary]))
    return summary


def _parse_row_filter(text: str | None) -> list[tuple[str, ...]]:
    if not text:
        return []
    filters = []
    for item in text.split(","):
        parts = tuple(part.strip() for part in item.split(":") if part.strip())
        if not parts or parts[0] not in SCENARIO_KINDS or len(parts) > 3:
            raise ConfigError(f"row filter {item!r} must look like table1[:40[:0.5]]")
        filters.append(parts)
    return filters


def _row_selected(row: tuple[str, int, float], filters: list[tuple[str, ...]]) -> bool:
    if not filters:
        return True
    scenario, censoring, rho = row
    for parts in filters:
        try:
            if parts[0] != scenario:
                continue
            if len(parts) > 1 and int(parts[1]) != censoring:
                continue
            if len(parts) > 2 and not math.isclose(float(parts[2]), rho):
                continue
        except ValueError:
            raise ConfigError(f"row filter {':'.join(parts)!r} has a non-numeric field") from None
        return True
    return False


def cmd_benchmark(args: argparse.Namespace) -> BenchmarkOutcome:
    """Run every selected grid row, one summary per row plus a combined table."""
    seed = _seed(args)
    filters = _parse_row_filter(args.rows)
    rows = [row for row in BENCHMARK_GRID if _row_selected(row, filters)]
    if not rows:
        raise ConfigError(f"row filter {args.rows!r} selects no scenario")
    out = _prepare_out_dir(args.out_dir, args.force)

    summaries: list[SummaryTable] = []
    failures: list[str] = []
    for scenario, censoring, rho in rows:
        cfg = ScenarioConfig(
            m_clusters=args.clusters or M_CLUSTERS,
            rho_true=rho,
            corr_kind=CorrelationKind(SCENARIO_KINDS[scenario]),
            censor_mean=CENSOR_MEANS[censoring],
            z1_sd=Z1_SD if args.z1_sd is None else args.z1_sd,
            n_reps=args.reps,
            master_seed=seed,
            label=f"{scenario}_c{censoring}_rho{rho:g}",
        )
        try:
            summary = _run_stored(cfg, args)
        except FrailtyError as exc:
            logger.error("benchmark_row_failed label=%s error=%s", cfg.label, exc)
            failures.append(cfg.label)
            continue
        write_summary([summary], out, cfg.label)
        _report_reference_gaps(summary, (scenario, censoring, rho))
        summaries.append(summary)

    if summaries:
        write_summary(summaries, out, "benchmark")
        _stderr().print(format_summary_table(summaries))
    return BenchmarkOutcome(tuple(summaries), tuple(failures))


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not (math.isfinite(value) and value > 0.0):
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text!r}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pofrailty",
        description="Marginalizable frailty proportional-odds models by composite likelihood",
    )
    parser.add_argument("--log-level", default=None, help="console log level (default POFRAILTY_LOG_LEVEL or WARNING)")
    parser.add_argument("--log-file", default=None, help="debug log file (default POFRAILTY_LOG_PATH)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit a clustered survival CSV")
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--cluster-col", required=True)
    p_fit.add_argument("--time-col", required=True)
    p_fit.add_argument("--event-col", required=True)
    p_fit.add_argument("--covariates", required=True, help="comma-separated covariate columns")
    p_fit.add_argument("--member-col", default=None, help="member position within cluster (default: row order)")
    p_fit.add_argument("--correlation", choices=["exchangeable", "ar1"], default="exchangeable")
    p_fit.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    p_fit.add_argument("--seed", type=int, default=None)
    p_fit.add_argument("--rho-profile", action="store_true", help="attach the composite loglik profile over rho")
    p_fit.add_argument("--expect-beta", type=float, default=None, help="reference exp(beta) for the first covariate")
    p_fit.add_argument("--expect-rho", type=float, default=None, help="reference frailty correlation")
    p_fit.set_defaults(handler=cmd_fit)

    p_sim = sub.add_parser("simulate", help="run one simulation scenario")
    p_sim.add_argument("--scenario", choices=sorted(SCENARIO_KINDS), default=None)
    p_sim.add_argument("--rho", type=float, default=None)
    p_sim.add_argument("--censoring", type=int, choices=sorted(CENSOR_MEANS), default=None)
    p_sim.add_argument("--config", default=None, help="TOML scenario file")
    p_sim.add_argument("--reps", type=int, default=None)
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--clusters", type=_positive_int, default=None)
    p_sim.add_argument("--z1-sd", type=_positive_float, default=None, help=f"SD of the Gaussian covariate (default {Z1_SD})")
    p_sim.add_argument("--workers", type=_positive_int, default=1)
    p_sim.add_argument("--out-dir", required=True)
    p_sim.add_argument("--db", nargs="?", const="", default=None, help="store replicates in SQLite (default path: POFRAILTY_DB_PATH)")
    p_sim.add_argument("--force", action="store_true")
    p_sim.set_defaults(handler=cmd_simulate)

    p_bench = sub.add_parser("benchmark", help="run the published simulation grid")
    p_bench.add_argument("--reps", type=int, required=True)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--rows", default=None, help="filter such as table1:40:0.5,table2:75")
    p_bench.add_argument("--clusters", type=_positive_int, default=None)
    p_bench.add_argument("--z1-sd", type=_positive_float, default=None, help=f"SD of the Gaussian covariate (default {Z1_SD})")
    p_bench.add_argument("--workers", type=_positive_int, default=1)
    p_bench.add_argument("--out-dir", required=True)
    p_bench.add_argument("--db", nargs="?", const="", default=None, help="store replicates in SQLite (default path: POFRAILTY_DB_PATH)")
    p_bench.add_argument("--force", action="store_true")
    p_bench.set_defaults(handler=cmd_benchmark)
    return parser


def exit_code_for(outcome: object) -> int:
    if isinstance(outcome, FitReport):
        failed = not outcome.converged or any(flag.startswith("information_singular") for flag in outcome.flags)
        return EXIT_CONVERGENCE if failed else EXIT_OK
    if isinstance(outcome, SummaryTable):
        return EXIT_CONVERGENCE if outcome.flagged else EXIT_OK
    if isinstance(outcome, BenchmarkOutcome):
        bad = outcome.failures or any(summary.flagged for summary in outcome.summaries)
        return EXIT_CONVERGENCE if bad else EXIT_OK
    return EXIT_OK


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level or resolve_log_level(), args.log_file or resolve_log_path())
    console = _stderr()
    try:
        return exit_code_for(args.handler(args))
    except SchemaError as exc:
        console.print(Text("input error\n", style="bold red") + Text(str(exc)))
        return EXIT_INPUT
    except (ConfigError, FileNotFoundError, IsADirectoryError) as exc:
        console.print(Text("input error ", style="bold red") + Text(str(exc)))
        return EXIT_INPUT
    except (NewtonConvergenceError, DegenerateDesignError, EStepDegenerateError, InformationSingularError) as exc:
        console.print(Text("convergence failure ", style="bold red") + Text(str(exc)))
        return EXIT_CONVERGENCE
    except Exception as exc:  # noqa: BLE001
        logger.exception("unhandled error")
        console.print(Text("error ", style="bold red") + Text(str(exc)))
        return EXIT_ERROR
