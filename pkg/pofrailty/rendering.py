"""Console rendering helpers for fit reports and simulation summaries."""

from __future__ import annotations

import math
from typing import Iterable

from rich.table import Table
from rich.text import Text

from pofrailty.io import FitReport
from pofrailty.simulation import SummaryTable


def status_style(ok: bool) -> str:
    """Return a consistent badge style for convergence and flag states."""
    if ok:
        return "bold #0b1f0f on #5fbf72"
    return "bold #ffffff on #b23a48"


def status_badge(ok: bool, ok_label: str = "OK", bad_label: str = "FLAG") -> Text:
    text = Text()
    text.append(f" {ok_label if ok else bad_label} ", style=status_style(ok))
    return text


def _fmt(value: float | None, digits: int = 4) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "-"
    return f"{value:.{digits}f}"


def _milli(value: float) -> str:
    if math.isnan(value):
        return "-"
    scaled = value * 1e3
    return f"{scaled:.1f}" if abs(scaled) < 1 else f"{scaled:.0f}"


def format_fit_report(report: FitReport) -> Table:
    """Estimates with sandwich SEs and 95% intervals."""
    title = Text("Proportional-odds frailty fit ")
    title.append_text(status_badge(report.converged, "CONVERGED", "NOT CONVERGED"))
    table = Table(title=title, title_justify="left")
    for column in ("parameter", "estimate", "SE", "95% CI", "exp(estimate)", "exp CI"):
        table.add_column(column, justify="right" if column != "parameter" else "left")
    for row in report.beta:
        table.add_row(
            row.name,
            _fmt(row.estimate),
            _fmt(row.se),
            f"({_fmt(row.ci[0])}, {_fmt(row.ci[1])})",
            _fmt(row.exp_estimate, 3),
            f"({_fmt(row.exp_ci[0], 2)}, {_fmt(row.exp_ci[1], 2)})",
        )
    for row in report.rho:
        table.add_row(row.name, _fmt(row.estimate), _fmt(row.se), f"({_fmt(row.ci[0])}, {_fmt(row.ci[1])})", "", "")
    table.caption = (
        f"loglik {report.loglik:.6f} | m={report.n_clusters} | outer iters {report.n_outer_iters}"
        f" | cond(H) {report.condition_number:.3g}"
    )
    return table


def format_summary_table(summaries: Iterable[SummaryTable]) -> Table:
    """Simulation summaries in the x10^3 layout of the published tables."""
    table = Table(title="Simulation summary (Bias, SEE, SSE, MSE x 10^3)", title_justify="left")
    for column in ("scenario", "param", "Bias", "SEE", "SSE", "MSE", "coverage", "reps", "status"):
        table.add_column(column, justify="left" if column in {"scenario", "param"} else "right")
    for summary in summaries:
        for idx, row in enumerate(summary.rows):
            table.add_row(
                summary.label if idx == 0 else "",
                row.name,
                _milli(row.bias),
                _milli(row.see),
                _milli(row.sse),
                _milli(row.mse),
                "-" if math.isnan(row.coverage) else f"{row.coverage:.0%}",
                f"{row.n_used}/{summary.n_reps}" if idx == 0 else "",
                status_badge(not summary.flagged) if idx == 0 else "",
            )
    return table
