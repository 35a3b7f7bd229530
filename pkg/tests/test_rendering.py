from __future__ import annotations

import math

from rich.console import Console

from pofrailty.io import BaselineCurve, EstimateRow, FitReport
from pofrailty.rendering import format_fit_report, format_summary_table, status_badge, status_style
from pofrailty.simulation import ParameterSummary, SummaryTable


def _render(renderable) -> str:
    console = Console(record=True, width=140, color_system=None)
    console.print(renderable)
    return console.export_text()


def test_status_styles_differ():
    assert status_style(True) != status_style(False)
    assert status_badge(False).plain.strip() == "FLAG"
    assert status_badge(True, ok_label="DONE").plain.strip() == "DONE"


def test_fit_report_table_lists_every_parameter():
    report = FitReport(
        beta=(EstimateRow("rx", 0.94, 0.34, (0.27, 1.61), 2.56, (1.30, 5.02)),),
        rho=(EstimateRow("rho", 0.75, math.nan, (math.nan, math.nan)),),
        baseline=BaselineCurve((1.0,), (0.1,), (0.01,)),
        loglik=-3.5,
        n_outer_iters=7,
        n_em_sweeps=40,
        converged=True,
        beta_at_boundary=False,
        rho_at_boundary=False,
        condition_number=12.0,
        n_clusters=50,
        n_obs=150,
        censoring=0.8,
        seed=1,
    )
    text = _render(format_fit_report(report))
    assert "CONVERGED" in text
    assert "2.560" in text
    assert "(1.30, 5.02)" in text
    assert "m=50" in text
    rho_line = next(line for line in text.splitlines() if " rho " in line)
    assert "-" in rho_line


def test_summary_table_uses_milli_units():
    rows = (
        ParameterSummary("beta0", 1.2, -0.002, 0.101, 0.099, 0.0098, 0.95, 200),
        ParameterSummary("beta1", 2.5, 0.0004, 0.14, 0.15, 0.0225, 0.94, 200),
        ParameterSummary("rho", 0.5, math.nan, math.nan, math.nan, math.nan, math.nan, 0),
    )
    table = SummaryTable("table1_c40_rho0.5", rows, n_reps=200, n_converged=189, flagged=True, censoring=0.4)
    text = _render(format_summary_table([table]))
    assert "table1_c40_rho0.5" in text
    assert "101" in text
    assert "0.4" in text
    assert "95%" in text
    assert "FLAG" in text
