"""CSV ingestion, fit reports, scenario files and summary emission."""

from __future__ import annotations

import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from pofrailty.config import CI_Z, RHO_MAX
from pofrailty.constant import Z1_SD
from pofrailty.em import FitResult
from pofrailty.errors import ConfigError, SchemaError
from pofrailty.frailty import CorrelationKind
from pofrailty.models import Cluster, Dataset, Observation
from pofrailty.simulation import ScenarioConfig, SummaryTable
from pofrailty.variance import SandwichEstimate, baseline_pointwise_se, confidence_interval

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

INTERPRETATION = (
    "exp(beta) is the marginal failure odds ratio and, under the frailty model, "
    "also the conditional hazard ratio"
)


def read_clustered_csv(
    path: str | Path,
    cluster_col: str,
    time_col: str,
    event_col: str,
    covariates: Sequence[str],
    member_col: str | None = None,
) -> Dataset:
    """Load a clustered survival table; violations are reported with file line numbers."""
    frame = pd.read_csv(path, dtype={cluster_col: str}, skipinitialspace=True)
    required = [cluster_col, time_col, event_col, *covariates] + ([member_col] if member_col else [])
    missing = [name for name in required if name not in frame.columns]
    if missing:
        raise SchemaError([(1, f"missing column(s): {', '.join(missing)}")])

    violations: list[tuple[int, str]] = []
    lines = np.arange(len(frame)) + 2
    numeric = {name: pd.to_numeric(frame[name], errors="coerce") for name in required if name != cluster_col}

    for name in required:
        for line in lines[frame[name].isna().to_numpy()]:
            violations.append((int(line), f"missing value in column {name!r}"))
    for name, values in numeric.items():
        bad = values.isna().to_numpy() & frame[name].notna().to_numpy()
        bad |= values.notna().to_numpy() & ~np.isfinite(values.to_numpy(dtype=float, na_value=0.0))
        for line in lines[bad]:
            violations.append((int(line), f"non-numeric value {str(frame[name].iloc[line - 2])!r} in column {name!r}"))

    time = numeric[time_col].to_numpy(dtype=float, na_value=np.nan)
    event = numeric[event_col].to_numpy(dtype=float, na_value=np.nan)
    for line in lines[time < 0]:
        violations.append((int(line), f"negative time {time[line - 2]:g}"))
    for line in lines[np.isfinite(event) & ~np.isin(event, (0.0, 1.0))]:
        violations.append((int(line), f"event must be 0 or 1, got {event[line - 2]:g}"))

    if member_col:
        member = numeric[member_col].to_numpy(dtype=float, na_value=np.nan)
        bad = np.isfinite(member) & ((member < 0) | (member != np.round(member)))
        for line in lines[bad]:
            violations.append((int(line), f"member index must be a nonnegative integer, got {member[line - 2]:g}"))
    else:
        member = frame.groupby(cluster_col, sort=False).cumcount().to_numpy(dtype=float)
    dup = pd.DataFrame({"cluster": frame[cluster_col], "member": member}).duplicated().to_numpy()
    for line in lines[dup & np.isfinite(member)]:
        violations.append((int(line), "duplicate member index within cluster"))

    if violations:
        raise SchemaError(sorted(violations))

    z = np.column_stack([numeric[name].to_numpy(dtype=float) for name in covariates]) if covariates else None
    clusters = []
    try:
        for cluster_id, group in frame.groupby(cluster_col, sort=False):
            members = tuple(
                Observation(
                    float(time[i]),
                    int(event[i]),
                    tuple(z[i]) if z is not None else (),
                    int(member[i]),
                )
                for i in group.index.to_numpy()
            )
            clusters.append(Cluster(str(cluster_id), members))
        return Dataset(tuple(clusters))
    except ValueError as exc:
        raise SchemaError([(0, str(exc))]) from exc


@dataclass(frozen=True)
class EstimateRow:
    name: str
    estimate: float
    se: float
    ci: tuple[float, float]
    exp_estimate: float | None = None
    exp_ci: tuple[float, float] | None = None


@dataclass(frozen=True)
class BaselineCurve:
    time: tuple[float, ...]
    cumulative: tuple[float, ...]
    se: tuple[float, ...]


@dataclass(frozen=True)
class FitReport:
    beta: tuple[EstimateRow, ...]
    rho: tuple[EstimateRow, ...]
    baseline: BaselineCurve
    loglik: float
    n_outer_iters: int
    n_em_sweeps: int
    converged: bool
    beta_at_boundary: bool
    rho_at_boundary: bool
    condition_number: float
    n_clusters: int
    n_obs: int
    censoring: float
    seed: int
    config: dict[str, Any] = field(default_factory=dict)
    rho_profile: tuple[tuple[float, float], ...] = ()
    flags: tuple[str, ...] = ()
    interpretation: str = INTERPRETATION


def build_fit_report(
    dataset: Dataset,
    result: FitResult,
    est: SandwichEstimate | None,
    covariate_names: Sequence[str],
    seed: int,
    config: dict[str, Any] | None = None,
    rho_profile: Iterable[tuple[float, float]] = (),
    flags: Iterable[str] = (),
) -> FitReport:
    """Assemble estimates, sandwich intervals and the baseline curve.

    Without a sandwich estimate (e.g. a non-converged fit) every SE is NaN.
    """
    p1, p2 = len(result.beta_hat), result.corr.n_params
    se = est.standard_errors if est is not None else np.full(p1 + p2, math.nan)
    beta_rows = []
    for i, name in enumerate(covariate_names):
        value, s = float(result.beta_hat[i]), float(se[i])
        lo, hi = confidence_interval(value, s, CI_Z)
        beta_rows.append(EstimateRow(name, value, s, (lo, hi), math.exp(value), (math.exp(lo), math.exp(hi))))
    rho_rows = []
    for i in range(p2):
        value, s = float(result.rho_hat[i]), float(se[p1 + i])
        lo, hi = confidence_interval(value, s, CI_Z, (0.0, RHO_MAX))
        rho_rows.append(EstimateRow("rho" if p2 == 1 else f"rho{i}", value, s, (lo, hi)))

    baseline = result.baseline_hat
    baseline_se = baseline_pointwise_se(est) if est is not None else np.full(baseline.n_jumps, math.nan)
    return FitReport(
        beta=tuple(beta_rows),
        rho=tuple(rho_rows),
        baseline=BaselineCurve(
            tuple(float(t) for t in baseline.jump_times),
            tuple(float(c) for c in baseline.cumulative),
            tuple(float(s) for s in baseline_se),
        ),
        loglik=float(result.loglik),
        n_outer_iters=result.n_outer_iters,
        n_em_sweeps=result.n_em_sweeps,
        converged=result.converged,
        beta_at_boundary=result.beta_at_boundary,
        rho_at_boundary=result.rho_at_boundary,
        condition_number=float(est.condition_number) if est is not None else math.nan,
        n_clusters=dataset.m,
        n_obs=dataset.n_obs,
        censoring=1.0 - float(np.mean(dataset.design.event)),
        seed=seed,
        config=dict(config or {}),
        rho_profile=tuple((float(r), float(v)) for r, v in rho_profile),
        flags=tuple(flags),
    )


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, float):
        return None if not math.isfinite(value) else value
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    return value


def _float(value: Any) -> float:
    return math.nan if value is None else float(value)


def _pair(value: Any) -> tuple[float, float] | None:
    return None if value is None else (_float(value[0]), _float(value[1]))


def report_to_json(report: FitReport) -> str:
    """Deterministic JSON with non-finite numbers written as null."""
    return json.dumps(_to_jsonable(asdict(report)), indent=2, sort_keys=True) + "\n"


def _row_from_dict(data: dict[str, Any]) -> EstimateRow:
    return EstimateRow(
        name=data["name"],
        estimate=_float(data["estimate"]),
        se=_float(data["se"]),
        ci=_pair(data["ci"]),
        exp_estimate=None if data.get("exp_estimate") is None else float(data["exp_estimate"]),
        exp_ci=_pair(data.get("exp_ci")),
    )


def report_from_json(text: str) -> FitReport:
    data = json.loads(text)
    curve = data["baseline"]
    return FitReport(
        beta=tuple(_row_from_dict(row) for row in data["beta"]),
        rho=tuple(_row_from_dict(row) for row in data["rho"]),
        baseline=BaselineCurve(
            tuple(_float(x) for x in curve["time"]),
            tuple(_float(x) for x in curve["cumulative"]),
            tuple(_float(x) for x in curve["se"]),
        ),
        loglik=_float(data["loglik"]),
        n_outer_iters=int(data["n_outer_iters"]),
        n_em_sweeps=int(data["n_em_sweeps"]),
        converged=bool(data["converged"]),
        beta_at_boundary=bool(data["beta_at_boundary"]),
        rho_at_boundary=bool(data["rho_at_boundary"]),
        condition_number=_float(data["condition_number"]),
        n_clusters=int(data["n_clusters"]),
        n_obs=int(data["n_obs"]),
        censoring=_float(data["censoring"]),
        seed=int(data["seed"]),
        config=dict(data.get("config", {})),
        rho_profile=tuple((_float(r), _float(v)) for r, v in data.get("rho_profile", [])),
        flags=tuple(data.get("flags", [])),
        interpretation=data.get("interpretation", INTERPRETATION),
    )


class ScenarioFile(BaseModel):
    """Schema of a TOML scenario file."""

    model_config = ConfigDict(extra="forbid")

    m_clusters: int = Field(200, ge=1)
    cluster_size_min: int = Field(5, ge=1)
    cluster_size_max: int = Field(7, ge=1)
    beta_true: list[float] = Field(default_factory=lambda: [1.2, 2.5], min_length=2, max_length=2)
    rho_true: float = Field(0.5, ge=0.0, le=RHO_MAX)
    corr_kind: CorrelationKind = CorrelationKind.EXCHANGEABLE
    censor_mean: float = Field(3.64, gt=0.0)
    censor_cap: float = Field(10.0, gt=0.0)
    z1_sd: float = Field(Z1_SD, gt=0.0)
    n_reps: int = Field(200, ge=2)
    master_seed: int | None = None
    label: str = ""


def load_scenario(path: str | Path, default_seed: int) -> ScenarioConfig:
    """Parse and validate a scenario file; any problem raises ConfigError."""
    try:
        with open(path, "rb") as handle:
            raw = tomllib.load(handle)
        parsed = ScenarioFile.model_validate(raw)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"scenario file {path} is not valid TOML: {exc}") from exc
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors())
        raise ConfigError(f"invalid scenario file {path}: {problems}") from exc
    return ScenarioConfig(
        m_clusters=parsed.m_clusters,
        cluster_size_min=parsed.cluster_size_min,
        cluster_size_max=parsed.cluster_size_max,
        beta_true=tuple(parsed.beta_true),
        rho_true=parsed.rho_true,
        corr_kind=parsed.corr_kind,
        censor_mean=parsed.censor_mean,
        censor_cap=parsed.censor_cap,
        z1_sd=parsed.z1_sd,
        n_reps=parsed.n_reps,
        master_seed=default_seed if parsed.master_seed is None else parsed.master_seed,
        label=parsed.label or Path(path).stem,
    )


def summary_frame(summaries: Iterable[SummaryTable]) -> pd.DataFrame:
    """One row per (scenario, parameter) in natural units."""
    records = []
    for summary in summaries:
        for row in summary.rows:
            records.append(
                {
                    "scenario": summary.label,
                    "parameter": row.name,
                    "true_value": row.true_value,
                    "bias": row.bias,
                    "see": row.see,
                    "sse": row.sse,
                    "mse": row.mse,
                    "coverage": row.coverage,
                    "n_used": row.n_used,
                    "n_reps": summary.n_reps,
                    "n_converged": summary.n_converged,
                    "flagged": summary.flagged,
                    "censoring": summary.censoring,
                }
            )
    return pd.DataFrame.from_records(records)


def write_summary(summaries: Sequence[SummaryTable], out_dir: str | Path, stem: str) -> tuple[Path, Path]:
    """Write <stem>.csv and <stem>.json; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frame = summary_frame(summaries)
    csv_path = out / f"{stem}.csv"
    json_path = out / f"{stem}.json"
    frame.to_csv(csv_path, index=False, float_format="%.10g")
    payload = []
    for summary in summaries:
        config = asdict(summary.config) if summary.config is not None else {}
        if "corr_kind" in config:
            config["corr_kind"] = CorrelationKind(config["corr_kind"]).value
        payload.append(
            {
                "label": summary.label,
                "n_reps": summary.n_reps,
                "n_converged": summary.n_converged,
                "flagged": summary.flagged,
                "censoring": summary.censoring,
                "config": config,
                "rows": [asdict(row) for row in summary.rows],
            }
        )
    json_path.write_text(json.dumps(_to_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return csv_path, json_path
