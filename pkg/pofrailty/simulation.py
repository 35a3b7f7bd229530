"""Clustered survival data generator and Monte Carlo benchmark harness.

Data follow the conditional proportional hazards model with Lambda0(t) = t:
T = E / (w exp(z'beta)) with E ~ Exp(1), censored by min(cap, Exp(censor_mean)).
Covariates are Z1 ~ N(0, z1_sd^2) and Z2 = 0.2 Z1 + Z0 - 0.3 with Z0 ~ Bernoulli(0.3).
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, TextColumn, TimeElapsedColumn

from pofrailty.config import CI_Z, DEFAULT_SEED, MAX_NONCONVERGED_FRACTION, RHO_MAX
from pofrailty.constant import (
    BETA_TRUE,
    CENSOR_CAP,
    CLUSTER_SIZE_RANGE,
    M_CLUSTERS,
    PARAMETER_NAMES,
    REFERENCE_ROWS,
    REFERENCE_SSE_TOLERANCE,
    SEE_SSE_RATIO_RANGE,
    Z1_SD,
)
from pofrailty.em import FitConfig, fit
from pofrailty.errors import ConfigError, FrailtyError, FrailtyWarning
from pofrailty.frailty import (
    CorrelationKind,
    CorrelationModel,
    GaussianFactor,
    frailty_corr_matrix,
    gaussian_factor,
    sample_frailties,
)
from pofrailty.logs import get_logger
from pofrailty.models import Cluster, Dataset, Observation
from pofrailty.variance import confidence_interval, sandwich

logger = get_logger(__name__)


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario; defaults reproduce the exchangeable 40%-censoring design."""

    m_clusters: int = M_CLUSTERS
    cluster_size_min: int = CLUSTER_SIZE_RANGE[0]
    cluster_size_max: int = CLUSTER_SIZE_RANGE[1]
    beta_true: tuple[float, ...] = BETA_TRUE
    rho_true: float = 0.5
    corr_kind: CorrelationKind = CorrelationKind.EXCHANGEABLE
    censor_mean: float = 3.64
    censor_cap: float = CENSOR_CAP
    z1_sd: float = Z1_SD
    n_reps: int = 200
    master_seed: int = DEFAULT_SEED
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "beta_true", tuple(float(b) for b in self.beta_true))
        try:
            object.__setattr__(self, "corr_kind", CorrelationKind(self.corr_kind))
        except ValueError:
            raise ConfigError(f"corr_kind must be 'exchangeable' or 'ar1', got {self.corr_kind!r}") from None
        if self.corr_kind is CorrelationKind.FIXED:
            raise ConfigError("simulation scenarios need a parametric correlation structure")
        if self.m_clusters < 1:
            raise ConfigError(f"m_clusters must be >= 1, got {self.m_clusters}")
        if not (1 <= self.cluster_size_min <= self.cluster_size_max):
            raise ConfigError(
                f"cluster size range [{self.cluster_size_min}, {self.cluster_size_max}] is empty or nonpositive"
            )
        if len(self.beta_true) != 2:
            raise ConfigError(f"beta_true needs one value per covariate (2), got {len(self.beta_true)}")
        if not (0.0 <= self.rho_true <= RHO_MAX):
            raise ConfigError(f"rho_true must lie in [0, {RHO_MAX}], got {self.rho_true}")
        if not (self.censor_mean > 0.0 and self.censor_cap > 0.0):
            raise ConfigError("censor_mean and censor_cap must be positive")
        if not (math.isfinite(self.z1_sd) and self.z1_sd > 0.0):
            raise ConfigError(f"z1_sd must be positive, got {self.z1_sd}")
        if self.n_reps < 2:
            raise ConfigError(f"n_reps must be >= 2 to estimate a Monte Carlo SD, got {self.n_reps}")

    @property
    def correlation(self) -> CorrelationModel:
        return CorrelationModel(self.corr_kind, (self.rho_true,))

    @property
    def truth(self) -> np.ndarray:
        return np.array(self.beta_true + (self.rho_true,))


@dataclass(frozen=True)
class RepResult:
    rep_index: int
    beta_hat: tuple[float, ...]
    rho_hat: float
    se_beta: tuple[float, ...]
    se_rho: float
    ci_covers: tuple[bool, ...]
    converged: bool
    censoring: float = math.nan
    n_outer_iters: int = 0
    message: str = ""

    @property
    def estimates(self) -> np.ndarray:
        return np.array(self.beta_hat + (self.rho_hat,))

    @property
    def standard_errors(self) -> np.ndarray:
        return np.array(self.se_beta + (self.se_rho,))


@dataclass(frozen=True)
class ParameterSummary:
    name: str
    true_value: float
    bias: float
    see: float
    sse: float
    mse: float
    coverage: float
    n_used: int


@dataclass(frozen=True)
class SummaryTable:
    label: str
    rows: tuple[ParameterSummary, ...]
    n_reps: int
    n_converged: int
    flagged: bool
    censoring: float
    config: ScenarioConfig | None = field(default=None, compare=False)

    @property
    def n_failed(self) -> int:
        return self.n_reps - self.n_converged

    def row(self, name: str) -> ParameterSummary:
        for summary in self.rows:
            if summary.name == name:
                return summary
        raise KeyError(name)


def draw_failure_times(w: np.ndarray, eta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse transform under Lambda0(t) = t: T = E / (w exp(eta)), E ~ Exp(1)."""
    return rng.exponential(1.0, size=np.shape(w)) / (w * np.exp(eta))


def _draw_cluster(
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    factors: dict[int, GaussianFactor],
    cluster_id: str,
) -> Cluster:
    n = int(rng.integers(cfg.cluster_size_min, cfg.cluster_size_max + 1))
    if n not in factors:
        factors[n] = gaussian_factor(frailty_corr_matrix(cfg.correlation, n))
    w = sample_frailties(factors[n], rng)
    z1 = rng.normal(0.0, cfg.z1_sd, size=n)
    z0 = rng.binomial(1, 0.3, size=n)
    z2 = 0.2 * z1 + z0 - 0.3
    eta = cfg.beta_true[0] * z1 + cfg.beta_true[1] * z2
    failure = draw_failure_times(w, eta, rng)
    censor = np.minimum(cfg.censor_cap, rng.exponential(cfg.censor_mean, size=n))
    time = np.minimum(failure, censor)
    event = (failure <= censor).astype(int)
    members = tuple(
        Observation(float(time[i]), int(event[i]), (float(z1[i]), float(z2[i])), i) for i in range(n)
    )
    return Cluster(cluster_id, members)


def generate_cluster(cfg: ScenarioConfig, rng: np.random.Generator, cluster_id: str = "0") -> Cluster:
    return _draw_cluster(cfg, rng, {}, cluster_id)


def generate_dataset(cfg: ScenarioConfig, rng: np.random.Generator) -> Dataset:
    factors: dict[int, GaussianFactor] = {}
    clusters = [_draw_cluster(cfg, rng, factors, str(i)) for i in range(cfg.m_clusters)]
    return Dataset(tuple(clusters))


def censoring_fraction(dataset: Dataset) -> float:
    return 1.0 - float(np.mean(dataset.design.event))


def rep_seed(master_seed: int, rep_index: int) -> np.random.SeedSequence:
    """Independent per-replicate stream spawned from the master seed."""
    return np.random.SeedSequence(entropy=master_seed, spawn_key=(rep_index,))


def _failed_rep(rep_index: int, n_beta: int, message: str, censoring: float = math.nan) -> RepResult:
    return RepResult(
        rep_index=rep_index,
        beta_hat=(math.nan,) * n_beta,
        rho_hat=math.nan,
        se_beta=(math.nan,) * n_beta,
        se_rho=math.nan,
        ci_covers=(False,) * (n_beta + 1),
        converged=False,
        censoring=censoring,
        message=message,
    )


def run_replicate(
    cfg: ScenarioConfig,
    fit_config: FitConfig,
    rep_index: int,
    seed: np.random.SeedSequence | int | None = None,
) -> RepResult:
    """Generate one dataset, fit it and attach sandwich standard errors."""
    if seed is None:
        seed = rep_seed(cfg.master_seed, rep_index)
    rng = np.random.default_rng(seed)
    n_beta = len(cfg.beta_true)
    dataset = generate_dataset(cfg, rng)
    censoring = censoring_fraction(dataset)
    try:
        result = fit(dataset, fit_config)
        if not result.converged:
            return _failed_rep(rep_index, n_beta, result.message, censoring)
        est = sandwich(dataset, result)
    except FrailtyError as exc:
        logger.info("rep_failed rep=%d error=%s", rep_index, exc)
        return _failed_rep(rep_index, n_beta, str(exc), censoring)

    se = est.standard_errors
    beta_hat = tuple(float(b) for b in result.beta_hat)
    rho_hat = float(result.rho_hat[0])
    covers = []
    for i, (value, truth) in enumerate(zip(beta_hat, cfg.beta_true)):
        lo, hi = confidence_interval(value, float(se[i]), CI_Z)
        covers.append(lo <= truth <= hi)
    lo, hi = confidence_interval(rho_hat, float(se[n_beta]), CI_Z, (0.0, RHO_MAX))
    covers.append(bool(lo <= cfg.rho_true <= hi))
    return RepResult(
        rep_index=rep_index,
        beta_hat=beta_hat,
        rho_hat=rho_hat,
        se_beta=tuple(float(s) for s in se[:n_beta]),
        se_rho=float(se[n_beta]),
        ci_covers=tuple(bool(c) for c in covers),
        converged=True,
        censoring=censoring,
        n_outer_iters=result.n_outer_iters,
    )


def _run_one(job: tuple[ScenarioConfig, FitConfig, int, int | None]) -> RepResult:
    cfg, fit_config, rep_index, seed = job
    return run_replicate(cfg, fit_config, rep_index, seed)


def summarize(cfg: ScenarioConfig, results: Iterable[RepResult]) -> SummaryTable:
    """Bias / SEE / SSE / MSE / coverage per parameter over converged replicates."""
    ordered = sorted(results, key=lambda r: r.rep_index)
    used = [r for r in ordered if r.converged]
    truth = cfg.truth
    rows = []
    for i, name in enumerate(PARAMETER_NAMES):
        estimates = np.array([r.estimates[i] for r in used])
        ses = np.array([r.standard_errors[i] for r in used])
        with_se = np.isfinite(ses)
        if estimates.size:
            bias = float(estimates.mean() - truth[i])
            sse = float(estimates.std(ddof=1)) if estimates.size > 1 else math.nan
        else:
            bias = sse = math.nan
        see = float(ses[with_se].mean()) if with_se.any() else math.nan
        coverage = float(np.mean([r.ci_covers[i] for r, ok in zip(used, with_se) if ok])) if with_se.any() else math.nan
        rows.append(
            ParameterSummary(
                name=name,
                true_value=float(truth[i]),
                bias=bias,
                see=see,
                sse=sse,
                mse=bias**2 + sse**2,
                coverage=coverage,
                n_used=int(estimates.size),
            )
        )
    n_reps = len(ordered)
    failed = n_reps - len(used)
    flagged = failed > MAX_NONCONVERGED_FRACTION * n_reps
    if flagged:
        message = f"scenario {cfg.label or '?'}: {failed} of {n_reps} replicates failed to converge"
        logger.warning(message)
        warnings.warn(message, FrailtyWarning, stacklevel=2)
    censoring = [r.censoring for r in ordered if math.isfinite(r.censoring)]
    return SummaryTable(
        label=cfg.label,
        rows=tuple(rows),
        n_reps=n_reps,
        n_converged=len(used),
        flagged=flagged,
        censoring=float(np.mean(censoring)) if censoring else math.nan,
        config=cfg,
    )


def run_scenario(
    cfg: ScenarioConfig,
    fit_config: FitConfig | None = None,
    workers: int = 1,
    seeds: Sequence[int] | None = None,
    on_result: Callable[[RepResult], None] | None = None,
    show_progress: bool = False,
) -> SummaryTable:
    """Run n_reps generate-fit-sandwich replicates and aggregate them.

    seeds overrides the per-replicate streams derived from cfg.master_seed.
    """
    fit_config = fit_config or FitConfig(corr_kind=cfg.corr_kind)
    if seeds is not None and len(seeds) != cfg.n_reps:
        raise ConfigError(f"got {len(seeds)} seeds for {cfg.n_reps} replicates")
    jobs = [(cfg, fit_config, rep, None if seeds is None else int(seeds[rep])) for rep in range(cfg.n_reps)]
    results: list[RepResult] = []

    progress = Progress(
        TextColumn("[bold]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        console=Console(stderr=True),
        disable=not show_progress,
        transient=True,
    )
    with progress:
        task = progress.add_task(cfg.label or "replicates", total=len(jobs))
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outcomes = pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers)))
                for outcome in outcomes:
                    results.append(outcome)
                    if on_result is not None:
                        on_result(outcome)
                    progress.advance(task)
        else:
            for job in jobs:
                outcome = _run_one(job)
                results.append(outcome)
                if on_result is not None:
                    on_result(outcome)
                progress.advance(task)

    logger.info("scenario_done label=%s reps=%d", cfg.label, len(results))
    return summarize(cfg, results)


def reference_gaps(summary: SummaryTable, row: tuple[str, int, float]) -> list[str]:
    """Published-row checks the summary misses: SSE of each beta and SEE/SSE.

    Returns one message per miss; an empty list means the row is reproduced.
    """
    if row not in REFERENCE_ROWS:
        raise ConfigError(f"no published row for {row!r}")
    published = REFERENCE_ROWS[row]
    low, high = SEE_SSE_RATIO_RANGE
    gaps = []
    for name, sse_ref in zip(PARAMETER_NAMES, published["sse"]):
        found = summary.row(name)
        target = sse_ref / 1000.0
        if not abs(found.sse - target) <= REFERENCE_SSE_TOLERANCE * target:
            gaps.append(f"{name} sse={found.sse:.4f} published={target:.3f}")
        ratio = found.see / found.sse if found.sse > 0.0 else math.nan
        if not low <= ratio <= high:
            gaps.append(f"{name} see/sse={ratio:.3f} outside [{low}, {high}]")
    return gaps
