"""Hybrid generalized EM fitter for the NPMCLE.

One outer iteration runs EM sweeps in (beta, Lambda) at fixed rho and then
maximizes the composite log-likelihood over rho at fixed (beta, Lambda):

- E-step: average over partners of the pair conditional frailty means.
- M-step: Newton-Raphson on the partial score offset by the E-step weights,
  followed by the Breslow-type baseline update.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import optimize

from pofrailty.config import (
    BETA_BOUND,
    INIT_RHO,
    MAX_INNER_SWEEPS,
    MAX_NEWTON_ITERS,
    MAX_OUTER_ITERS,
    NEWTON_TOL,
    RHO_BOUNDARY_EPS,
    RHO_MAX,
    RHO_XATOL,
    TOL_LOGLIK,
    TOL_PARAMS,
)
from pofrailty.data import DesignArrays
from pofrailty.errors import (
    ConfigError,
    DegenerateDesignError,
    EStepDegenerateError,
    NewtonConvergenceError,
)
from pofrailty.frailty import CorrelationKind, CorrelationModel
from pofrailty.likelihood import (
    composite_loglik_terms,
    evaluate_u,
    pair_dlog_du,
    pair_log_terms,
    pair_v,
    pair_w,
    singleton_dlog_du,
    u_value,
)
from pofrailty.logs import get_logger
from pofrailty.models import BaselineFunction, Dataset, ModelParams, Observation

logger = get_logger(__name__)


@dataclass(frozen=True)
class FitConfig:
    """Tolerances, iteration caps and starting values for the hybrid EM."""

    tol_params: float = TOL_PARAMS
    tol_loglik: float = TOL_LOGLIK
    max_outer_iters: int = MAX_OUTER_ITERS
    max_newton_iters: int = MAX_NEWTON_ITERS
    max_inner_sweeps: int = MAX_INNER_SWEEPS
    newton_tol: float = NEWTON_TOL
    rho_bounds: tuple[float, float] = (0.0, RHO_MAX)
    init_beta: tuple[float, ...] | None = None
    init_rho: float | tuple[float, ...] = INIT_RHO
    corr_kind: CorrelationKind = CorrelationKind.EXCHANGEABLE
    fixed_matrix: tuple[tuple[float, ...], ...] | None = None
    fix_rho: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "corr_kind", CorrelationKind(self.corr_kind))
        for name in ("tol_params", "tol_loglik", "newton_tol"):
            if not getattr(self, name) > 0.0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ("max_outer_iters", "max_newton_iters", "max_inner_sweeps"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)!r}")
        lo, hi = self.rho_bounds
        if not (0.0 <= lo <= hi <= RHO_MAX):
            raise ConfigError(f"rho_bounds {self.rho_bounds!r} must satisfy 0 <= lo <= hi <= {RHO_MAX}")
        if self.corr_kind is CorrelationKind.FIXED and self.fixed_matrix is None:
            raise ConfigError("corr_kind 'fixed' requires fixed_matrix")

    def initial_correlation(self) -> CorrelationModel:
        if self.corr_kind is CorrelationKind.FIXED:
            assert self.fixed_matrix is not None
            return CorrelationModel.fixed(np.array(self.fixed_matrix, dtype=float))
        rho = float(np.atleast_1d(self.init_rho)[0])
        lo, hi = self.rho_bounds
        return CorrelationModel(self.corr_kind, (min(max(rho, lo), hi),))


@dataclass(frozen=True, eq=False)
class EStepWeights:
    """Per-observation average conditional frailty expectation, in design order."""

    w_hat: np.ndarray


class BetaUpdate(NamedTuple):
    beta: np.ndarray
    at_boundary: bool
    n_iter: int
    score_norm: float


class RhoUpdate(NamedTuple):
    corr: CorrelationModel
    at_boundary: bool
    loglik: float


@dataclass(frozen=True, eq=False)
class FitResult:
    """Point estimates of the NPMCLE with the iteration record."""

    beta_hat: np.ndarray
    corr: CorrelationModel
    baseline_hat: BaselineFunction
    loglik: float
    n_outer_iters: int
    n_em_sweeps: int
    converged: bool
    loglik_trace: tuple[float, ...]
    beta_at_boundary: bool = False
    rho_at_boundary: bool = False
    rho_estimated: bool = True
    vcov: np.ndarray | None = None
    message: str = ""
    extra: dict[str, object] = field(default_factory=dict)

    @property
    def rho_hat(self) -> np.ndarray:
        return self.corr.rho_vector

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.beta_hat, self.corr)


def as_design(dataset: Dataset | DesignArrays) -> DesignArrays:
    return dataset.design if isinstance(dataset, Dataset) else dataset


def _pair_expectations(u_j, u_k, d_j, d_k, rho) -> tuple[np.ndarray, np.ndarray]:
    v = pair_v(u_j, u_k, rho)
    w_jk = pair_w(u_j, u_k, d_j, d_k, rho)
    w_kj = pair_w(u_k, u_j, d_k, d_j, rho)
    if not (np.all(v > 0.0) and np.all(w_jk > 0.0) and np.all(w_kj > 0.0)):
        raise EStepDegenerateError("E-step degenerate pair: vanishing denominator")
    e_j = -pair_dlog_du(u_j, u_k, d_j, d_k, rho)
    e_k = -pair_dlog_du(u_k, u_j, d_k, d_j, rho)
    if not (np.all(np.isfinite(e_j)) and np.all(np.isfinite(e_k))):
        raise EStepDegenerateError("E-step degenerate pair: non-finite expectation")
    return e_j, e_k


def estep_pair_expectation(
    obs_j: Observation, obs_k: Observation, params: ModelParams, baseline: BaselineFunction
) -> tuple[float, float]:
    """(E[W_j | X_j, X_k], E[W_k | X_j, X_k]) for the pair's event pattern."""
    rho = float(params.corr.pair_rho(obs_j.member_index, obs_k.member_index))
    u_j = u_value(obs_j, params.beta, baseline)
    u_k = u_value(obs_k, params.beta, baseline)
    e_j, e_k = _pair_expectations(u_j, u_k, float(obs_j.event), float(obs_k.event), rho)
    return float(e_j), float(e_k)


def estep_weights(
    dataset: Dataset | DesignArrays, params: ModelParams, baseline: BaselineFunction
) -> EStepWeights:
    design = as_design(dataset)
    _, u, _ = evaluate_u(design, params.beta, baseline)
    d = design.event
    w_hat = np.zeros(design.n_obs)
    if design.pair_j.size:
        j, k = design.pair_j, design.pair_k
        rho = params.corr.pair_rho(design.member[j], design.member[k])
        e_j, e_k = _pair_expectations(u[j], u[k], d[j], d[k], rho)
        weight = design.pair_weight
        w_hat += np.bincount(j, weights=weight * e_j, minlength=design.n_obs)
        w_hat += np.bincount(k, weights=weight * e_k, minlength=design.n_obs)
    if design.singletons.size:
        s = design.singletons
        w_hat[s] = -singleton_dlog_du(u[s], d[s])
    return EStepWeights(w_hat=w_hat)


def _weighted_partial(
    design: DesignArrays, w_hat: np.ndarray, beta: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """Breslow partial log-likelihood with offset log w_hat, its score and information."""
    z = design.z
    eta = z @ beta
    shift = eta.max()
    risk = w_hat * np.exp(eta - shift)
    rz = risk[:, None] * z
    s0 = design.risk_sums(risk)
    s1 = design.risk_sums(rz)
    s2 = design.risk_sums(rz[:, :, None] * z[:, None, :])
    deaths = design.deaths
    failed = design.failed
    loglik = float((eta[failed] - shift).sum() - (deaths * np.log(s0)).sum())
    zbar = s1 / s0[:, None]
    score = z[failed].sum(axis=0) - (deaths[:, None] * zbar).sum(axis=0)
    info = (deaths[:, None, None] * (s2 / s0[:, None, None] - zbar[:, :, None] * zbar[:, None, :])).sum(axis=0)
    return loglik, score, info


def _project_to_box(beta: np.ndarray) -> tuple[np.ndarray, bool]:
    norm = float(np.linalg.norm(beta))
    if norm <= BETA_BOUND:
        return beta, norm >= BETA_BOUND * (1.0 - 1e-9)
    return beta * (BETA_BOUND / norm), True


def mstep_beta(
    dataset: Dataset | DesignArrays,
    weights: EStepWeights,
    beta_init: Sequence[float] | np.ndarray,
    config: FitConfig | None = None,
) -> BetaUpdate:
    """Solve the weighted partial score equation by damped Newton-Raphson."""
    config = config or FitConfig()
    design = as_design(dataset)
    beta, at_boundary = _project_to_box(np.array(beta_init, dtype=float))
    if design.p1 == 0:
        return BetaUpdate(beta, False, 0, 0.0)
    loglik, score, info = _weighted_partial(design, weights.w_hat, beta)
    score_norm = float(np.linalg.norm(score)) / design.m

    for n_iter in range(config.max_newton_iters):
        eigvals = np.linalg.eigvalsh(info)
        if eigvals.min() <= 1e-12 * max(1.0, float(np.abs(info).max())):
            raise DegenerateDesignError(
                f"degenerate design: partial-likelihood information has eigenvalue {eigvals.min():.3e}"
            )
        if score_norm < config.newton_tol:
            return BetaUpdate(beta, at_boundary, n_iter, score_norm)

        step = np.linalg.solve(info, score)
        scale = 1.0
        while True:
            candidate, cand_boundary = _project_to_box(beta + scale * step)
            cand_loglik, cand_score, cand_info = _weighted_partial(design, weights.w_hat, candidate)
            if cand_loglik >= loglik - 1e-12 * abs(loglik) or scale < 1e-10:
                break
            scale *= 0.5

        moved = float(np.linalg.norm(candidate - beta))
        beta, at_boundary = candidate, cand_boundary
        loglik, score, info = cand_loglik, cand_score, cand_info
        score_norm = float(np.linalg.norm(score)) / design.m
        if moved <= 1e-14 * (1.0 + float(np.linalg.norm(beta))):
            if at_boundary or score_norm < 1e-6:
                return BetaUpdate(beta, at_boundary, n_iter + 1, score_norm)
            raise NewtonConvergenceError(n_iter + 1, score_norm, beta.tolist())

    if score_norm < config.newton_tol or at_boundary:
        return BetaUpdate(beta, at_boundary, config.max_newton_iters, score_norm)
    raise NewtonConvergenceError(config.max_newton_iters, score_norm, beta.tolist())


def mstep_baseline(
    dataset: Dataset | DesignArrays, weights: EStepWeights, beta: Sequence[float] | np.ndarray
) -> BaselineFunction:
    """Breslow-type update: jump = failures at s / sum of w_hat exp(Z'beta) over {Y >= s}."""
    design = as_design(dataset)
    risk = weights.w_hat * np.exp(design.z @ np.asarray(beta, dtype=float))
    s0 = design.risk_sums(risk)
    assert np.all(s0 > 0.0), "empty risk set at a failure time"
    return BaselineFunction(design.jump_times, design.deaths / s0)


def _rho_profile(
    design: DesignArrays, beta: np.ndarray, baseline: BaselineFunction, corr: CorrelationModel
) -> Callable[[np.ndarray], float]:
    """Mean composite log-likelihood as a function of rho with (beta, Lambda) frozen."""
    eta, u, log_lam = evaluate_u(design, beta, baseline)
    d = design.event
    fixed_part = float(np.sum(d * (log_lam + eta)))
    if design.singletons.size:
        s = design.singletons
        fixed_part += float(np.sum(-(1.0 + d[s]) * np.log1p(u[s])))
    j, k = design.pair_j, design.pair_k
    u_j, u_k, d_j, d_k = u[j], u[k], d[j], d[k]
    mj, mk = design.member[j], design.member[k]
    weight = design.pair_weight

    def profile(rho: np.ndarray) -> float:
        pair_rho = corr.with_rho(rho).pair_rho(mj, mk)
        return (fixed_part + float(np.sum(weight * pair_log_terms(u_j, u_k, d_j, d_k, pair_rho)))) / design.m

    return profile


def profile_loglik_rho(
    dataset: Dataset | DesignArrays,
    beta: Sequence[float] | np.ndarray,
    baseline: BaselineFunction,
    corr: CorrelationModel,
    grid: Sequence[float] | np.ndarray,
) -> np.ndarray:
    """Composite log-likelihood over a grid of scalar rho values."""
    profile = _rho_profile(as_design(dataset), np.asarray(beta, dtype=float), baseline, corr)
    return np.array([profile(np.array([value])) for value in grid])


def maximize_rho(
    dataset: Dataset | DesignArrays,
    beta: Sequence[float] | np.ndarray,
    baseline: BaselineFunction,
    corr_init: CorrelationModel,
    bounds: tuple[float, float] = (0.0, RHO_MAX),
) -> RhoUpdate:
    """Direct maximization of the composite log-likelihood over rho."""
    design = as_design(dataset)
    profile = _rho_profile(design, np.asarray(beta, dtype=float), baseline, corr_init)
    start = corr_init.rho_vector
    if corr_init.n_params == 0:
        return RhoUpdate(corr_init, False, profile(start))

    lo, hi = bounds
    start_value = profile(start)
    if corr_init.n_params == 1:
        result = optimize.minimize_scalar(
            lambda r: -profile(np.array([r])),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": RHO_XATOL},
        )
        candidates = [(start_value, start), (profile(np.array([lo])), np.array([lo])), (profile(np.array([hi])), np.array([hi]))]
        candidates.append((-float(result.fun), np.array([float(result.x)])))
    else:
        result = optimize.minimize(
            lambda r: -profile(r),
            x0=np.clip(start, lo, hi),
            method="L-BFGS-B",
            bounds=[(lo, hi)] * corr_init.n_params,
        )
        candidates = [(start_value, start), (-float(result.fun), np.asarray(result.x, dtype=float))]

    # Never return a point worse than the start; ties keep the earliest candidate.
    best_value, best_rho = candidates[0]
    for value, rho in candidates[1:]:
        if value > best_value:
            best_value, best_rho = value, rho
    at_boundary = bool(np.any(best_rho - lo <= RHO_BOUNDARY_EPS) or np.any(hi - best_rho <= RHO_BOUNDARY_EPS))
    return RhoUpdate(corr_init.with_rho(best_rho), at_boundary, best_value)


def _cumulative_change(old: BaselineFunction, new: BaselineFunction) -> float:
    return float(np.max(np.abs(new.cumulative - old.cumulative))) if new.n_jumps else 0.0


def fit(dataset: Dataset, config: FitConfig | None = None) -> FitResult:
    """Alternate EM sweeps in (beta, Lambda) with direct rho maximization until stable."""
    config = config or FitConfig()
    design = dataset.design
    beta0 = np.zeros(design.p1) if config.init_beta is None else np.array(config.init_beta, dtype=float)
    if beta0.shape != (design.p1,):
        raise ConfigError(f"init_beta has length {beta0.size}, dataset has {design.p1} covariates")
    params = ModelParams(beta0, config.initial_correlation())
    baseline = mstep_baseline(design, EStepWeights(np.ones(design.n_obs)), params.beta)
    estimate_rho = params.corr.n_params > 0 and not config.fix_rho

    loglik = float(np.mean(composite_loglik_terms(design, params, baseline)))
    trace = [loglik]
    n_sweeps = 0
    beta_boundary = False
    rho_boundary = False
    converged = False
    outer = 0
    logger.debug("fit_start m=%d n=%d q=%d loglik=%.10f", design.m, design.n_obs, design.n_jumps, loglik)

    for outer in range(1, config.max_outer_iters + 1):
        start_beta, start_rho, start_baseline = params.beta, params.rho, baseline
        for _ in range(config.max_inner_sweeps):
            weights = estep_weights(design, params, baseline)
            update = mstep_beta(design, weights, params.beta, config)
            new_baseline = mstep_baseline(design, weights, update.beta)
            change = max(
                float(np.max(np.abs(update.beta - params.beta), initial=0.0)),
                _cumulative_change(baseline, new_baseline),
            )
            params, baseline, beta_boundary = params.with_beta(update.beta), new_baseline, update.at_boundary
            n_sweeps += 1
            if change < 10.0 * config.tol_params:
                break

        if estimate_rho:
            rho_update = maximize_rho(design, params.beta, baseline, params.corr, config.rho_bounds)
            params = ModelParams(params.beta, rho_update.corr)
            rho_boundary = rho_update.at_boundary

        new_loglik = float(np.mean(composite_loglik_terms(design, params, baseline)))
        trace.append(new_loglik)
        delta = max(
            float(np.max(np.abs(params.beta - start_beta), initial=0.0)),
            float(np.max(np.abs(params.rho - start_rho), initial=0.0)),
            _cumulative_change(start_baseline, baseline),
        )
        logger.debug(
            "fit_outer iter=%d sweeps=%d loglik=%.10f delta=%.3e rho=%s",
            outer,
            n_sweeps,
            new_loglik,
            delta,
            np.round(params.rho, 6).tolist(),
        )
        loglik_change = abs(new_loglik - loglik)
        loglik = new_loglik
        if delta < config.tol_params and loglik_change < config.tol_loglik:
            converged = True
            break

    message = "" if converged else f"no convergence after {outer} outer iterations"
    if not converged:
        logger.warning("fit_nonconverged outer=%d loglik=%.10f", outer, loglik)
    if beta_boundary:
        logger.warning("fit_beta_boundary beta=%s", params.beta.tolist())
    return FitResult(
        beta_hat=params.beta,
        corr=params.corr,
        baseline_hat=baseline,
        loglik=loglik,
        n_outer_iters=outer,
        n_em_sweeps=n_sweeps,
        converged=converged,
        loglik_trace=tuple(trace),
        beta_at_boundary=beta_boundary,
        rho_at_boundary=rho_boundary and estimate_rho,
        rho_estimated=estimate_rho,
        message=message,
    )
