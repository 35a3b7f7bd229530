"""Sandwich covariance of the NPMCLE.

Coordinates are ordered (beta, rho, jump sizes of Lambda at the fitted support).
Scores are analytic; the Hessian is a central finite difference of the mean
score; J is the mean outer product of per-cluster scores.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from pofrailty.config import HESSIAN_REL_STEP, RHO_MAX, SINGULAR_CONDITION
from pofrailty.data import DesignArrays, build_design
from pofrailty.em import FitResult, as_design
from pofrailty.errors import InformationSingularError, NonFiniteError, ParameterError
from pofrailty.likelihood import evaluate_u, pair_dlog_drho, pair_dlog_du, singleton_dlog_du
from pofrailty.logs import get_logger
from pofrailty.models import BaselineFunction, Cluster, Dataset, ModelParams

logger = get_logger(__name__)

_UNIT_BALL_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class ScoreVector:
    entries: np.ndarray
    p1: int
    p2: int

    @property
    def beta(self) -> np.ndarray:
        return self.entries[: self.p1]

    @property
    def rho(self) -> np.ndarray:
        return self.entries[self.p1 : self.p1 + self.p2]

    @property
    def jumps(self) -> np.ndarray:
        return self.entries[self.p1 + self.p2 :]


@dataclass(frozen=True, eq=False)
class SandwichEstimate:
    """H, J and the finite-dimensional covariance of (beta_hat, rho_hat).

    When rho is not estimated (fixed structure or a boundary estimate) its
    coordinates are left out of H and J, and vcov_finite carries NaN there.
    """

    h: np.ndarray
    j: np.ndarray
    vcov_finite: np.ndarray
    m: int
    p1: int
    p2: int
    rho_included: bool
    condition_number: float
    jump_times: np.ndarray

    @property
    def n_finite(self) -> int:
        return self.p1 + (self.p2 if self.rho_included else 0)

    @property
    def standard_errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov_finite), 0.0, None))


@dataclass(frozen=True)
class ContrastVector:
    """(h1, h2, h3) with h3 given by its values at the jump times."""

    h1: tuple[float, ...]
    h2: tuple[float, ...] = ()
    h3: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        for name in ("h1", "h2", "h3"):
            object.__setattr__(self, name, tuple(float(x) for x in np.ravel(getattr(self, name))))

    def check_unit_balls(self) -> None:
        h3 = np.asarray(self.h3)
        variation = float(abs(h3[0]) + np.abs(np.diff(h3)).sum()) if h3.size else 0.0
        if np.linalg.norm(self.h1) > 1.0 + _UNIT_BALL_SLACK or np.linalg.norm(self.h2) > 1.0 + _UNIT_BALL_SLACK:
            raise ParameterError("contrast h1 and h2 must lie in the unit ball")
        if variation > 1.0 + _UNIT_BALL_SLACK:
            raise ParameterError(f"contrast h3 has total variation {variation:.4g} > 1")


def _group_sum(values: np.ndarray, groups: np.ndarray, n_groups: int) -> np.ndarray:
    out = np.zeros((n_groups,) + values.shape[1:])
    np.add.at(out, groups, values)
    return out


def _scores(
    design: DesignArrays,
    params: ModelParams,
    baseline: BaselineFunction,
    per_cluster: bool = True,
) -> np.ndarray:
    """Composite scores, one row per cluster or a single summed row."""
    eta, u, _ = evaluate_u(design, params.beta, baseline)
    d = design.event
    p1, p2, n_jumps = design.p1, params.corr.n_params, baseline.n_jumps
    if per_cluster:
        n_groups, obs_group, pair_group = design.m, design.cluster, design.pair_cluster
    else:
        n_groups = 1
        obs_group = np.zeros(design.n_obs, dtype=int)
        pair_group = np.zeros(design.pair_j.size, dtype=int)

    # dlogL/du_j aggregated over every term observation j enters
    grad_u = np.zeros(design.n_obs)
    j, k = design.pair_j, design.pair_k
    if j.size:
        rho = params.corr.pair_rho(design.member[j], design.member[k])
        weight = design.pair_weight
        grad_u += np.bincount(j, weights=weight * pair_dlog_du(u[j], u[k], d[j], d[k], rho), minlength=design.n_obs)
        grad_u += np.bincount(k, weights=weight * pair_dlog_du(u[k], u[j], d[k], d[j], rho), minlength=design.n_obs)
    if design.singletons.size:
        s = design.singletons
        grad_u[s] = singleton_dlog_du(u[s], d[s])

    out = np.zeros((n_groups, p1 + p2 + n_jumps))
    out[:, :p1] = _group_sum((d + grad_u * u)[:, None] * design.z, obs_group, n_groups)

    if p2 and j.size:
        drho = weight * pair_dlog_drho(u[j], u[k], d[j], d[k], rho)
        chain = params.corr.pair_rho_gradient(design.member[j], design.member[k])
        out[:, p1 : p1 + p2] = _group_sum(drho[:, None] * chain, pair_group, n_groups)

    if n_jumps:
        jumps = np.zeros((n_groups, n_jumps))
        upto = np.searchsorted(baseline.jump_times, design.time, side="right")
        at_risk = upto > 0
        np.add.at(jumps, (obs_group[at_risk], upto[at_risk] - 1), (grad_u * np.exp(eta))[at_risk])
        # u_j depends on every jump at or before Y_j
        jumps = np.cumsum(jumps[:, ::-1], axis=1)[:, ::-1]
        failed = design.failed
        own = np.searchsorted(baseline.jump_times, design.time[failed], side="left")
        np.add.at(jumps, (obs_group[failed], own), 1.0 / baseline.jump_sizes[own])
        out[:, p1 + p2 :] = jumps
    return out


def cluster_scores(dataset: Dataset | DesignArrays, params: ModelParams, baseline: BaselineFunction) -> np.ndarray:
    """Per-cluster composite scores, shape (m, p1 + p2 + Q)."""
    return _scores(as_design(dataset), params, baseline)


def cluster_score(cluster: Cluster, params: ModelParams, baseline: BaselineFunction) -> ScoreVector:
    """Analytic score of one cluster's composite log-likelihood at the fitted support."""
    entries = _scores(build_design([cluster]), params, baseline)[0]
    return ScoreVector(entries, len(params.beta), params.corr.n_params)


def mean_score(dataset: Dataset | DesignArrays, params: ModelParams, baseline: BaselineFunction) -> np.ndarray:
    """Gradient of dataset_composite_loglik (the cluster mean)."""
    design = as_design(dataset)
    return _scores(design, params, baseline, per_cluster=False)[0] / design.m


def pack_coordinates(params: ModelParams, baseline: BaselineFunction) -> np.ndarray:
    return np.concatenate([params.beta, params.rho, baseline.jump_sizes])


def unpack_coordinates(
    theta: np.ndarray, template: ModelParams, baseline: BaselineFunction
) -> tuple[ModelParams, BaselineFunction]:
    p1, p2 = len(template.beta), template.corr.n_params
    corr = template.corr.with_rho(theta[p1 : p1 + p2]) if p2 else template.corr
    return ModelParams(theta[:p1], corr), baseline.with_sizes(theta[p1 + p2 :])


def _fd_steps(theta: np.ndarray, p_finite: int) -> np.ndarray:
    steps = HESSIAN_REL_STEP * np.abs(theta)
    steps[:p_finite] = HESSIAN_REL_STEP * np.maximum(1.0, np.abs(theta[:p_finite]))
    return steps


def hessian(
    dataset: Dataset | DesignArrays,
    params: ModelParams,
    baseline: BaselineFunction,
    include_rho: bool = True,
) -> np.ndarray:
    """Symmetrized central finite difference of the mean analytic score.

    With include_rho=False the rho rows and columns are omitted.
    """
    design = as_design(dataset)
    theta = pack_coordinates(params, baseline)
    p1, p2 = len(params.beta), params.corr.n_params
    keep = np.ones(theta.size, dtype=bool)
    if not include_rho:
        keep[p1 : p1 + p2] = False
    coords = np.flatnonzero(keep)
    steps = _fd_steps(theta, p1 + p2)

    out = np.zeros((coords.size, coords.size))
    for col, idx in enumerate(coords):
        step = steps[idx]
        if p1 <= idx < p1 + p2:
            step = min(step, max(theta[idx], 1e-12), max(RHO_MAX - theta[idx], 1e-12))
        plus, minus = theta.copy(), theta.copy()
        plus[idx] += step
        minus[idx] -= step
        g_plus = mean_score(design, *unpack_coordinates(plus, params, baseline))[keep]
        g_minus = mean_score(design, *unpack_coordinates(minus, params, baseline))[keep]
        column = (g_plus - g_minus) / (2.0 * step)
        if not np.all(np.isfinite(column)):
            raise NonFiniteError(int(idx), "Hessian column")
        out[:, col] = column
    return 0.5 * (out + out.T)


def condition_number(h: np.ndarray) -> float:
    if h.size == 0:
        return 1.0
    return float(np.linalg.cond(h))


def sandwich(dataset: Dataset, fit: FitResult) -> SandwichEstimate:
    """H^-1 J H^-1 restricted to the (beta, rho) block, scaled by 1/m."""
    design = dataset.design
    params, baseline = fit.params, fit.baseline_hat
    p1, p2 = len(params.beta), params.corr.n_params
    rho_included = p2 > 0 and fit.rho_estimated and not fit.rho_at_boundary
    if p2 and not rho_included:
        logger.info("sandwich_rho_dropped boundary=%s estimated=%s", fit.rho_at_boundary, fit.rho_estimated)

    scores = cluster_scores(design, params, baseline)
    keep = np.ones(scores.shape[1], dtype=bool)
    if not rho_included:
        keep[p1 : p1 + p2] = False
    scores = scores[:, keep]
    h = hessian(design, params, baseline, include_rho=rho_included)
    j = scores.T @ scores / design.m

    cond = condition_number(h)
    if not np.isfinite(cond) or cond > SINGULAR_CONDITION:
        raise InformationSingularError(cond)

    n_finite = p1 + (p2 if rho_included else 0)
    x = linalg.solve(h, np.eye(h.shape[0])[:, :n_finite], assume_a="sym")
    block = x.T @ j @ x / design.m
    block = 0.5 * (block + block.T)

    vcov = np.full((p1 + p2, p1 + p2), np.nan)
    finite_idx = np.arange(n_finite) if rho_included else np.arange(p1)
    vcov[np.ix_(finite_idx, finite_idx)] = block
    logger.debug("sandwich m=%d dim=%d cond=%.3e", design.m, h.shape[0], cond)
    return SandwichEstimate(
        h=h,
        j=j,
        vcov_finite=vcov,
        m=design.m,
        p1=p1,
        p2=p2,
        rho_included=rho_included,
        condition_number=cond,
        jump_times=baseline.jump_times,
    )


def _assemble(est: SandwichEstimate, contrast: ContrastVector) -> np.ndarray:
    n_jumps = est.jump_times.size
    if len(contrast.h1) != est.p1:
        raise ParameterError(f"h1 has length {len(contrast.h1)}, expected {est.p1}")
    h2 = np.asarray(contrast.h2) if contrast.h2 else np.zeros(est.p2)
    if h2.size != est.p2:
        raise ParameterError(f"h2 has length {h2.size}, expected {est.p2}")
    h3 = np.asarray(contrast.h3) if contrast.h3 else np.zeros(n_jumps)
    if h3.size != n_jumps:
        raise ParameterError(f"h3 has {h3.size} values, expected one per jump time ({n_jumps})")
    if not est.rho_included:
        h2 = np.zeros(0)
    return np.concatenate([np.asarray(contrast.h1), h2, h3])


def contrast_variance(est: SandwichEstimate, contrast: ContrastVector) -> float:
    """Asymptotic variance of sqrt(m) times the contrast: h' H^-1 J H^-1 h."""
    contrast.check_unit_balls()
    h_m = _assemble(est, contrast)
    x = linalg.solve(est.h, h_m, assume_a="sym")
    return max(float(x @ est.j @ x), 0.0)


def baseline_pointwise_se(est: SandwichEstimate) -> np.ndarray:
    """Standard error of Lambda_hat(t) at every jump time (h3 = 1{s <= t})."""
    n_jumps = est.jump_times.size
    if n_jumps == 0:
        return np.zeros(0)
    contrasts = np.zeros((est.h.shape[0], n_jumps))
    contrasts[est.n_finite :, :] = np.triu(np.ones((n_jumps, n_jumps)))
    x = linalg.solve(est.h, contrasts, assume_a="sym")
    variances = np.einsum("iq,ij,jq->q", x, est.j, x) / est.m
    return np.sqrt(np.clip(variances, 0.0, None))


def confidence_interval(estimate: float, se: float, z: float, bounds: Sequence[float] | None = None) -> tuple[float, float]:
    lo, hi = estimate - z * se, estimate + z * se
    if bounds is not None:
        lo, hi = max(lo, bounds[0]), min(hi, bounds[1])
    return lo, hi
