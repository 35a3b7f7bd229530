"""Composite contributing marginal log-likelihood of the proportional-odds frailty model.

Integrating Exp(1) frailties out of the conditional proportional hazards model
gives marginal failure odds Lambda(t) * exp(z'beta). A pair of correlated
observations contributes

    log w + d_j log lambda(Y_j) + d_k log lambda(Y_k) + (d_j Z_j + d_k Z_k)'beta
        - (1 + d_j + d_k) log v

with u = Lambda(Y) exp(Z'beta), v = (1 - rho) u_j u_k + u_j + u_k + 1 and w as in
pair_w below. A cluster of size n averages its pairs with weight 1/(n - 1);
singleton clusters contribute their univariate marginal term.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from pofrailty.data import DesignArrays, build_design
from pofrailty.errors import BaselineSupportError
from pofrailty.models import BaselineFunction, Cluster, Dataset, ModelParams, Observation, PairKernel

ArrayLike = np.ndarray | float


def pair_v(u_j: ArrayLike, u_k: ArrayLike, rho: ArrayLike) -> np.ndarray:
    return (1.0 - rho) * u_j * u_k + u_j + u_k + 1.0


def pair_w(u_j: ArrayLike, u_k: ArrayLike, d_j: ArrayLike, d_k: ArrayLike, rho: ArrayLike) -> np.ndarray:
    s = 1.0 - rho
    return d_j * d_k * s * s * u_j * u_k + d_j * s * u_k + d_k * s * u_j + 1.0 + d_j * d_k * rho


def pair_log_terms(u_j: ArrayLike, u_k: ArrayLike, d_j: ArrayLike, d_k: ArrayLike, rho: ArrayLike) -> np.ndarray:
    """log w - (1 + d_j + d_k) log v: the frailty-dependent part of a pair."""
    return np.log(pair_w(u_j, u_k, d_j, d_k, rho)) - (1.0 + d_j + d_k) * np.log(pair_v(u_j, u_k, rho))


def pair_dlog_du(u_j: ArrayLike, u_k: ArrayLike, d_j: ArrayLike, d_k: ArrayLike, rho: ArrayLike) -> np.ndarray:
    """Derivative of pair_log_terms in u_j. Its negative is E[W_j | X_j, X_k]."""
    s = 1.0 - rho
    dw = d_k * s * (1.0 + d_j * s * u_k)
    dv = 1.0 + s * u_k
    return dw / pair_w(u_j, u_k, d_j, d_k, rho) - (1.0 + d_j + d_k) * dv / pair_v(u_j, u_k, rho)


def pair_dlog_drho(u_j: ArrayLike, u_k: ArrayLike, d_j: ArrayLike, d_k: ArrayLike, rho: ArrayLike) -> np.ndarray:
    """Derivative of pair_log_terms in the pair correlation rho_jk."""
    dw = -2.0 * (1.0 - rho) * d_j * d_k * u_j * u_k - d_j * u_k - d_k * u_j + d_j * d_k
    return dw / pair_w(u_j, u_k, d_j, d_k, rho) + (1.0 + d_j + d_k) * u_j * u_k / pair_v(u_j, u_k, rho)


def singleton_log_term(u: ArrayLike, d: ArrayLike) -> np.ndarray:
    return -(1.0 + d) * np.log1p(u)


def singleton_dlog_du(u: ArrayLike, d: ArrayLike) -> np.ndarray:
    return -(1.0 + d) / (1.0 + u)


def evaluate_u(
    design: DesignArrays, beta: np.ndarray, baseline: BaselineFunction
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Linear predictor, u = Lambda(Y) exp(eta), and log jump sizes at failures.

    Raises BaselineSupportError if a failure time carries no positive jump.
    """
    eta = design.z @ np.asarray(beta, dtype=float)
    u = baseline(design.time) * np.exp(eta)
    jumps = baseline.jump_at(design.time)
    failed = design.failed
    bad = failed & ~(jumps > 0.0)
    if np.any(bad):
        raise BaselineSupportError(float(design.time[np.flatnonzero(bad)[0]]))
    log_lam = np.zeros_like(u)
    log_lam[failed] = np.log(jumps[failed])
    return eta, u, log_lam


def composite_loglik_terms(design: DesignArrays, params: ModelParams, baseline: BaselineFunction) -> np.ndarray:
    """Per-cluster composite contributing marginal log-likelihood, shape (m,)."""
    eta, u, log_lam = evaluate_u(design, params.beta, baseline)
    d = design.event
    total = design.per_cluster(d * (log_lam + eta))
    if design.pair_j.size:
        j, k = design.pair_j, design.pair_k
        rho = params.corr.pair_rho(design.member[j], design.member[k])
        pair_terms = pair_log_terms(u[j], u[k], d[j], d[k], rho)
        total += design.per_cluster(design.pair_weight * pair_terms, design.pair_cluster)
    if design.singletons.size:
        s = design.singletons
        total += design.per_cluster(singleton_log_term(u[s], d[s]), design.cluster[s])
    return total


def u_value(obs: Observation, beta: Sequence[float] | np.ndarray, baseline: BaselineFunction) -> float:
    """u = Lambda(Y) exp(Z'beta) with right-continuous evaluation of Lambda."""
    eta = float(np.dot(obs.covariates, np.asarray(beta, dtype=float)))
    return float(baseline(obs.time)) * float(np.exp(eta))


def pair_kernel(
    obs_j: Observation, obs_k: Observation, params: ModelParams, baseline: BaselineFunction
) -> PairKernel:
    rho = float(params.corr.pair_rho(obs_j.member_index, obs_k.member_index))
    u_j = u_value(obs_j, params.beta, baseline)
    u_k = u_value(obs_k, params.beta, baseline)
    return PairKernel(
        u_j=u_j,
        u_k=u_k,
        v=float(pair_v(u_j, u_k, rho)),
        w=float(pair_w(u_j, u_k, obs_j.event, obs_k.event, rho)),
        rho_jk=rho,
    )


def _log_jump(obs: Observation, baseline: BaselineFunction) -> float:
    if not obs.event:
        return 0.0
    jump = float(baseline.jump_at(obs.time))
    if jump <= 0.0:
        raise BaselineSupportError(obs.time)
    return float(np.log(jump))


def pairwise_loglik(
    obs_j: Observation, obs_k: Observation, params: ModelParams, baseline: BaselineFunction
) -> float:
    kernel = pair_kernel(obs_j, obs_k, params, baseline)
    beta = params.beta
    d_j, d_k = obs_j.event, obs_k.event
    event_part = d_j * (_log_jump(obs_j, baseline) + float(np.dot(obs_j.covariates, beta)))
    event_part += d_k * (_log_jump(obs_k, baseline) + float(np.dot(obs_k.covariates, beta)))
    return event_part + float(np.log(kernel.w)) - (1 + d_j + d_k) * float(np.log(kernel.v))


def cluster_composite_loglik(cluster: Cluster, params: ModelParams, baseline: BaselineFunction) -> float:
    return float(composite_loglik_terms(build_design([cluster]), params, baseline)[0])


def dataset_composite_loglik(dataset: Dataset, params: ModelParams, baseline: BaselineFunction) -> float:
    """Mean over clusters of the composite contributing marginal log-likelihood."""
    return float(np.mean(composite_loglik_terms(dataset.design, params, baseline)))


def marginal_survival(
    t: ArrayLike, z: Sequence[float] | np.ndarray, beta: Sequence[float] | np.ndarray, baseline: BaselineFunction
) -> np.ndarray | float:
    """S(t | z) = 1 / (1 + Lambda(t) exp(z'beta))."""
    odds = baseline(t) * np.exp(float(np.dot(np.asarray(z, dtype=float), np.asarray(beta, dtype=float))))
    out = 1.0 / (1.0 + odds)
    return float(out) if np.ndim(out) == 0 else out


def predict_marginal_survival(
    baseline: BaselineFunction,
    beta: Sequence[float] | np.ndarray,
    z: Sequence[float] | np.ndarray,
    times: Sequence[float] | np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Marginal survival curve for one covariate profile; defaults to the jump times."""
    grid = baseline.jump_times if times is None else np.asarray(times, dtype=float)
    return grid, np.atleast_1d(marginal_survival(grid, z, beta, baseline))
