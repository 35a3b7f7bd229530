"""Brute-force reference computations used to check the fitting code.

Laplace-transform determinants, Monte Carlo integration over frailties and
central finite differences. None of this is on a production path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from pofrailty.config import DEFAULT_SEED
from pofrailty.errors import ConfigError, FrailtyWarning, NonFiniteError, ParameterError
from pofrailty.frailty import GaussianFactor, gaussian_factor, sample_frailties
from pofrailty.likelihood import dataset_composite_loglik, u_value
from pofrailty.logs import get_logger
from pofrailty.models import BaselineFunction, Dataset, ModelParams, Observation

logger = get_logger(__name__)

_MC_RELATIVE_SE_LIMIT = 0.10


class PairQuantity(str, Enum):
    SURVIVAL_PROB = "survival_prob"
    ESTEP_WJ = "estep_wj"


@dataclass(frozen=True)
class OracleConfig:
    n_draws: int = 1_000_000
    fd_step: float = 1e-6
    seed: int = DEFAULT_SEED

    def __post_init__(self) -> None:
        if self.n_draws < 1000:
            raise ConfigError(f"n_draws must be >= 1000, got {self.n_draws}")
        if not self.fd_step > 0.0:
            raise ConfigError(f"fd_step must be positive, got {self.fd_step}")


def laplace_transform(u: Sequence[float] | np.ndarray, factor: GaussianFactor) -> float:
    """E[exp(-sum_j W_j u_j)] = 1 / det(I + C diag(u))."""
    u = np.asarray(u, dtype=float)
    if u.shape != (factor.dim,):
        raise ParameterError(f"u has shape {u.shape}, factor has dimension {factor.dim}")
    if np.any(u < 0.0):
        raise ParameterError("u must be nonnegative")
    return float(1.0 / np.linalg.det(np.eye(factor.dim) + factor.c * u[None, :]))


def _warn_if_noisy(estimate: float, se: float, what: str) -> None:
    if se > _MC_RELATIVE_SE_LIMIT * abs(estimate):
        message = f"{what}: Monte Carlo SE {se:.3g} exceeds 10% of estimate {estimate:.3g}; increase n_draws"
        logger.warning(message)
        warnings.warn(message, FrailtyWarning, stacklevel=3)


def joint_survival_mc(
    u: Sequence[float] | np.ndarray, factor: GaussianFactor, cfg: OracleConfig | None = None
) -> tuple[float, float]:
    """Monte Carlo estimate of the full joint survival term and its standard error."""
    cfg = cfg or OracleConfig()
    u = np.asarray(u, dtype=float)
    rng = np.random.default_rng(cfg.seed)
    draws = sample_frailties(factor, rng, size=cfg.n_draws)
    values = np.exp(-draws @ u)
    estimate = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(cfg.n_draws))
    _warn_if_noisy(estimate, se, "joint_survival_mc")
    return estimate, se


def mc_pair_estimate(
    u_j: float,
    u_k: float,
    d_j: int,
    d_k: int,
    rho: float,
    kind: PairQuantity | str,
    cfg: OracleConfig | None = None,
) -> tuple[float, float]:
    """Pair survival term or E[W_j | pair data] by integrating over sampled frailties.

    The E-step estimate is a self-normalised importance-weighted mean with
    weights w_j^d_j w_k^d_k exp(-w_j u_j - w_k u_k); its SE uses the delta method.
    """
    cfg = cfg or OracleConfig()
    kind = PairQuantity(kind)
    factor = gaussian_factor(np.array([[1.0, rho], [rho, 1.0]]))
    rng = np.random.default_rng(cfg.seed)
    draws = sample_frailties(factor, rng, size=cfg.n_draws)
    survival = np.exp(-draws @ np.array([u_j, u_k], dtype=float))

    if kind is PairQuantity.SURVIVAL_PROB:
        estimate = float(survival.mean())
        se = float(survival.std(ddof=1) / np.sqrt(cfg.n_draws))
    else:
        weights = draws[:, 0] ** d_j * draws[:, 1] ** d_k * survival
        mean_weight = float(weights.mean())
        estimate = float((weights * draws[:, 0]).mean() / mean_weight)
        residual = weights * (draws[:, 0] - estimate)
        se = float(residual.std(ddof=1) / np.sqrt(cfg.n_draws) / mean_weight)
    _warn_if_noisy(estimate, se, kind.value)
    return estimate, se


def mc_pair_quantity(
    obs_j: Observation,
    obs_k: Observation,
    params: ModelParams,
    baseline: BaselineFunction,
    kind: PairQuantity | str,
    cfg: OracleConfig | None = None,
) -> tuple[float, float]:
    rho = float(params.corr.pair_rho(obs_j.member_index, obs_k.member_index))
    return mc_pair_estimate(
        u_value(obs_j, params.beta, baseline),
        u_value(obs_k, params.beta, baseline),
        obs_j.event,
        obs_k.event,
        rho,
        kind,
        cfg,
    )


def fd_gradient(
    fn: Callable[[np.ndarray], float],
    point: Sequence[float] | np.ndarray,
    cfg: OracleConfig | None = None,
    step: float | None = None,
) -> np.ndarray:
    """Central differences with step fd_step * max(1, |x_i|) per coordinate."""
    rel = step if step is not None else (cfg or OracleConfig()).fd_step
    x = np.asarray(point, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        h = rel * max(1.0, abs(float(x[i])))
        plus, minus = x.copy(), x.copy()
        plus[i] += h
        minus[i] -= h
        f_plus, f_minus = float(fn(plus)), float(fn(minus))
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError(i)
        grad[i] = (f_plus - f_minus) / (2.0 * h)
    return grad


def discretized_baseline(dataset: Dataset, cumulative_hazard: Callable[[np.ndarray], np.ndarray]) -> BaselineFunction:
    """Step version of a continuous Lambda0 with jumps at the dataset's failure times."""
    jump_times = dataset.design.jump_times
    return BaselineFunction(jump_times, np.diff(cumulative_hazard(jump_times), prepend=0.0))


def composite_kl_check(
    datasets: Sequence[Dataset],
    params_true: ModelParams,
    perturbed_beta: Sequence[float] | np.ndarray,
    cumulative_hazard: Callable[[np.ndarray], np.ndarray] = lambda t: t,
) -> tuple[float, float]:
    """Mean (and SE) over datasets of composite loglik at truth minus at a perturbed beta.

    A positive mean is what the identifiability of the composite objective predicts.
    """
    perturbed = params_true.with_beta(perturbed_beta)
    diffs = []
    for dataset in datasets:
        baseline = discretized_baseline(dataset, cumulative_hazard)
        diffs.append(
            dataset_composite_loglik(dataset, params_true, baseline)
            - dataset_composite_loglik(dataset, perturbed, baseline)
        )
    values = np.asarray(diffs)
    se = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else float("nan")
    return float(values.mean()), se
