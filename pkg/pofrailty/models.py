"""Domain models for clustered right-censored survival data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import TYPE_CHECKING, Sequence

import numpy as np

from pofrailty.config import BETA_BOUND, CLUSTER_SIZE_BOUND, RHO_BOUND
from pofrailty.errors import ParameterError
from pofrailty.frailty import CorrelationModel

if TYPE_CHECKING:
    from pofrailty.data import DesignArrays


@dataclass(frozen=True)
class Observation:
    """One subject: follow-up time Y, event indicator, covariates Z."""

    time: float
    event: int
    covariates: tuple[float, ...]
    member_index: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "covariates", tuple(float(x) for x in self.covariates))
        if not (self.time >= 0.0 and math.isfinite(self.time)):
            raise ValueError(f"time must be finite and >= 0, got {self.time!r}")
        if self.event not in (0, 1):
            raise ValueError(f"event must be 0 or 1, got {self.event!r}")
        object.__setattr__(self, "event", int(self.event))
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "member_index", int(self.member_index))
        if not all(math.isfinite(x) for x in self.covariates):
            raise ValueError(f"covariates must be finite, got {self.covariates!r}")
        if self.member_index < 0:
            raise ValueError(f"member_index must be >= 0, got {self.member_index!r}")


@dataclass(frozen=True)
class Cluster:
    """An independent cluster of correlated observations."""

    id: str
    members: tuple[Observation, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", tuple(self.members))
        if not (1 <= len(self.members) <= CLUSTER_SIZE_BOUND):
            raise ValueError(f"cluster {self.id!r} size {len(self.members)} outside [1, {CLUSTER_SIZE_BOUND}]")
        indices = [obs.member_index for obs in self.members]
        if len(set(indices)) != len(indices):
            raise ValueError(f"cluster {self.id!r} has duplicate member_index values")

    @property
    def size(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class Dataset:
    """Independent clusters sharing one covariate dimension."""

    clusters: tuple[Cluster, ...]
    tau: float | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if not self.clusters:
            raise ValueError("dataset needs at least one cluster")
        dims = {len(obs.covariates) for cluster in self.clusters for obs in cluster.members}
        if len(dims) != 1:
            raise ValueError(f"clusters disagree on covariate dimension: {sorted(dims)}")
        if not any(obs.event for cluster in self.clusters for obs in cluster.members):
            raise ValueError("dataset has no failures; the baseline has no jump points")
        max_time = max(obs.time for cluster in self.clusters for obs in cluster.members)
        if self.tau is None:
            object.__setattr__(self, "tau", max_time)
        elif self.tau <= 0.0 or self.tau < max_time:
            raise ValueError(f"tau={self.tau!r} must be positive and cover every follow-up time")

    @property
    def p1(self) -> int:
        return len(self.clusters[0].members[0].covariates)

    @property
    def m(self) -> int:
        return len(self.clusters)

    @property
    def n_obs(self) -> int:
        return sum(cluster.size for cluster in self.clusters)

    @cached_property
    def design(self) -> DesignArrays:
        from pofrailty.data import build_design

        return build_design(self.clusters)


@dataclass(frozen=True, eq=False)
class BaselineFunction:
    """Right-continuous nondecreasing step function with Lambda(0) = 0."""

    jump_times: np.ndarray
    jump_sizes: np.ndarray
    cumulative: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        times = np.array(self.jump_times, dtype=float)
        sizes = np.array(self.jump_sizes, dtype=float)
        if times.ndim != 1 or times.shape != sizes.shape:
            raise ValueError("jump_times and jump_sizes must be 1-d arrays of equal length")
        if times.size and (np.any(np.diff(times) <= 0.0) or times[0] < 0.0):
            raise ValueError("jump_times must be nonnegative and strictly increasing")
        if np.any(sizes <= 0.0) or not np.all(np.isfinite(sizes)):
            raise ValueError("jump_sizes must be finite and positive")
        for arr in (times, sizes):
            arr.setflags(write=False)
        cumulative = np.cumsum(sizes)
        cumulative.setflags(write=False)
        object.__setattr__(self, "jump_times", times)
        object.__setattr__(self, "jump_sizes", sizes)
        object.__setattr__(self, "cumulative", cumulative)

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    def __call__(self, t: np.ndarray | float) -> np.ndarray:
        """Lambda(t), including a jump located exactly at t."""
        idx = np.searchsorted(self.jump_times, t, side="right")
        padded = np.concatenate(([0.0], self.cumulative))
        return padded[idx]

    def jump_at(self, t: np.ndarray | float) -> np.ndarray:
        """Jump size Lambda(t) - Lambda(t-); zero off the support."""
        t = np.asarray(t, dtype=float)
        if self.n_jumps == 0:
            return np.zeros_like(t)
        idx = np.searchsorted(self.jump_times, t, side="left")
        safe = np.minimum(idx, self.n_jumps - 1)
        hit = (idx < self.n_jumps) & (self.jump_times[safe] == t)
        return np.where(hit, self.jump_sizes[safe], 0.0)

    def with_sizes(self, sizes: np.ndarray) -> BaselineFunction:
        return BaselineFunction(self.jump_times, sizes)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Finite-dimensional parameters: marginal log odds ratios and frailty correlation."""

    beta: np.ndarray
    corr: CorrelationModel

    def __post_init__(self) -> None:
        beta = np.atleast_1d(np.array(self.beta, dtype=float))
        if beta.ndim != 1 or not np.all(np.isfinite(beta)):
            raise ParameterError(f"beta must be a finite vector, got {self.beta!r}")
        if np.linalg.norm(beta) > BETA_BOUND * (1.0 + 1e-12):
            raise ParameterError(f"||beta||={np.linalg.norm(beta):.4g} exceeds bound {BETA_BOUND}")
        if np.linalg.norm(self.corr.rho_vector) > RHO_BOUND:
            raise ParameterError(f"||rho||={np.linalg.norm(self.corr.rho_vector):.4g} exceeds bound {RHO_BOUND}")
        beta.setflags(write=False)
        object.__setattr__(self, "beta", beta)

    @property
    def rho(self) -> np.ndarray:
        return self.corr.rho_vector

    def with_beta(self, beta: Sequence[float] | np.ndarray) -> ModelParams:
        return ModelParams(np.asarray(beta, dtype=float), self.corr)

    def with_rho(self, rho: Sequence[float] | np.ndarray | float) -> ModelParams:
        return ModelParams(self.beta, self.corr.with_rho(rho))


@dataclass(frozen=True)
class PairKernel:
    """Pair quantities u_j, u_k, v, w entering the pairwise likelihood."""

    u_j: float
    u_k: float
    v: float
    w: float
    rho_jk: float
