"""Flattened design arrays derived from a list of clusters.

Every vectorised computation (composite likelihood, E-step, M-step, scores)
works on these arrays instead of walking Observation objects.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from pofrailty.models import BaselineFunction, Cluster


@dataclass(frozen=True, eq=False)
class DesignArrays:
    """Observation, pair and failure-time index arrays for a set of clusters."""

    time: np.ndarray
    event: np.ndarray
    z: np.ndarray
    member: np.ndarray
    cluster: np.ndarray
    cluster_ids: tuple[str, ...]
    cluster_sizes: np.ndarray
    pair_j: np.ndarray
    pair_k: np.ndarray
    pair_cluster: np.ndarray
    pair_weight: np.ndarray
    singletons: np.ndarray
    jump_times: np.ndarray
    deaths: np.ndarray
    event_jump: np.ndarray
    n_jumps_upto: np.ndarray
    order: np.ndarray
    risk_start: np.ndarray

    @property
    def m(self) -> int:
        return int(self.cluster_sizes.size)

    @property
    def n_obs(self) -> int:
        return int(self.time.size)

    @property
    def p1(self) -> int:
        return int(self.z.shape[1])

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    @property
    def failed(self) -> np.ndarray:
        return self.event > 0

    def per_cluster(self, values: np.ndarray, index: np.ndarray | None = None) -> np.ndarray:
        """Sum per-observation (or per-pair, with index) values into clusters."""
        idx = self.cluster if index is None else index
        return np.bincount(idx, weights=values, minlength=self.m)

    def risk_sums(self, risk: np.ndarray) -> np.ndarray:
        """sum_{Y_l >= t_q} risk_l for every jump time t_q (axis 0 of risk)."""
        sorted_risk = risk[self.order]
        tail = np.cumsum(sorted_risk[::-1], axis=0)[::-1]
        return tail[self.risk_start]

    def is_aligned(self, baseline: BaselineFunction) -> bool:
        return baseline.n_jumps == self.n_jumps and bool(np.array_equal(baseline.jump_times, self.jump_times))


def _pair_index(sizes: Sequence[int]) -> tuple[np.ndarray, ...]:
    pair_j: list[np.ndarray] = []
    pair_k: list[np.ndarray] = []
    pair_cluster: list[np.ndarray] = []
    pair_weight: list[np.ndarray] = []
    start = 0
    for pos, size in enumerate(sizes):
        if size >= 2:
            jj, kk = np.triu_indices(size, k=1)
            pair_j.append(jj + start)
            pair_k.append(kk + start)
            pair_cluster.append(np.full(jj.size, pos))
            pair_weight.append(np.full(jj.size, 1.0 / (size - 1)))
        start += size
    if not pair_j:
        empty_int = np.zeros(0, dtype=int)
        return empty_int, empty_int, empty_int, np.zeros(0)
    return (
        np.concatenate(pair_j),
        np.concatenate(pair_k),
        np.concatenate(pair_cluster),
        np.concatenate(pair_weight),
    )


def build_design(clusters: Sequence[Cluster]) -> DesignArrays:
    """Flatten clusters into arrays; ties among failure times pool onto one jump."""
    sizes = [cluster.size for cluster in clusters]
    members = [obs for cluster in clusters for obs in cluster.members]
    time = np.array([obs.time for obs in members], dtype=float)
    event = np.array([obs.event for obs in members], dtype=float)
    p1 = len(members[0].covariates)
    z = np.array([obs.covariates for obs in members], dtype=float).reshape(len(members), p1)
    member = np.array([obs.member_index for obs in members], dtype=int)
    cluster_index = np.repeat(np.arange(len(clusters)), sizes)
    pair_j, pair_k, pair_cluster, pair_weight = _pair_index(sizes)
    singleton_clusters = np.flatnonzero(np.asarray(sizes) == 1)
    offsets = np.concatenate(([0], np.cumsum(sizes)[:-1])).astype(int)
    singletons = offsets[singleton_clusters]

    failed = event > 0
    jump_times = np.unique(time[failed])
    event_jump = np.full(time.size, -1, dtype=int)
    event_jump[failed] = np.searchsorted(jump_times, time[failed], side="left")
    deaths = np.bincount(event_jump[failed], minlength=jump_times.size).astype(float)
    n_jumps_upto = np.searchsorted(jump_times, time, side="right")
    order = np.argsort(time, kind="stable")
    risk_start = np.searchsorted(time[order], jump_times, side="left")

    return DesignArrays(
        time=time,
        event=event,
        z=z,
        member=member,
        cluster=cluster_index,
        cluster_ids=tuple(cluster.id for cluster in clusters),
        cluster_sizes=np.asarray(sizes, dtype=int),
        pair_j=pair_j,
        pair_k=pair_k,
        pair_cluster=pair_cluster,
        pair_weight=pair_weight,
        singletons=singletons,
        jump_times=jump_times,
        deaths=deaths,
        event_jump=event_jump,
        n_jumps_upto=n_jumps_upto,
        order=order,
        risk_start=risk_start,
    )
