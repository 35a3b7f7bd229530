"""Frailty correlation structures and multivariate standard-exponential sampling.

A frailty vector is built from two independent Gaussian vectors V1, V2 with
unit-diagonal covariance C: W = (V1**2 + V2**2) / 2. Each coordinate is Exp(1)
and corr(W_j, W_k) = C_jk**2, so the frailty correlation matrix R(rho) is the
element-wise square of C.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import linalg

from pofrailty.config import PSD_TOLERANCE, RHO_MAX
from pofrailty.errors import InvalidCorrelationError, ParameterError

FrailtyVector = np.ndarray


class CorrelationKind(str, Enum):
    EXCHANGEABLE = "exchangeable"
    AR1 = "ar1"
    FIXED = "fixed"


@dataclass(frozen=True, eq=False)
class CorrelationModel:
    """Frailty correlation structure R(rho) indexed by member position."""

    kind: CorrelationKind
    rho: tuple[float, ...] = ()
    matrix: np.ndarray | None = None

    def __post_init__(self) -> None:
        kind = CorrelationKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "rho", tuple(float(r) for r in self.rho))
        if kind is CorrelationKind.FIXED:
            if self.matrix is None:
                raise ParameterError("fixed correlation requires a matrix")
            if self.rho:
                raise ParameterError("fixed correlation carries no rho parameters")
            matrix = np.array(self.matrix, dtype=float)
            _check_correlation_matrix(matrix)
            matrix.setflags(write=False)
            object.__setattr__(self, "matrix", matrix)
            return
        if len(self.rho) != 1:
            raise ParameterError(f"{kind.value} correlation takes one rho, got {len(self.rho)}")
        value = self.rho[0]
        if not (0.0 <= value <= RHO_MAX):
            raise ParameterError(f"rho={value!r} outside [0, {RHO_MAX}]")

    @classmethod
    def exchangeable(cls, rho: float) -> CorrelationModel:
        return cls(CorrelationKind.EXCHANGEABLE, (rho,))

    @classmethod
    def ar1(cls, rho: float) -> CorrelationModel:
        return cls(CorrelationKind.AR1, (rho,))

    @classmethod
    def fixed(cls, matrix: np.ndarray) -> CorrelationModel:
        return cls(CorrelationKind.FIXED, (), np.asarray(matrix, dtype=float))

    @property
    def n_params(self) -> int:
        return len(self.rho)

    @property
    def rho_vector(self) -> np.ndarray:
        return np.array(self.rho, dtype=float)

    def with_rho(self, rho: Sequence[float] | np.ndarray | float) -> CorrelationModel:
        values = np.atleast_1d(np.asarray(rho, dtype=float))
        return CorrelationModel(self.kind, tuple(values.tolist()), self.matrix)

    def pair_rho(self, member_j: np.ndarray | int, member_k: np.ndarray | int) -> np.ndarray:
        """Implied frailty correlation for each (j, k) member pair."""
        mj = np.asarray(member_j)
        mk = np.asarray(member_k)
        if self.kind is CorrelationKind.EXCHANGEABLE:
            out = np.full(np.broadcast(mj, mk).shape, self.rho[0], dtype=float)
        elif self.kind is CorrelationKind.AR1:
            out = np.power(self.rho[0], np.abs(mj - mk).astype(float))
        else:
            assert self.matrix is not None
            size = self.matrix.shape[0]
            if np.any(mj >= size) or np.any(mk >= size):
                raise ParameterError(f"member index exceeds fixed correlation matrix of size {size}")
            out = self.matrix[mj, mk]
        if np.any(out < 0.0) or np.any(out > RHO_MAX):
            raise ParameterError(f"implied pair correlation outside [0, {RHO_MAX}]")
        return out

    def pair_rho_gradient(self, member_j: np.ndarray, member_k: np.ndarray) -> np.ndarray:
        """d rho_jk / d rho, shape (n_pairs, n_params)."""
        mj = np.asarray(member_j)
        mk = np.asarray(member_k)
        n_pairs = np.broadcast(mj, mk).shape
        if self.kind is CorrelationKind.EXCHANGEABLE:
            return np.ones(n_pairs + (1,))
        if self.kind is CorrelationKind.AR1:
            lag = np.abs(mj - mk).astype(float)
            grad = lag * np.power(self.rho[0], np.maximum(lag - 1.0, 0.0))
            return grad[..., None]
        return np.zeros(n_pairs + (0,))


def _check_correlation_matrix(matrix: np.ndarray) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ParameterError(f"correlation matrix must be square, got shape {matrix.shape}")
    if not np.allclose(matrix, matrix.T, atol=1e-12):
        raise ParameterError("correlation matrix must be symmetric")
    if not np.allclose(np.diag(matrix), 1.0, atol=1e-12):
        raise ParameterError("correlation matrix must have unit diagonal")
    off = matrix[~np.eye(matrix.shape[0], dtype=bool)]
    if np.any(off < 0.0) or np.any(off > RHO_MAX):
        raise ParameterError(f"off-diagonal correlations must lie in [0, {RHO_MAX}]")


@dataclass(frozen=True, eq=False)
class GaussianFactor:
    """Unit-diagonal Gaussian covariance C with C**2 = R, plus its Cholesky factor."""

    c: np.ndarray
    chol: np.ndarray

    @property
    def dim(self) -> int:
        return self.c.shape[0]


def frailty_corr_matrix(
    model: CorrelationModel, n: int, member_indices: Sequence[int] | np.ndarray | None = None
) -> np.ndarray:
    """R(rho) for a cluster of n members (member indices default to 0..n-1)."""
    if n < 1:
        raise ParameterError(f"cluster size must be >= 1, got {n}")
    members = np.arange(n) if member_indices is None else np.asarray(member_indices, dtype=int)
    if members.shape != (n,):
        raise ParameterError(f"expected {n} member indices, got {members.shape}")
    jj, kk = np.triu_indices(n, k=1)
    out = np.eye(n)
    if jj.size:
        rho = model.pair_rho(members[jj], members[kk])
        out[jj, kk] = rho
        out[kk, jj] = rho
    return out


def gaussian_factor(r: np.ndarray) -> GaussianFactor:
    """Element-wise square root of R, validated PSD and factored."""
    r = np.asarray(r, dtype=float)
    _check_correlation_matrix(r)
    c = np.sqrt(r)
    eigvals, eigvecs = linalg.eigh(c)
    smallest = float(eigvals.min())
    if smallest < -PSD_TOLERANCE:
        raise InvalidCorrelationError(smallest)
    try:
        chol = linalg.cholesky(c, lower=True)
    except linalg.LinAlgError:
        # Boundary structures: clip the spectrum and jitter before factoring.
        clipped = (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T
        clipped[np.diag_indices_from(clipped)] = 1.0
        chol = linalg.cholesky(clipped + PSD_TOLERANCE * np.eye(c.shape[0]), lower=True)
    return GaussianFactor(c=c, chol=chol)


def sample_frailties(factor: GaussianFactor, rng: np.random.Generator, size: int | None = None) -> FrailtyVector:
    """Draw standard-exponential frailties with correlation C**2.

    Returns shape (dim,) when size is None, otherwise (size, dim).
    """
    shape = (2, 1 if size is None else size, factor.dim)
    v = rng.standard_normal(shape) @ factor.chol.T
    w = 0.5 * (v[0] ** 2 + v[1] ** 2)
    return w[0] if size is None else w
