from __future__ import annotations

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from pofrailty.errors import InvalidCorrelationError, ParameterError
from pofrailty.frailty import (
    CorrelationKind,
    CorrelationModel,
    frailty_corr_matrix,
    gaussian_factor,
    sample_frailties,
)


def test_exchangeable_matrix():
    r = frailty_corr_matrix(CorrelationModel.exchangeable(0.4), 3)
    assert_allclose(r, [[1.0, 0.4, 0.4], [0.4, 1.0, 0.4], [0.4, 0.4, 1.0]])


def test_ar1_matrix_powers_of_lag():
    r = frailty_corr_matrix(CorrelationModel.ar1(0.5), 4)
    assert r[0, 1] == pytest.approx(0.5)
    assert r[0, 2] == pytest.approx(0.25)
    assert r[1, 3] == pytest.approx(0.25)
    assert r[0, 3] == pytest.approx(0.125)


def test_member_indices_drive_ar1_lags():
    r = frailty_corr_matrix(CorrelationModel.ar1(0.5), 2, member_indices=[0, 2])
    assert r[0, 1] == pytest.approx(0.25)


def test_rho_outside_box_rejected():
    with pytest.raises(ParameterError):
        CorrelationModel.exchangeable(1.0)
    with pytest.raises(ParameterError):
        CorrelationModel.ar1(-0.1)
    with pytest.raises(ValueError):
        CorrelationModel("unstructured", (0.2,))


def test_pair_rho_gradient_ar1():
    model = CorrelationModel.ar1(0.6)
    grad = model.pair_rho_gradient(np.array([0, 0, 1]), np.array([1, 3, 3]))
    assert grad.shape == (3, 1)
    assert_allclose(grad[:, 0], [1.0, 3 * 0.36, 2 * 0.6])


def test_fixed_structure_has_no_parameters():
    model = CorrelationModel.fixed(np.array([[1.0, 0.3], [0.3, 1.0]]))
    assert model.kind is CorrelationKind.FIXED
    assert model.n_params == 0
    assert model.pair_rho(0, 1) == pytest.approx(0.3)


def test_gaussian_factor_is_root_of_correlation():
    r = frailty_corr_matrix(CorrelationModel.exchangeable(0.64), 3)
    factor = gaussian_factor(r)
    assert_allclose(factor.c ** 2, r)
    assert_allclose(factor.chol @ factor.chol.T, factor.c, atol=1e-12)
    assert factor.dim == 3


def test_non_psd_root_is_rejected():
    r = np.array([[1.0, 0.81, 0.81], [0.81, 1.0, 0.0], [0.81, 0.0, 1.0]])
    with pytest.raises(InvalidCorrelationError, match="invalid correlation structure") as info:
        gaussian_factor(r)
    assert info.value.min_eigenvalue < 0.0


def test_boundary_structure_still_factors():
    r = frailty_corr_matrix(CorrelationModel.exchangeable(0.99), 5)
    factor = gaussian_factor(r)
    draws = sample_frailties(factor, np.random.default_rng(0), size=10)
    assert draws.shape == (10, 5)
    assert np.all(draws >= 0.0)


def test_sample_shapes():
    factor = gaussian_factor(np.eye(2))
    rng = np.random.default_rng(1)
    assert sample_frailties(factor, rng).shape == (2,)
    assert sample_frailties(factor, rng, size=7).shape == (7, 2)


def test_marginals_are_standard_exponential():
    factor = gaussian_factor(frailty_corr_matrix(CorrelationModel.exchangeable(0.7), 3))
    draws = sample_frailties(factor, np.random.default_rng(20240611), size=100_000)
    for column in draws.T:
        assert stats.kstest(column, "expon").pvalue > 0.01


def test_empirical_correlation_is_close_at_moderate_sample_size():
    r = frailty_corr_matrix(CorrelationModel.exchangeable(0.5), 3)
    draws = sample_frailties(gaussian_factor(r), np.random.default_rng(7), size=100_000)
    assert_allclose(np.corrcoef(draws.T), r, atol=0.02)


@pytest.mark.slow
@pytest.mark.parametrize(
    "model",
    [CorrelationModel.exchangeable(0.3), CorrelationModel.exchangeable(0.8), CorrelationModel.ar1(0.5), CorrelationModel.ar1(0.9)],
    ids=["exch-0.3", "exch-0.8", "ar1-0.5", "ar1-0.9"],
)
def test_empirical_correlation_matches_structure(model):
    r = frailty_corr_matrix(model, 3)
    draws = sample_frailties(gaussian_factor(r), np.random.default_rng(7), size=1_000_000)
    empirical = np.corrcoef(draws.T)
    # batch means: 100 batches of 10^4 draws
    batches = np.array([np.corrcoef(batch.T) for batch in draws.reshape(100, -1, 3)])
    se = batches.std(axis=0, ddof=1) / np.sqrt(len(batches))
    upper = np.triu_indices(3, k=1)
    assert np.all(np.abs(empirical[upper] - r[upper]) <= 3.0 * se[upper])
