from __future__ import annotations

import dataclasses

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pofrailty.errors import InformationSingularError, ParameterError
from pofrailty.frailty import CorrelationModel
from pofrailty.likelihood import dataset_composite_loglik
from pofrailty.models import BaselineFunction, Cluster, Dataset, ModelParams, Observation
from pofrailty.oracle import fd_gradient
from pofrailty.variance import (
    ContrastVector,
    baseline_pointwise_se,
    cluster_score,
    cluster_scores,
    confidence_interval,
    contrast_variance,
    hessian,
    mean_score,
    pack_coordinates,
    sandwich,
    unpack_coordinates,
)


@pytest.fixture(scope="module")
def estimate(small_dataset, small_fit):
    return sandwich(small_dataset, small_fit)


def test_outer_product_is_psd(estimate):
    assert_allclose(estimate.j, estimate.j.T)
    assert np.linalg.eigvalsh(estimate.j).min() >= -1e-10


def test_hessian_is_symmetric_and_finite_block_is_negative_definite(estimate):
    assert_allclose(estimate.h, estimate.h.T)
    block = estimate.h[: estimate.n_finite, : estimate.n_finite]
    assert np.linalg.eigvalsh(block).max() < 0.0


def test_standard_errors_are_positive(estimate, small_fit):
    assert estimate.rho_included
    se = estimate.standard_errors
    assert se.shape == (small_fit.beta_hat.size + small_fit.rho_hat.size,)
    assert np.all(se > 0.0)
    assert np.all(np.isfinite(estimate.vcov_finite))


def test_unit_contrast_recovers_vcov_entry(estimate):
    value = contrast_variance(estimate, ContrastVector(h1=(1.0, 0.0)))
    assert value == pytest.approx(estimate.vcov_finite[0, 0] * estimate.m, rel=1e-8)
    rho_value = contrast_variance(estimate, ContrastVector(h1=(0.0, 0.0), h2=(1.0,)))
    assert rho_value == pytest.approx(estimate.vcov_finite[2, 2] * estimate.m, rel=1e-8)


def test_zero_contrast_has_zero_variance(estimate):
    assert contrast_variance(estimate, ContrastVector(h1=(0.0, 0.0))) == 0.0


def test_contrast_outside_unit_ball_is_rejected(estimate):
    with pytest.raises(ParameterError, match="unit ball"):
        contrast_variance(estimate, ContrastVector(h1=(1.0, 1.0)))
    q = estimate.jump_times.size
    zigzag = np.where(np.arange(q) % 2 == 0, 0.5, 0.0)
    with pytest.raises(ParameterError, match="total variation"):
        contrast_variance(estimate, ContrastVector(h1=(0.0, 0.0), h3=zigzag))


def test_contrast_length_mismatch(estimate):
    with pytest.raises(ParameterError, match="expected one per jump time"):
        contrast_variance(estimate, ContrastVector(h1=(0.0, 0.0), h3=(0.5, 0.5)))


def test_duplicating_clusters_halves_covariance(small_dataset, small_fit, estimate):
    copies = tuple(Cluster(f"{c.id}-copy", c.members) for c in small_dataset.clusters)
    doubled = Dataset(small_dataset.clusters + copies)
    est2 = sandwich(doubled, small_fit)
    assert est2.m == 2 * estimate.m
    assert_allclose(est2.vcov_finite, estimate.vcov_finite / 2.0, rtol=1e-6)


def test_baseline_pointwise_se(estimate):
    se = baseline_pointwise_se(estimate)
    assert se.shape == estimate.jump_times.shape
    assert np.all(np.isfinite(se))
    assert np.all(se > 0.0)
    assert se[-1] >= se[0]


def test_cluster_scores_sum_to_mean_score(small_dataset, small_fit):
    per_cluster = cluster_scores(small_dataset, small_fit.params, small_fit.baseline_hat)
    total = mean_score(small_dataset, small_fit.params, small_fit.baseline_hat)
    assert per_cluster.shape[0] == small_dataset.m
    assert_allclose(per_cluster.mean(axis=0), total, rtol=1e-10, atol=1e-12)
    single = cluster_score(small_dataset.clusters[0], small_fit.params, small_fit.baseline_hat)
    assert_allclose(single.entries, per_cluster[0], rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("point", [p if p < 3 else pytest.param(p, marks=pytest.mark.slow) for p in range(10)])
def test_analytic_score_matches_finite_differences(small_dataset, small_fit, point):
    rng = np.random.default_rng(300 + point)
    rho = np.clip(small_fit.rho_hat + rng.uniform(-0.1, 0.1), 0.05, 0.9)
    params = ModelParams(small_fit.beta_hat + rng.normal(0.0, 0.1, size=small_fit.beta_hat.size), small_fit.corr.with_rho(rho))
    jumps = small_fit.baseline_hat.jump_sizes
    baseline = small_fit.baseline_hat.with_sizes(jumps * rng.uniform(0.8, 1.25, size=jumps.size))
    theta = pack_coordinates(params, baseline)

    def objective(coords):
        return dataset_composite_loglik(small_dataset, *unpack_coordinates(coords, params, baseline))

    numeric = fd_gradient(objective, theta)
    assert_allclose(mean_score(small_dataset, params, baseline), numeric, rtol=1e-5, atol=1e-7)


def test_rho_score_of_censored_pair():
    # d/drho of -log v with u=(1, 1), rho=0.5 is u_j u_k / v = 1 / 3.5
    cluster = Cluster("c", (Observation(1.0, 0, (0.0,), 0), Observation(2.0, 0, (0.0,), 1)))
    baseline = BaselineFunction(np.array([0.5]), np.array([1.0]))
    params = ModelParams(np.array([0.0]), CorrelationModel.exchangeable(0.5))
    score = cluster_score(cluster, params, baseline)
    assert score.rho[0] == pytest.approx(1.0 / 3.5, rel=1e-12)
    assert score.jumps.shape == (1,)


def test_single_jump_hessian_closed_form():
    # log x - 2 log(1 + x) has second derivative -1/x^2 + 2/(1 + x)^2 = -0.5 at x = 1
    dataset = Dataset((Cluster("s", (Observation(1.0, 1, ()),)),))
    params = ModelParams(np.zeros(0), CorrelationModel.fixed(np.eye(1)))
    baseline = BaselineFunction(np.array([1.0]), np.array([1.0]))
    h = hessian(dataset, params, baseline)
    assert h.shape == (1, 1)
    assert h[0, 0] == pytest.approx(-0.5, rel=1e-6)


def test_null_covariate_makes_information_singular(small_dataset, small_fit):
    padded = Dataset(
        tuple(
            Cluster(c.id, tuple(dataclasses.replace(obs, covariates=obs.covariates + (0.0,)) for obs in c.members))
            for c in small_dataset.clusters
        )
    )
    result = dataclasses.replace(small_fit, beta_hat=np.append(small_fit.beta_hat, 0.0))
    with pytest.raises(InformationSingularError, match="information singular"):
        sandwich(padded, result)


def test_boundary_rho_is_left_out(small_dataset, small_fit):
    boundary_fit = dataclasses.replace(small_fit, rho_at_boundary=True)
    est = sandwich(small_dataset, boundary_fit)
    assert not est.rho_included
    assert est.n_finite == small_fit.beta_hat.size
    assert np.isnan(est.vcov_finite[2, 2])
    assert np.all(np.isfinite(est.vcov_finite[:2, :2]))


def test_confidence_interval_truncation():
    assert confidence_interval(0.5, 0.1, 2.0) == pytest.approx((0.3, 0.7))
    assert confidence_interval(0.95, 0.1, 2.0, bounds=(0.0, 0.99)) == pytest.approx((0.75, 0.99))
