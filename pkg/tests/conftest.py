from __future__ import annotations

import numpy as np
import pytest

from pofrailty.em import FitConfig, fit
from pofrailty.frailty import CorrelationModel
from pofrailty.models import BaselineFunction, Cluster, Dataset, Observation
from pofrailty.simulation import ScenarioConfig, generate_dataset


@pytest.fixture(scope="session")
def small_scenario() -> ScenarioConfig:
    return ScenarioConfig(m_clusters=30, rho_true=0.5, n_reps=2, master_seed=11, label="small")


@pytest.fixture(scope="session")
def small_dataset(small_scenario: ScenarioConfig) -> Dataset:
    return generate_dataset(small_scenario, np.random.default_rng(2024))


@pytest.fixture(scope="session")
def small_fit(small_dataset: Dataset):
    return fit(small_dataset, FitConfig(tol_params=1e-7, tol_loglik=1e-10))


@pytest.fixture
def toy_cluster() -> Cluster:
    return Cluster(
        "a",
        (
            Observation(1.0, 1, (0.5,), 0),
            Observation(2.0, 0, (-1.0,), 1),
            Observation(3.0, 1, (0.0,), 2),
        ),
    )


@pytest.fixture
def toy_baseline() -> BaselineFunction:
    return BaselineFunction(np.array([1.0, 3.0]), np.array([0.4, 0.7]))


@pytest.fixture
def exchangeable() -> CorrelationModel:
    return CorrelationModel.exchangeable(0.5)
