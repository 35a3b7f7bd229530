from __future__ import annotations

import math
import os

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, stats

from pofrailty.constant import CENSOR_MEANS, REFERENCE_ROWS, Z1_SD_REFERENCE
from pofrailty.em import FitConfig
from pofrailty.errors import ConfigError, DegenerateDesignError, FrailtyWarning
from pofrailty.simulation import (
    ParameterSummary,
    RepResult,
    ScenarioConfig,
    SummaryTable,
    censoring_fraction,
    draw_failure_times,
    generate_cluster,
    generate_dataset,
    reference_gaps,
    rep_seed,
    run_replicate,
    run_scenario,
    summarize,
)


def _expected_censoring(cfg: ScenarioConfig) -> float:
    """P(T > C) with W ~ Exp(1) integrated out: E_z E_C[1 / (1 + C exp(eta))]."""
    nodes, weights = np.polynomial.hermite.hermgauss(40)
    z1_values = np.sqrt(2.0) * cfg.z1_sd * nodes
    z1_weights = weights / np.sqrt(np.pi)
    rate = 1.0 / cfg.censor_mean
    total = 0.0
    for z0, p0 in ((0.0, 0.7), (1.0, 0.3)):
        for z1, wz in zip(z1_values, z1_weights):
            scale = math.exp(cfg.beta_true[0] * z1 + cfg.beta_true[1] * (0.2 * z1 + z0 - 0.3))
            body, _ = integrate.quad(lambda c, s=scale: rate * math.exp(-rate * c) / (1.0 + c * s), 0.0, cfg.censor_cap)
            tail = math.exp(-rate * cfg.censor_cap) / (1.0 + cfg.censor_cap * scale)
            total += p0 * wz * (body + tail)
    return total


def test_cluster_sizes_and_covariates():
    cfg = ScenarioConfig(m_clusters=200, n_reps=2)
    dataset = generate_dataset(cfg, np.random.default_rng(0))
    sizes = {cluster.size for cluster in dataset.clusters}
    assert sizes <= {5, 6, 7}
    assert len(sizes) == 3
    z = dataset.design.z
    z0 = z[:, 1] - 0.2 * z[:, 0] + 0.3
    assert_allclose(np.sort(np.unique(np.round(z0, 10))), [0.0, 1.0])
    assert z[:, 0].std() == pytest.approx(0.5, abs=0.03)
    assert np.all(dataset.design.time <= cfg.censor_cap)


def test_z1_sd_sets_covariate_spread():
    cfg = ScenarioConfig(m_clusters=400, z1_sd=Z1_SD_REFERENCE, n_reps=2)
    z = generate_dataset(cfg, np.random.default_rng(3)).design.z
    assert z[:, 0].var() == pytest.approx(0.5, abs=0.04)


def test_generate_cluster_member_indices():
    cluster = generate_cluster(ScenarioConfig(n_reps=2), np.random.default_rng(1), cluster_id="x")
    assert cluster.id == "x"
    assert [obs.member_index for obs in cluster.members] == list(range(cluster.size))


def test_failure_times_are_unit_exponential():
    times = draw_failure_times(np.ones(50_000), np.zeros(50_000), np.random.default_rng(9))
    assert stats.kstest(times, "expon").pvalue > 0.01


@pytest.mark.parametrize("level", sorted(CENSOR_MEANS))
def test_censoring_fraction_matches_quadrature(level):
    cfg = ScenarioConfig(m_clusters=4000, censor_mean=CENSOR_MEANS[level], n_reps=2)
    dataset = generate_dataset(cfg, np.random.default_rng(level))
    assert censoring_fraction(dataset) == pytest.approx(_expected_censoring(cfg), abs=0.015)


def test_generation_is_deterministic():
    cfg = ScenarioConfig(m_clusters=20, n_reps=2)
    a = generate_dataset(cfg, np.random.default_rng(rep_seed(5, 3)))
    b = generate_dataset(cfg, np.random.default_rng(rep_seed(5, 3)))
    c = generate_dataset(cfg, np.random.default_rng(rep_seed(5, 4)))
    assert a == b
    assert a != c


def test_zero_correlation_structures_agree():
    exch = ScenarioConfig(m_clusters=10, rho_true=0.0, n_reps=2)
    ar1 = ScenarioConfig(m_clusters=10, rho_true=0.0, corr_kind="ar1", n_reps=2)
    assert generate_dataset(exch, np.random.default_rng(8)) == generate_dataset(ar1, np.random.default_rng(8))


def test_config_validation():
    with pytest.raises(ConfigError, match="n_reps"):
        ScenarioConfig(n_reps=1)
    with pytest.raises(ConfigError):
        ScenarioConfig(rho_true=1.0)
    with pytest.raises(ConfigError):
        ScenarioConfig(corr_kind="fixed")
    with pytest.raises(ConfigError):
        ScenarioConfig(beta_true=(1.0,))
    with pytest.raises(ConfigError, match="z1_sd"):
        ScenarioConfig(z1_sd=0.0)


def _rep(index, estimates, ses, covers=(True, True, True), converged=True):
    return RepResult(
        rep_index=index,
        beta_hat=tuple(estimates[:2]),
        rho_hat=estimates[2],
        se_beta=tuple(ses[:2]),
        se_rho=ses[2],
        ci_covers=covers,
        converged=converged,
        censoring=0.4,
    )


def test_summarize_statistics():
    cfg = ScenarioConfig(n_reps=3, label="hand")
    results = [
        _rep(0, (1.0, 2.5, 0.4), (0.2, 0.3, 0.1)),
        _rep(1, (1.4, 2.7, 0.6), (0.4, 0.5, 0.1), covers=(True, True, False)),
        _rep(2, (1.3, 2.3, 0.5), (0.3, 0.4, 0.1)),
    ]
    table = summarize(cfg, results)
    beta0 = table.row("beta0")
    assert beta0.bias == pytest.approx(1.2333333333 - 1.2, abs=1e-9)
    assert beta0.sse == pytest.approx(np.std([1.0, 1.4, 1.3], ddof=1))
    assert beta0.see == pytest.approx(0.3)
    assert beta0.mse == pytest.approx(beta0.bias**2 + beta0.sse**2)
    assert table.row("rho").coverage == pytest.approx(2 / 3)
    assert table.row("beta1").coverage == 1.0
    assert table.censoring == pytest.approx(0.4)
    assert not table.flagged


def test_summarize_ignores_order():
    cfg = ScenarioConfig(n_reps=3)
    results = [_rep(i, (1.0 + 0.1 * i, 2.5, 0.5 - 0.05 * i), (0.2, 0.3, 0.1)) for i in range(3)]
    assert summarize(cfg, results) == summarize(cfg, results[::-1])


def test_summarize_flags_failed_replicates():
    cfg = ScenarioConfig(n_reps=20, label="noisy")
    good = [_rep(i, (1.2, 2.5, 0.5), (0.2, 0.3, 0.1)) for i in range(17)]
    bad = [_rep(17 + i, (math.nan,) * 3, (math.nan,) * 3, (False,) * 3, converged=False) for i in range(3)]
    with pytest.warns(FrailtyWarning, match="3 of 20"):
        table = summarize(cfg, good + bad)
    assert table.flagged
    assert table.n_failed == 3
    assert table.row("beta0").n_used == 17


def test_failed_fit_becomes_failed_replicate(monkeypatch):
    def broken(*args, **kwargs):
        raise DegenerateDesignError("degenerate design: forced")

    monkeypatch.setattr("pofrailty.simulation.fit", broken)
    result = run_replicate(ScenarioConfig(m_clusters=5, n_reps=2), FitConfig(), 0)
    assert not result.converged
    assert "forced" in result.message
    assert math.isnan(result.rho_hat)
    assert 0.0 <= result.censoring <= 1.0


def test_replicate_is_reproducible():
    cfg = ScenarioConfig(m_clusters=25, n_reps=2, master_seed=3)
    first = run_replicate(cfg, FitConfig(), 1)
    second = run_replicate(cfg, FitConfig(), 1)
    np.testing.assert_equal(first.estimates, second.estimates)
    np.testing.assert_equal(first.standard_errors, second.standard_errors)
    assert first.ci_covers == second.ci_covers


def test_identical_seeds_give_zero_spread():
    cfg = ScenarioConfig(m_clusters=30, n_reps=2, label="twins")
    collected = []
    table = run_scenario(cfg, seeds=[7, 7], on_result=collected.append)
    assert len(collected) == 2
    assert table.n_converged == 2
    for row in table.rows:
        assert row.sse == 0.0
        assert row.coverage in (0.0, 1.0)


def test_seed_count_must_match():
    with pytest.raises(ConfigError, match="seeds"):
        run_scenario(ScenarioConfig(m_clusters=5, n_reps=2), seeds=[1])


@pytest.mark.slow
def test_parallel_run_matches_serial():
    cfg = ScenarioConfig(m_clusters=20, n_reps=4, master_seed=99)
    assert run_scenario(cfg, workers=2) == run_scenario(cfg, workers=1)


def _published_summary(row, sse_scale=1.0, see_scale=1.0):
    published = REFERENCE_ROWS[row]
    rows = []
    for name, sse in zip(("beta0", "beta1"), published["sse"]):
        sse_value = sse_scale * sse / 1000.0
        rows.append(ParameterSummary(name, 0.0, 0.0, see_scale * sse_value, sse_value, sse_value**2, 0.95, 200))
    rows.append(ParameterSummary("rho", 0.5, 0.0, 0.05, 0.05, 0.0025, 0.95, 200))
    return SummaryTable(label="row", rows=tuple(rows), n_reps=200, n_converged=200, flagged=False, censoring=0.4)


def test_reference_gaps_accepts_published_values():
    row = ("table1", 40, 0.5)
    assert reference_gaps(_published_summary(row), row) == []
    assert reference_gaps(_published_summary(row, sse_scale=1.15, see_scale=0.9), row) == []


def test_reference_gaps_reports_inflated_sse():
    row = ("table1", 40, 0.5)
    gaps = reference_gaps(_published_summary(row, sse_scale=1.31), row)
    assert len(gaps) == 2
    assert gaps[0].startswith("beta0 sse=0.1166")


def test_reference_gaps_reports_poor_see_ratio():
    row = ("table2", 75, 0.5)
    gaps = reference_gaps(_published_summary(row, see_scale=0.8), row)
    assert [gap.split()[1].split("=")[0] for gap in gaps] == ["see/sse", "see/sse"]


def test_reference_gaps_unknown_row():
    with pytest.raises(ConfigError, match="no published row"):
        reference_gaps(_published_summary(("table1", 40, 0.5)), ("table1", 40, 0.4))


def _workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))


@pytest.mark.slow
def test_exchangeable_design_reproduces_published_row():
    cfg = ScenarioConfig(
        rho_true=0.5, censor_mean=CENSOR_MEANS[40], z1_sd=Z1_SD_REFERENCE, n_reps=200, master_seed=1, label="table1_c40"
    )
    table = run_scenario(cfg, workers=_workers())
    assert not table.flagged
    beta0, beta1, rho = table.row("beta0"), table.row("beta1"), table.row("rho")
    assert abs(beta0.bias) <= 0.02
    assert abs(beta1.bias) <= 0.03
    assert abs(rho.bias) <= 0.03
    for row in (beta0, beta1):
        assert 0.85 <= row.see / row.sse <= 1.15
        assert 0.91 <= row.coverage <= 0.98
    assert reference_gaps(table, ("table1", 40, 0.5)) == []


@pytest.mark.slow
def test_ar1_heavy_censoring_design_reproduces_published_row():
    cfg = ScenarioConfig(
        rho_true=0.5,
        corr_kind="ar1",
        censor_mean=CENSOR_MEANS[75],
        z1_sd=Z1_SD_REFERENCE,
        n_reps=200,
        master_seed=2,
        label="table2_c75",
    )
    table = run_scenario(cfg, workers=_workers())
    assert not table.flagged
    beta0 = table.row("beta0")
    assert abs(beta0.bias) <= 0.03
    assert beta0.sse == pytest.approx(0.121, rel=0.2)
    assert 0.91 <= beta0.coverage <= 0.98
