"""Tests for the synthetic patient generator."""

import dataclasses
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from causalgp import (
    CohortSimConfig,
    ConfigError,
    ForceConvention,
    GroundTruth,
    KernelKind,
    KernelSpec,
    LfmParams,
    SamplingLaw,
    SimConfig,
    SimCovariate,
    SimTreatment,
    cov_output_output,
    fit_patient,
    sample_cohort,
    simulate_cohort,
    simulate_patient,
)
from causalgp._evaluate import prepare, score_signs
from causalgp._sim import integrate_lfm, load_truth, truth_document

BASELINE = (
    KernelSpec(KernelKind.SE, 0.5, 6.0),
    KernelSpec(KernelKind.PERIODIC, 0.3, 1.0, period=24.0),
)


def _config(S_a=(2.0,), S_b=(-3.0,), treatments=None, **kwargs):
    if treatments is None:
        treatments = (SimTreatment("drug:1:oral", 5.0, 1.5),)
    covariates = (
        SimCovariate("a", B=0.5, D=0.5, S=S_a, baseline=BASELINE, noise_var=0.01),
        SimCovariate("b", B=-1.0, D=0.8, S=S_b, baseline=BASELINE, noise_var=0.04),
    )
    defaults = {"n_observations": 30, "horizon": 12.0, "seed": 3}
    defaults.update(kwargs)
    return SimConfig(covariates=covariates, treatments=treatments, **defaults)


# ── integrate_lfm ────────────────────────────────────────────────────────


def test_step_response():
    grid = np.sort(np.random.default_rng(0).uniform(0, 10, 40))
    grid = np.concatenate([[0.0], grid])
    D, B, u = 0.7, 0.3, 2.0
    ones = np.full(grid.size - 1, u)
    path = integrate_lfm(grid, D, ones, ones, drive=B)
    assert_allclose(path, (B + u) * (1 - np.exp(-D * grid)) / D, rtol=0, atol=1e-12)


def test_ramp_response():
    grid = np.linspace(0.0, 6.0, 13)
    D = 1.3
    path = integrate_lfm(grid, D, grid[:-1], grid[1:])
    expected = grid / D - (1 - np.exp(-D * grid)) / D**2
    assert_allclose(path, expected, rtol=0, atol=1e-12)


def test_relaxation_from_initial_value():
    grid = np.linspace(0.0, 5.0, 11)
    zeros = np.zeros(grid.size - 1)
    path = integrate_lfm(grid, 0.4, zeros, zeros, drive=1.0, initial=10.0)
    assert_allclose(path, 1.0 / 0.4 + (10.0 - 1.0 / 0.4) * np.exp(-0.4 * grid), atol=1e-12)


# ── SimConfig ────────────────────────────────────────────────────────────


def test_resolution_must_resolve_the_model():
    with pytest.raises(ConfigError, match="does not resolve"):
        _config(resolution=0.2)
    fast = (SimTreatment("drug:1:oral", 5.0, 0.3),)
    with pytest.raises(ConfigError, match="does not resolve"):
        _config(treatments=fast, resolution=0.05)
    assert _config(treatments=fast, resolution=0.02).resolution == 0.02


def test_config_problems_are_collected():
    with pytest.raises(ConfigError) as info:
        _config(S_a=(1.0, 2.0), n_observations=0, horizon=-1.0)
    text = str(info.value)
    assert "n_observations" in text
    assert "horizon" in text
    assert "2 effect sizes for 1 treatments" in text


def test_ell_tied_per_type():
    treatments = (SimTreatment("x", 2.0, 1.0), SimTreatment("x", 6.0, 2.0))
    with pytest.raises(ConfigError, match="disagree on ell"):
        _config(S_a=(1.0, 1.0), S_b=(1.0, 1.0), treatments=treatments)


def test_config_dict_roundtrip():
    config = _config(sampling=SamplingLaw.BURST, convention=ForceConvention.UNZEROED, force_mean=1.5)
    assert SimConfig.from_dict(json.loads(json.dumps(config.to_dict()))) == config


def test_config_model():
    model = _config().model()
    assert model.names == ["a", "b"]
    assert model.treatments[0].mark_time == 5.0
    assert model.covariates[1].lfm.S == (-3.0,)
    assert model.convention is ForceConvention.ZEROED


# ── simulate_patient ─────────────────────────────────────────────────────


def test_deterministic_given_seed():
    first, truth_1 = simulate_patient(_config())
    second, truth_2 = simulate_patient(_config())
    assert first == second
    assert np.array_equal(truth_1.forces, truth_2.forces)
    other, _ = simulate_patient(_config(seed=4))
    assert other != first


def test_zero_effects_match_untreated_patient():
    treated, truth = simulate_patient(_config(S_a=(0.0,), S_b=(0.0,)))
    untreated, _ = simulate_patient(_config(S_a=(), S_b=(), treatments=()))
    assert treated.covariates == untreated.covariates
    assert np.all(truth.lfm[0] == 0.5 / 0.5)
    assert np.all(truth.effects == 0.0)


def test_lfm_decomposition():
    _, truth = simulate_patient(_config())
    for j, (B, D) in enumerate([(0.5, 0.5), (-1.0, 0.8)]):
        assert_allclose(truth.lfm[j], B / D + truth.effects[j].sum(axis=0), atol=1e-12)
    for name in ("a", "b"):
        idx = np.searchsorted(truth.grid, truth.times[name])
        assert np.array_equal(truth.grid[idx], truth.times[name])


def test_zeroed_forces_vanish_before_mark():
    _, truth = simulate_patient(_config())
    before = truth.grid <= 5.0
    assert np.all(truth.forces[0][before] == 0.0)
    assert np.all(truth.effects[:, 0][:, before] == 0.0)


def test_unzeroed_forces_held_before_mark():
    _, truth = simulate_patient(_config(convention=ForceConvention.UNZEROED))
    mark = np.flatnonzero(truth.grid == 5.0)[0]
    assert np.all(truth.forces[0][: mark + 1] == truth.forces[0][mark])
    # the held force already drives the response before the mark
    assert np.any(truth.effects[0, 0][:mark] != 0.0)


def test_effect_signs_follow_large_force_mean():
    _, truth = simulate_patient(_config(force_mean=50.0))
    assert truth.effect_signs() == {"a": {"drug:1:oral": 1}, "b": {"drug:1:oral": -1}}
    assert truth.window_effect(0, 0) > 0


@pytest.mark.parametrize("law", list(SamplingLaw))
def test_sampling_laws(law):
    record, _ = simulate_patient(_config(sampling=law, n_observations=24, n_bursts=3))
    times = np.array(record.covariates["a"].times)
    assert times.size == 24
    assert np.all(np.diff(times) >= 0)
    assert times.min() >= 0.0
    assert times.max() <= 12.0
    if law is SamplingLaw.GRID:
        assert_allclose(times, np.linspace(0, 12, 24))
    if law is SamplingLaw.BURST:
        # three bursts of width 2 leave most gaps tiny
        assert np.median(np.diff(times)) < 0.5


def test_truth_roundtrip():
    _, truth = simulate_patient(_config())
    document = json.loads(json.dumps(truth_document([truth])))
    assert document["schema_version"] == 1
    loaded = load_truth(document)["sim-000"]
    assert isinstance(loaded, GroundTruth)
    assert loaded.config == truth.config
    assert np.array_equal(loaded.effects, truth.effects)
    assert loaded.effect_signs() == truth.effect_signs()


# ── cohorts ──────────────────────────────────────────────────────────────


def test_sample_cohort():
    config = CohortSimConfig(
        n_patients=12,
        treatment_types=("x", "y"),
        treatments_per_patient=(2, 3),
        n_observations=20,
        horizon=24.0,
    )
    configs = sample_cohort(config, seed=5)
    assert [c.patient_id for c in configs] == [f"sim-{i:02d}" for i in range(12)]
    assert configs == sample_cohort(config, seed=5)
    for sim in configs:
        assert 2 <= len(sim.treatments) <= 3
        for tr in sim.treatments:
            assert 0.2 * 24 <= tr.time <= 0.6 * 24
        for cov in sim.covariates:
            by_type = {}
            for s, tr in zip(cov.S, sim.treatments, strict=True):
                assert 3.0 <= abs(s) <= 8.0
                assert by_type.setdefault(tr.treatment_type, s) == s


def test_simulate_cohort_small():
    configs = sample_cohort(CohortSimConfig(n_patients=3, n_observations=10, horizon=12.0), seed=1)
    records, truths = simulate_cohort(configs)
    assert [r.patient_id for r in records] == ["sim-0", "sim-1", "sim-2"]
    assert all(r.n_observations == 20 for r in records)
    assert [t.patient_id for t in truths] == ["sim-0", "sim-1", "sim-2"]


def test_cohort_config_from_dict():
    config = CohortSimConfig.from_dict({"n_patients": 4, "sampling": "burst", "effect_range": [1, 2]})
    assert config.sampling is SamplingLaw.BURST
    assert config.effect_range == (1, 2)
    assert CohortSimConfig.from_dict(config.to_dict()) == config
    with pytest.raises(ConfigError, match="unknown cohort key"):
        CohortSimConfig.from_dict({"n_patient": 4})
    with pytest.raises(ConfigError, match="effect_range"):
        CohortSimConfig(effect_range=(5.0, 1.0))


# ── slow Monte Carlo checks ──────────────────────────────────────────────


@pytest.mark.slow
@pytest.mark.parametrize("convention", list(ForceConvention))
def test_response_covariance_matches_closed_form(convention):
    config = SimConfig(
        covariates=(SimCovariate("a", B=0.0, D=0.6, S=(1.0,), baseline=BASELINE, noise_var=0.01),),
        treatments=(SimTreatment("x", 2.0, 1.0),),
        n_observations=5,
        horizon=6.0,
        sampling=SamplingLaw.GRID,
        resolution=0.02,
        convention=convention,
    )
    checks = np.array([1.0, 3.0, 4.5, 6.0])
    draws = []
    for seed in range(2000):
        _, truth = simulate_patient(dataclasses.replace(config, seed=seed))
        idx = np.searchsorted(truth.grid, checks)
        draws.append(truth.effects[0, 0][idx])
    empirical = np.cov(np.array(draws), rowvar=False)
    params = LfmParams(B=0.0, D=0.6, S=(1.0,), ell=(1.0,), t_marks=(2.0,))
    closed = np.array([[cov_output_output(t, s, params, params, [0], convention) for s in checks] for t in checks])
    assert_allclose(empirical, closed, atol=0.1 * closed.max())


@pytest.mark.slow
def test_effect_sign_recovered_by_fit():
    config = _config(
        S_a=(5.0,),
        S_b=(-5.0,),
        n_observations=60,
        horizon=24.0,
        force_mean=4.0,
        seed=11,
    )
    record, truth = simulate_patient(config)
    prepared = prepare(record)
    result = fit_patient(prepared.record, seed=0)
    scores = score_signs(result.model, prepared.record, truth)
    assert len(scores) == 2
    assert all(s.matched for s in scores)
