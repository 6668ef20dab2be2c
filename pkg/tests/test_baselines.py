"""Tests for the comparison models."""

import numpy as np
import pytest

from causalgp import (
    BaselineKind,
    KernelKind,
    ModelFamily,
    OptimizerConfig,
    PatientRecord,
    Series,
    TreatmentEvent,
    fit_baseline,
    fit_patient,
)

FAST = OptimizerConfig(max_iter=60, restarts=2)


def _record(events=True):
    t_a = np.linspace(0.0, 11.0, 12)
    t_b = np.linspace(0.25, 10.25, 9)
    return PatientRecord(
        "p1",
        {
            "sbp": Series(tuple(t_a), tuple(np.sin(t_a / 2) + np.where(t_a > 4, 1.0, 0.0))),
            "hr": Series(tuple(t_b), tuple(0.5 * np.cos(t_b))),
        },
        (TreatmentEvent(4.0, "drug"), TreatmentEvent(8.0, "drug")) if events else (),
    )


def test_kind_maps_to_family():
    assert BaselineKind("se-per").family is ModelFamily.SE_PER
    assert BaselineKind.OU_EXP.family is ModelFamily.OU_EXP
    with pytest.raises(ValueError):
        BaselineKind("gp")


# ── se-per ───────────────────────────────────────────────────────────────


def test_se_per_blocks_are_independent():
    joint = fit_baseline("se-per", _record(), FAST, seed=2)
    alone = fit_baseline("se-per", _record().select(["sbp"]), FAST, seed=2)
    sbp = [t.final_objective for t in joint.traces if t.block == "sbp"]
    assert sbp == [t.final_objective for t in alone.traces]
    assert joint.model.covariates[0] == alone.model.covariates[0]


def test_se_per_matches_untreated_proposed_fit():
    baseline = fit_baseline(BaselineKind.SE_PER, _record(), FAST, seed=3)
    proposed = fit_patient(_record(events=False), FAST, seed=3, family=ModelFamily.PROPOSED)
    assert baseline.vector.schema.names == proposed.vector.schema.names
    assert np.array_equal(baseline.vector.values, proposed.vector.values)
    assert baseline.objective == proposed.objective


def test_se_per_model_shape():
    model = fit_baseline("se-per", _record(), FAST).model
    assert model.treatments == ()
    kinds = [spec.kind for spec in model.covariates[0].baseline]
    assert kinds == [KernelKind.SE, KernelKind.PERIODIC]
    assert all(cov.lfm.S == () for cov in model.covariates)


# ── ou-exp ───────────────────────────────────────────────────────────────


def test_ou_exp_ties_decay_per_type():
    result = fit_baseline("ou-exp", _record(), FAST, seed=1)
    assert set(result.best_restart) == {"sbp", "hr"}
    for cov in result.model.covariates:
        assert cov.baseline[0].kind is KernelKind.OU
        assert cov.decay.a[0] == cov.decay.a[1]
        assert cov.decay.gamma[0] == cov.decay.gamma[1]
        assert cov.decay.gamma[0] > 0
    for trace in result.traces:
        assert trace.final_objective <= trace.initial_objective
