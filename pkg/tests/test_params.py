"""Tests for parameter layouts and the positivity transform."""

import math

import numpy as np
import pytest

from causalgp import (
    InputError,
    KernelKind,
    ModelFamily,
    ParameterDomainError,
    ParamSchema,
    ParamVector,
    PatientRecord,
    Series,
    TreatmentEvent,
    constrain,
    unconstrain,
)
from causalgp._params import initial_vector


def _record():
    return PatientRecord(
        "p1",
        {
            "sbp": Series((0.0, 1.0, 2.0, 4.0), (1.0, -1.0, 2.0, 0.0)),
            "hr": Series((0.0, 2.0), (0.5, -0.5)),
        },
        (
            TreatmentEvent(1.0, "A"),
            TreatmentEvent(2.0, "B"),
            TreatmentEvent(3.0, "A"),
        ),
    )


# ── layout ───────────────────────────────────────────────────────────────


def test_proposed_layout():
    schema = ParamSchema.from_record(_record())
    assert schema.names == [
        "sbp/sigma_se",
        "sbp/ell_se",
        "sbp/sigma_per",
        "sbp/ell_per",
        "sbp/period",
        "sbp/noise",
        "sbp/B",
        "sbp/D",
        "sbp/S[A]",
        "sbp/S[B]",
        # two observations disable the periodic component
        "hr/sigma_se",
        "hr/ell_se",
        "hr/noise",
        "hr/B",
        "hr/D",
        "hr/S[A]",
        "hr/S[B]",
        "ell[A]",
        "ell[B]",
    ]
    assert schema.treatment_types == ("A", "B")
    assert schema.admin_types == (0, 1, 0)
    assert not schema.independent


def test_initial_values():
    init = ParamSchema.from_record(_record()).initial()
    assert init["sbp/ell_se"] == 1.0
    assert init["hr/ell_se"] == 2.0
    assert init["hr/D"] == 0.5
    assert init["sbp/sigma_se"] == pytest.approx(np.std([1.0, -1.0, 2.0, 0.0]))
    assert init["sbp/noise"] == pytest.approx(0.1 * init["sbp/sigma_se"])
    assert init["sbp/period"] == 24.0
    assert init["sbp/S[A]"] == 0.0
    assert init["sbp/B"] == 0.0
    assert init["ell[A]"] == 1.0


def test_tying_sites():
    schema = ParamSchema.from_record(_record())
    assert schema.sites("ell[A]") == ["ell[0]", "ell[2]"]
    assert schema.sites("sbp/S[B]") == ["sbp/S[1]"]
    assert schema.sites("sbp/D") == ["sbp/D"]


def test_se_per_drops_treatments():
    schema = ParamSchema.from_record(_record(), ModelFamily.SE_PER)
    assert schema.treatment_types == ()
    assert not any("S[" in n or n.endswith("/D") for n in schema.names)
    assert set(schema.fixed) == {"sbp/D", "hr/D"}
    assert schema.independent
    model = initial_vector(schema).model()
    assert model.treatments == ()
    assert model.covariates[0].lfm.B / model.covariates[0].lfm.D == 0.0


def test_ou_exp_layout():
    schema = ParamSchema.from_record(_record(), "ou-exp")
    assert schema.block("hr").names == [
        "hr/sigma_ou",
        "hr/ell_ou",
        "hr/noise",
        "hr/c",
        "hr/a[A]",
        "hr/gamma[A]",
        "hr/a[B]",
        "hr/gamma[B]",
    ]
    model = initial_vector(schema).model()
    assert model.covariates[0].baseline[0].kind is KernelKind.OU
    assert model.covariates[0].decay is not None
    assert all(s == 0.0 for s in model.covariates[0].lfm.S)


def test_empty_covariate_rejected():
    record = PatientRecord("p1", {"sbp": Series((), ())})
    with pytest.raises(InputError, match="at least one observation"):
        ParamSchema.from_record(record)


def test_unknown_parameter_name():
    with pytest.raises(InputError, match="no parameter named"):
        ParamSchema.from_record(_record()).index("sbp/gamma")


# ── transforms ───────────────────────────────────────────────────────────


@pytest.mark.parametrize(
    ("name", "value", "coordinate"),
    [("sbp/sigma_se", 1.0, 0.0), ("sbp/S[A]", -2.5, -2.5), ("sbp/D", math.e**2, 2.0)],
)
def test_transform_examples(name, value, coordinate):
    schema = ParamSchema.from_record(_record())
    params = {**schema.initial(), name: value}
    vector = unconstrain(params, schema)
    assert vector.values[schema.index(name)] == pytest.approx(coordinate, abs=1e-12)
    assert constrain(vector)[name] == pytest.approx(value, rel=1e-15)


def test_transform_roundtrip():
    schema = ParamSchema.from_record(_record())
    rng = np.random.default_rng(0)
    params = {
        e.name: float(rng.uniform(0.01, 50.0)) if e.positive else float(rng.normal(0, 10))
        for e in schema.entries
    }
    back = constrain(unconstrain(params, schema))
    for name, value in params.items():
        assert back[name] == pytest.approx(value, rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan])
def test_nonpositive_value_rejected(bad):
    schema = ParamSchema.from_record(_record())
    with pytest.raises(ParameterDomainError, match="sbp/noise"):
        unconstrain({**schema.initial(), "sbp/noise": bad}, schema)


def test_vector_shape_checked():
    schema = ParamSchema.from_record(_record())
    with pytest.raises(InputError, match="does not match"):
        ParamVector(np.zeros(3), schema)


# ── model construction ───────────────────────────────────────────────────


def test_build_model_ties_per_type():
    schema = ParamSchema.from_record(_record())
    params = {**schema.initial(), "sbp/S[A]": 2.0, "hr/S[B]": -1.0, "ell[A]": 3.0, "ell[B]": 0.5}
    model = schema.build_model(params)
    assert [tr.ell for tr in model.treatments] == [3.0, 0.5, 3.0]
    assert [tr.mark_time for tr in model.treatments] == [1.0, 2.0, 3.0]
    sbp, hr = model.covariates
    assert sbp.lfm.S == (2.0, 0.0, 2.0)
    assert hr.lfm.S == (0.0, -1.0, 0.0)
    assert sbp.noise_var == pytest.approx(params["sbp/noise"] ** 2)
    assert len(sbp.baseline) == 2
    assert len(hr.baseline) == 1
