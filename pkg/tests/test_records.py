"""Tests for PatientRecord and its validation."""

import math

import pytest

from causalgp import PatientRecord, Route, Series, TreatmentEvent, ValidationError
from causalgp._records import treatment_violations


def _record(pid="p1", **kwargs):
    defaults = {
        "covariates": {
            "sbp": Series(times=(0.0, 1.0, 2.5), values=(120.0, 118.0, 125.0)),
            "hr": Series(times=(0.5, 3.0), values=(70.0, 72.0)),
        },
        "treatments": (
            TreatmentEvent(1.5, "metoprolol:25mg:oral", 25.0),
            TreatmentEvent(2.0, "furosemide:40mg:injection", 40.0, Route.INJECTION),
        ),
    }
    defaults.update(kwargs)
    return PatientRecord(patient_id=pid, **defaults)


def test_valid_record():
    record = _record()
    assert record.names == ["sbp", "hr"]
    assert record.n_observations == 5
    assert record.treatment_types == ["metoprolol:25mg:oral", "furosemide:40mg:injection"]
    times, values = record.observations(["hr"])[0]
    assert times.tolist() == [0.5, 3.0]
    assert values.tolist() == [70.0, 72.0]


def test_treatment_types_are_distinct_in_order():
    events = (
        TreatmentEvent(3.0, "b"),
        TreatmentEvent(1.0, "a"),
        TreatmentEvent(4.0, "b"),
    )
    assert _record(treatments=events).treatment_types == ["b", "a"]


def test_equal_timestamps_allowed():
    record = _record(covariates={"sbp": Series(times=(1.0, 1.0), values=(120.0, 121.0))})
    assert len(record.covariates["sbp"]) == 2


def test_all_violations_collected():
    with pytest.raises(ValidationError) as info:
        _record(
            covariates={
                "sbp": Series(times=(0.0, 2.0, 1.0), values=(1.0, math.nan, 2.0)),
                "hr": Series(times=(0.0, 1.0), values=(1.0,)),
            },
            treatments=(TreatmentEvent(math.inf, "x", dose=-1.0),),
        )
    violations = info.value.violations
    assert len(violations) == 5
    joined = "\n".join(violations)
    assert "nondecreasing" in joined
    assert "value must be finite" in joined
    assert "2 times but 1 values" in joined
    assert "treatment time must be finite" in joined
    assert "dose must be > 0" in joined


def test_empty_patient_id():
    with pytest.raises(ValidationError, match="patient_id"):
        _record(pid="")


def test_series_sorted_is_stable():
    series = Series(times=(2.0, 1.0, 2.0, 0.0), values=(1.0, 2.0, 3.0, 4.0))
    result = series.sorted()
    assert result.times == (0.0, 1.0, 2.0, 2.0)
    assert result.values == (4.0, 2.0, 1.0, 3.0)


def test_select_and_without_treatments():
    record = _record()
    assert record.select(["hr"]).names == ["hr"]
    assert record.without_treatments().treatments == ()


def test_dict_roundtrip():
    record = _record(demographics={"age": 64, "sex": "F"})
    assert PatientRecord.from_dict(record.to_dict()) == record


def test_treatment_type_must_fix_dose_and_route():
    first = _record("p1")
    second = _record(
        "p2",
        treatments=(TreatmentEvent(1.0, "metoprolol:25mg:oral", 50.0),),
    )
    found = treatment_violations([first, second])
    assert len(found) == 1
    assert "p2" in found[0]
    assert treatment_violations([first, _record("p3")]) == []
