"""Tests for loading and saving patient records."""

import dataclasses
import logging
import pathlib

import pytest

from causalgp import (
    ParseError,
    PatientRecord,
    Route,
    Series,
    TreatmentEvent,
    ValidationError,
    from_jsons,
    load_json,
    load_records,
    save_records,
    to_jsons,
    write_json,
)

HEADER = "patient_id,stream_kind,name,time_hours,value,dose,route\n"


def _records():
    return [
        PatientRecord(
            patient_id="p1",
            covariates={
                "sbp": Series(times=(0.0, 1.25, 3.1), values=(121.5, 118.0, 0.1 + 0.2)),
                "hr": Series(times=(0.5,), values=(71.0,)),
            },
            treatments=(TreatmentEvent(1.0, "metoprolol:25mg:oral", 25.0),),
            demographics={"age": 70},
        ),
        PatientRecord(
            patient_id="p2",
            covariates={"sbp": Series(times=(2.0, 4.0), values=(130.0, 128.0))},
            treatments=(TreatmentEvent(3.0, "furosemide:40mg:injection", 40.0, Route.INJECTION),),
        ),
    ]


def _write(tmp_path, text, name="records.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


# ── JSON ─────────────────────────────────────────────────────────────────


def test_jsons_roundtrip():
    records = _records()
    assert from_jsons(to_jsons(records)) == records


def test_write_json_load_json(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "records.json"
    write_json(records=_records(), path=path)
    assert load_json(path) == _records()


def test_empty_json():
    assert from_jsons("") == []
    assert from_jsons("[]") == []


def test_invalid_json_reports_location():
    with pytest.raises(ParseError, match="line 2") as info:
        from_jsons('[\n{"patient_id": }]')
    assert info.value.context is not None


def test_json_must_be_a_list():
    with pytest.raises(ParseError, match="JSON list"):
        from_jsons('{"patient_id": "p1"}')


def test_json_missing_field():
    with pytest.raises(ParseError, match="record 0"):
        from_jsons('[{"covariates": {}}]')


# ── CSV ──────────────────────────────────────────────────────────────────


def test_csv_roundtrip_is_exact(tmp_path: pathlib.Path) -> None:
    path = tmp_path / "records.csv"
    save_records(_records(), path)
    loaded = load_records(path)
    # demographics are only carried by JSON
    expected = [dataclasses.replace(r, demographics={}) for r in _records()]
    assert loaded == expected
    assert loaded[0].covariates["sbp"].values[2] == 0.1 + 0.2


def test_csv_defaults(tmp_path: pathlib.Path) -> None:
    path = _write(tmp_path, HEADER + "p1,observation,sbp,0,120,,\np1,treatment,drug,1,,,\n")
    (record,) = load_records(path)
    assert record.treatments == (TreatmentEvent(1.0, "drug", 1.0, Route.ORAL),)


def test_csv_bad_number_reports_line(tmp_path: pathlib.Path) -> None:
    path = _write(tmp_path, HEADER + "p1,observation,sbp,0,120,,\np1,observation,sbp,1,high,,\n")
    with pytest.raises(ParseError, match="line 3") as info:
        load_records(path)
    assert "value" in str(info.value)


def test_csv_unknown_stream_kind(tmp_path: pathlib.Path) -> None:
    path = _write(tmp_path, HEADER + "p1,lab,sbp,0,120,,\n")
    with pytest.raises(ParseError, match="stream_kind"):
        load_records(path)


def test_csv_unknown_route(tmp_path: pathlib.Path) -> None:
    path = _write(tmp_path, HEADER + "p1,treatment,drug,1,,1,inhaled\n")
    with pytest.raises(ParseError, match="route"):
        load_records(path)


def test_csv_missing_column(tmp_path: pathlib.Path) -> None:
    path = _write(tmp_path, "patient_id,name,time_hours,value\np1,sbp,0,1\n")
    with pytest.raises(ParseError, match="missing column"):
        load_records(path)


def test_empty_csv(tmp_path: pathlib.Path) -> None:
    assert load_records(_write(tmp_path, "")) == []
    assert load_records(_write(tmp_path, HEADER, name="header.csv")) == []


def test_unknown_suffix(tmp_path: pathlib.Path) -> None:
    with pytest.raises(ParseError, match="record format"):
        load_records(_write(tmp_path, "", name="records.txt"))


# ── validation on load ───────────────────────────────────────────────────

UNSORTED = HEADER + "p1,observation,sbp,2,120,,\np1,observation,sbp,1,118,,\np1,observation,sbp,1,119,,\n"


def test_unsorted_rejected_by_default(tmp_path: pathlib.Path) -> None:
    with pytest.raises(ValidationError, match="nondecreasing"):
        load_records(_write(tmp_path, UNSORTED))


def test_unsorted_sorted_with_warning(tmp_path: pathlib.Path, caplog: pytest.LogCaptureFixture) -> None:
    with caplog.at_level(logging.WARNING, logger="causalgp"):
        (record,) = load_records(_write(tmp_path, UNSORTED), sort=True)
    assert record.covariates["sbp"].times == (1.0, 1.0, 2.0)
    assert record.covariates["sbp"].values == (118.0, 119.0, 120.0)
    assert "out of order" in caplog.text


def test_all_violations_reported_together(tmp_path: pathlib.Path) -> None:
    text = (
        HEADER
        + "p1,observation,sbp,2,120,,\np1,observation,sbp,1,118,,\n"
        + "p1,observation,spo2,0,97,,\n"
        + "p1,treatment,drug,1,,-5,oral\n"
    )
    with pytest.raises(ValidationError) as info:
        load_records(_write(tmp_path, text), schema={"sbp", "hr"})
    joined = "\n".join(info.value.violations)
    assert "unknown covariate 'spo2'" in joined
    assert "nondecreasing" in joined
    assert "dose must be > 0" in joined


def test_duplicate_patient_ids():
    data = to_jsons(_records()[:1] * 2)
    with pytest.raises(ValidationError, match="duplicate patient_id 'p1'"):
        from_jsons(data)


def test_inconsistent_treatment_type_across_patients(tmp_path: pathlib.Path) -> None:
    text = HEADER + "p1,treatment,drug,1,,1,oral\np2,treatment,drug,1,,2,oral\n"
    with pytest.raises(ValidationError, match="'drug'"):
        load_records(_write(tmp_path, text))
