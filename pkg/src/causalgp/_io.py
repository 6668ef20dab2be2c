"""CSV and JSON serialisation of patient records.

CSV is long format, one row per observation or treatment event::

    patient_id,stream_kind,name,time_hours,value,dose,route

``stream_kind`` is ``observation`` (``name`` is the covariate, ``value`` the
measurement) or ``treatment`` (``name`` is the treatment type, with ``dose``
and ``route``).  Demographics are only carried by the JSON format, which
mirrors :meth:`PatientRecord.to_dict`.
"""

from __future__ import annotations

import enum
import json
import logging
import math
import pathlib
from collections.abc import Collection, Iterable, Mapping
from typing import Any

import pandas as pd

from causalgp._errors import ParseError, ValidationError
from causalgp._records import (
    PatientRecord,
    Route,
    Series,
    TreatmentEvent,
    treatment_violations,
)

LOGGER = logging.getLogger(__name__)

CSV_COLUMNS = ("patient_id", "stream_kind", "name", "time_hours", "value", "dose", "route")


class RecordFormat(enum.Enum):
    CSV = "csv"
    JSON = "json"

    @classmethod
    def from_path(cls, path: str | pathlib.Path) -> RecordFormat:
        suffix = pathlib.Path(path).suffix.lower().lstrip(".")
        try:
            return cls(suffix)
        except ValueError:
            msg = f"cannot infer record format from {str(path)!r}; use .csv or .json"
            raise ParseError(msg) from None


# ── JSON ─────────────────────────────────────────────────────────────────


def to_jsons(records: Iterable[PatientRecord]) -> str:
    """Return a JSON string from an iterable of records."""
    return json.dumps([r.to_dict() for r in records], indent=1)


def _raw_from_jsons(data: str) -> list[dict[str, Any]]:
    if not data.strip():
        return []
    try:
        raw = json.loads(data)
    except json.JSONDecodeError as err:
        msg = f"invalid JSON: {err.msg}"
        raise ParseError(msg, context=f"line {err.lineno}, column {err.colno}") from err
    if not isinstance(raw, list):
        msg = "expected a JSON list of patient records"
        raise ParseError(msg, context="top level")
    return raw


def from_jsons(data: str) -> list[PatientRecord]:
    """Return a list of records from a JSON string."""
    return _build(_raw_from_jsons(data), sort=False, schema=None)


def write_json(*, records: Iterable[PatientRecord], path: str | pathlib.Path) -> None:
    """Write records to a JSON file at *path*."""
    pathlib.Path(path).write_text(to_jsons(records), encoding="utf-8")


def load_json(path: str | pathlib.Path) -> list[PatientRecord]:
    """Read records from a JSON file at *path*."""
    return from_jsons(pathlib.Path(path).read_text(encoding="utf-8"))


def write_document(data: Mapping[str, object] | list[object], path: str | pathlib.Path) -> None:
    """Write a report-style JSON document with stable key order."""
    text = json.dumps(data, indent=2, sort_keys=True, allow_nan=False)
    pathlib.Path(path).write_text(text + "\n", encoding="utf-8")


def read_document(path: str | pathlib.Path) -> Any:  # noqa: ANN401
    text = pathlib.Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as err:
        msg = f"invalid JSON: {err.msg}"
        raise ParseError(msg, context=f"{path}: line {err.lineno}") from err


# ── CSV ──────────────────────────────────────────────────────────────────


def _csv_float(text: str, column: str, line: int) -> float:
    try:
        return float(text)
    except ValueError:
        msg = f"column {column!r} is not a number: {text!r}"
        raise ParseError(msg, context=f"line {line}") from None


def _raw_from_csv(path: pathlib.Path) -> list[dict[str, Any]]:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError:
        return []
    except pd.errors.ParserError as err:
        msg = f"malformed CSV: {err}"
        raise ParseError(msg, context=str(path)) from err
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        msg = f"CSV is missing column(s) {missing}"
        raise ParseError(msg, context="line 1")

    raw: dict[str, dict[str, Any]] = {}
    for offset, row in enumerate(frame.itertuples(index=False)):
        line = offset + 2
        pid = row.patient_id
        if not pid:
            msg = "empty patient_id"
            raise ParseError(msg, context=f"line {line}")
        entry = raw.setdefault(pid, {"patient_id": pid, "covariates": {}, "treatments": []})
        time = _csv_float(row.time_hours, "time_hours", line)
        if row.stream_kind == "observation":
            series = entry["covariates"].setdefault(row.name, {"times": [], "values": []})
            series["times"].append(time)
            series["values"].append(_csv_float(row.value, "value", line))
        elif row.stream_kind == "treatment":
            route = row.route or Route.ORAL.value
            if route not in {r.value for r in Route}:
                msg = f"unknown route {route!r}"
                raise ParseError(msg, context=f"line {line}")
            entry["treatments"].append(
                {
                    "time": time,
                    "treatment_type": row.name,
                    "dose": _csv_float(row.dose, "dose", line) if row.dose else 1.0,
                    "route": route,
                }
            )
        else:
            msg = f"stream_kind must be 'observation' or 'treatment'; received {row.stream_kind!r}"
            raise ParseError(msg, context=f"line {line}")
    return list(raw.values())


def _csv_frame(records: Iterable[PatientRecord]) -> pd.DataFrame:
    rows = []
    for record in records:
        for name, series in record.covariates.items():
            rows.extend(
                (record.patient_id, "observation", name, repr(t), repr(y), "", "")
                for t, y in zip(series.times, series.values, strict=True)
            )
        rows.extend(
            (
                record.patient_id,
                "treatment",
                e.treatment_type,
                repr(e.time),
                "",
                repr(e.dose),
                e.route.value,
            )
            for e in record.treatments
        )
    return pd.DataFrame(rows, columns=list(CSV_COLUMNS))


# ── records ──────────────────────────────────────────────────────────────


def _build(
    raw: list[dict[str, Any]],
    *,
    sort: bool,
    schema: Collection[str] | None,
) -> list[PatientRecord]:
    """Validate raw records, collecting every violation before raising."""
    violations: list[str] = []
    pending: list[tuple[str, dict[str, Series], tuple[TreatmentEvent, ...], dict[str, object]]] = []
    for index, data in enumerate(raw):
        try:
            pid = str(data["patient_id"])
            covariates = {
                str(name): Series(
                    times=tuple(float(t) for t in s["times"]),
                    values=tuple(float(v) for v in s["values"]),
                )
                for name, s in data.get("covariates", {}).items()
            }
            treatments = tuple(TreatmentEvent.from_dict(e) for e in data.get("treatments", ()))
        except (KeyError, TypeError, ValueError, AttributeError) as err:
            msg = f"malformed record: {err!r}"
            raise ParseError(msg, context=f"record {index}") from err

        for name, series in covariates.items():
            if schema is not None and name not in schema:
                violations.append(f"{pid}: unknown covariate {name!r}")
            unsorted = any(b < a for a, b in zip(series.times, series.times[1:], strict=False))
            if unsorted and sort:
                LOGGER.warning("%s/%s: times out of order; sorted", pid, name)
                covariates[name] = series.sorted()
        if sort:
            treatments = tuple(sorted(treatments, key=lambda e: e.time))
        pending.append((pid, covariates, treatments, dict(data.get("demographics") or {})))

    ids = [p[0] for p in pending]
    violations.extend(f"duplicate patient_id {pid!r}" for pid in sorted({i for i in ids if ids.count(i) > 1}))
    for pid, covariates, treatments, _ in pending:
        for name, series in covariates.items():
            violations.extend(series.violations(f"{pid}/{name}"))
        for m, event in enumerate(treatments):
            violations.extend(event.violations(f"{pid}/treatment[{m}]"))
    if violations:
        raise ValidationError(violations)

    records = [
        PatientRecord(patient_id=pid, covariates=covs, treatments=trs, demographics=demo)
        for pid, covs, trs, demo in pending
    ]
    if found := treatment_violations(records):
        raise ValidationError(found)
    return records


def load_records(
    path: str | pathlib.Path,
    format: RecordFormat | str | None = None,
    *,
    sort: bool = False,
    schema: Collection[str] | None = None,
) -> list[PatientRecord]:
    """Load and validate patient records.

    *format* defaults to the file suffix.  With ``sort=True`` out-of-order
    times are stably sorted with a warning instead of being rejected.  When
    *schema* is given, covariate names outside it are violations.
    """
    path = pathlib.Path(path)
    fmt = RecordFormat.from_path(path) if format is None else RecordFormat(format)
    if fmt is RecordFormat.CSV:
        raw = _raw_from_csv(path)
    else:
        raw = _raw_from_jsons(path.read_text(encoding="utf-8"))
    records = _build(raw, sort=sort, schema=schema)
    LOGGER.info("loaded %d record(s) from %s", len(records), path)
    return records


def save_records(
    records: Iterable[PatientRecord],
    path: str | pathlib.Path,
    format: RecordFormat | str | None = None,
) -> None:
    """Write *records* so that :func:`load_records` reproduces them exactly."""
    path = pathlib.Path(path)
    fmt = RecordFormat.from_path(path) if format is None else RecordFormat(format)
    if fmt is RecordFormat.CSV:
        _csv_frame(records).to_csv(path, index=False, encoding="utf-8")
    else:
        write_json(records=records, path=path)
    LOGGER.info("wrote records to %s", path)


def finite_or_none(value: float) -> float | None:
    """JSON has no NaN; undefined statistics are written as null."""
    return value if math.isfinite(value) else None
