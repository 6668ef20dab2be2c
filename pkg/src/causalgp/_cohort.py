"""Per-patient preprocessing and cohort selection."""

from __future__ import annotations

import logging
import math
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import ArrayLike, NDArray

from causalgp._errors import ParameterDomainError
from causalgp._records import PatientRecord, Series

LOGGER = logging.getLogger(__name__)

# guards floor() against representation error, e.g. 0.7 * 3
_FLOOR_SLACK = 1e-9


def normalize(record: PatientRecord) -> tuple[PatientRecord, dict[str, float]]:
    """Subtract each covariate's empirical mean; return the record and the means."""
    means: dict[str, float] = {}
    covariates: dict[str, Series] = {}
    for name, series in record.covariates.items():
        if not len(series):
            msg = f"{record.patient_id}/{name}: cannot normalise an empty covariate"
            raise ParameterDomainError(msg)
        values = np.array(series.values)
        means[name] = float(values.mean())
        covariates[name] = Series(series.times, tuple((values - means[name]).tolist()))
    return replace(record, covariates=covariates), means


def denormalize(values: ArrayLike, mean: float) -> NDArray[np.float64]:
    return np.asarray(values, dtype=float) + mean


def rebase_times(record: PatientRecord) -> tuple[PatientRecord, float]:
    """Shift all times so that the first observation is at 0; return the shift."""
    firsts = [s.times[0] for s in record.covariates.values() if len(s)]
    if not firsts:
        msg = f"{record.patient_id}: cannot rebase a record without observations"
        raise ParameterDomainError(msg)
    origin = min(firsts)
    covariates = {
        name: Series(tuple(t - origin for t in s.times), s.values)
        for name, s in record.covariates.items()
    }
    treatments = tuple(replace(e, time=e.time - origin) for e in record.treatments)
    return replace(record, covariates=covariates, treatments=treatments), origin


def split_train_test(
    record: PatientRecord,
    fraction: float = 0.7,
) -> tuple[PatientRecord, PatientRecord]:
    """First ``floor(fraction * T)`` observations of each covariate train, the rest test.

    Treatments are copied to both halves.
    """
    if not 0 < fraction < 1:
        msg = f"split fraction must lie in (0, 1); received {fraction!r}"
        raise ParameterDomainError(msg)
    train: dict[str, Series] = {}
    test: dict[str, Series] = {}
    for name, series in record.covariates.items():
        cut = math.floor(fraction * len(series) + _FLOOR_SLACK)
        train[name] = Series(series.times[:cut], series.values[:cut])
        test[name] = Series(series.times[cut:], series.values[cut:])
    return replace(record, covariates=train), replace(record, covariates=test)


# ── cohort filter ────────────────────────────────────────────────────────


@dataclass(frozen=True)
class FilterCriteria:
    """Cohort selection rules, applied in the order of the fields below.

    ``exclude_classes``
        drop records with any treatment whose drug class is listed; the class
        of a drug comes from ``drug_classes`` (the drug itself when absent)
        and the drug is the part of the treatment type before the first ``:``
    ``allowed_treatment_types``
        drop treatment events of any other type
    ``min_treatment_count``
        drop events of types administered fewer times across the cohort
    ``require_treatment``
        drop records left without treatment events
    ``min_observations``
        drop records with fewer observations in any of ``covariates``
        (every covariate of the record when ``covariates`` is empty)
    """

    exclude_classes: tuple[str, ...] = ()
    drug_classes: Mapping[str, str] = field(default_factory=dict)
    allowed_treatment_types: tuple[str, ...] | None = None
    min_treatment_count: int = 0
    require_treatment: bool = False
    min_observations: int = 0
    covariates: tuple[str, ...] = ()

    def drug_class(self, treatment_type: str) -> str:
        drug = treatment_type.split(":", 1)[0]
        return self.drug_classes.get(drug, drug)


@dataclass(frozen=True)
class AttritionStep:
    name: str
    records_in: int
    records_out: int
    events_in: int
    events_out: int

    def to_dict(self) -> dict[str, object]:
        return {
            "filter": self.name,
            "records_in": self.records_in,
            "records_out": self.records_out,
            "events_in": self.events_in,
            "events_out": self.events_out,
        }


def _keep_events(
    records: list[PatientRecord],
    keep: set[str] | frozenset[str],
) -> list[PatientRecord]:
    return [
        replace(r, treatments=tuple(e for e in r.treatments if e.treatment_type in keep))
        for r in records
    ]


def _n_events(records: Iterable[PatientRecord]) -> int:
    return sum(len(r.treatments) for r in records)


def _has_enough(record: PatientRecord, criteria: FilterCriteria) -> bool:
    names = criteria.covariates or tuple(record.covariates)
    empty = Series((), ())
    return all(len(record.covariates.get(n, empty)) >= criteria.min_observations for n in names)


def cohort_filter(
    records: Iterable[PatientRecord],
    criteria: FilterCriteria,
) -> tuple[list[PatientRecord], list[AttritionStep]]:
    """Apply *criteria*; return the surviving records and one attrition step per active rule."""
    current = list(records)
    report: list[AttritionStep] = []

    def step(name: str, after: list[PatientRecord]) -> list[PatientRecord]:
        entry = AttritionStep(name, len(current), len(after), _n_events(current), _n_events(after))
        LOGGER.info(
            "filter %s: %d -> %d records, %d -> %d events",
            name,
            entry.records_in,
            entry.records_out,
            entry.events_in,
            entry.events_out,
        )
        report.append(entry)
        return after

    if criteria.exclude_classes:
        blocked = set(criteria.exclude_classes)
        current = step(
            "exclude_classes",
            [
                r
                for r in current
                if not any(criteria.drug_class(e.treatment_type) in blocked for e in r.treatments)
            ],
        )
    if criteria.allowed_treatment_types is not None:
        current = step(
            "allowed_treatment_types",
            _keep_events(current, frozenset(criteria.allowed_treatment_types)),
        )
    if criteria.min_treatment_count > 0:
        counts = Counter(e.treatment_type for r in current for e in r.treatments)
        common = {t for t, n in counts.items() if n >= criteria.min_treatment_count}
        current = step("min_treatment_count", _keep_events(current, common))
    if criteria.require_treatment:
        current = step("require_treatment", [r for r in current if r.treatments])
    if criteria.min_observations > 0:
        current = step("min_observations", [r for r in current if _has_enough(r, criteria)])
    return current, report


def treatment_counts(records: Iterable[PatientRecord]) -> dict[str, int]:
    """Administrations per treatment type across *records*."""
    counts = Counter(e.treatment_type for r in records for e in r.treatments)
    return dict(sorted(counts.items()))


def strip_treatments(records: Iterable[PatientRecord]) -> list[PatientRecord]:
    return [r.without_treatments() for r in records]

