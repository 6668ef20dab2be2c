"""Patient records: irregular multi-covariate series plus time-marked treatments."""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from causalgp._errors import ValidationError


class Route(enum.Enum):
    ORAL = "oral"
    INJECTION = "injection"
    INFUSION = "infusion"


@dataclass(frozen=True)
class TreatmentEvent:
    """One administration.

    ``treatment_type`` names drug, dose and route together (for instance
    ``"metoprolol-tartrate:25mg:oral"``); a different dose or route is a
    different treatment.
    """

    time: float
    treatment_type: str
    dose: float = 1.0
    route: Route = Route.ORAL

    def violations(self, where: str) -> list[str]:
        found = []
        if not math.isfinite(self.time):
            found.append(f"{where}: treatment time must be finite; received {self.time!r}")
        if not self.treatment_type:
            found.append(f"{where}: treatment_type must be non-empty")
        if not (math.isfinite(self.dose) and self.dose > 0):
            found.append(f"{where}: dose must be > 0; received {self.dose!r}")
        return found

    def to_dict(self) -> dict[str, object]:
        return {
            "time": self.time,
            "treatment_type": self.treatment_type,
            "dose": self.dose,
            "route": self.route.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> TreatmentEvent:
        return cls(
            time=float(data["time"]),  # type: ignore[arg-type]
            treatment_type=str(data["treatment_type"]),
            dose=float(data.get("dose", 1.0)),  # type: ignore[arg-type]
            route=Route(data.get("route", "oral")),
        )


@dataclass(frozen=True)
class Series:
    """Observations of one covariate; times are in hours."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __len__(self) -> int:
        return len(self.times)

    def arrays(self) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        return np.array(self.times, dtype=float), np.array(self.values, dtype=float)

    def violations(self, where: str) -> list[str]:
        found = []
        if len(self.times) != len(self.values):
            found.append(
                f"{where}: {len(self.times)} times but {len(self.values)} values"
            )
        for i, (t, y) in enumerate(zip(self.times, self.values, strict=False)):
            if not math.isfinite(t):
                found.append(f"{where}[{i}]: time must be finite; received {t!r}")
            if not math.isfinite(y):
                found.append(f"{where}[{i}]: value must be finite; received {y!r}")
        for i in range(1, len(self.times)):
            if self.times[i] < self.times[i - 1]:
                found.append(
                    f"{where}[{i}]: times must be nondecreasing "
                    f"({self.times[i - 1]!r} then {self.times[i]!r})"
                )
        return found

    def sorted(self) -> Series:
        """Stable sort by time; ties keep their input order."""
        order = sorted(range(len(self.times)), key=self.times.__getitem__)
        return Series(
            times=tuple(self.times[i] for i in order),
            values=tuple(self.values[i] for i in order),
        )


@dataclass(frozen=True)
class PatientRecord:
    """Per-patient observations and treatment events.

    Construction validates every covariate and treatment and raises a single
    ``ValidationError`` listing all violations.
    """

    patient_id: str
    covariates: dict[str, Series]
    treatments: tuple[TreatmentEvent, ...] = ()
    demographics: dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if found := self.violations():
            raise ValidationError(found)

    def violations(self) -> list[str]:
        found = []
        if not self.patient_id:
            found.append("patient_id must be non-empty")
        for name, series in self.covariates.items():
            found.extend(series.violations(f"{self.patient_id}/{name}"))
        for m, event in enumerate(self.treatments):
            found.extend(event.violations(f"{self.patient_id}/treatment[{m}]"))
        return found

    @property
    def names(self) -> list[str]:
        return list(self.covariates)

    @property
    def treatment_types(self) -> list[str]:
        """Distinct treatment types in first-administration order."""
        return list(dict.fromkeys(e.treatment_type for e in self.treatments))

    @property
    def n_observations(self) -> int:
        return sum(len(s) for s in self.covariates.values())

    def observations(
        self,
        names: Sequence[str] | None = None,
    ) -> list[tuple[NDArray[np.float64], NDArray[np.float64]]]:
        """``(times, values)`` arrays per covariate, in the order of *names*."""
        names = self.names if names is None else names
        return [self.covariates[name].arrays() for name in names]

    def select(self, names: Iterable[str]) -> PatientRecord:
        """Keep only the covariates in *names*."""
        return replace(self, covariates={n: self.covariates[n] for n in names})

    def without_treatments(self) -> PatientRecord:
        return replace(self, treatments=())

    def to_dict(self) -> dict[str, object]:
        return {
            "patient_id": self.patient_id,
            "covariates": {
                name: {"times": list(s.times), "values": list(s.values)}
                for name, s in self.covariates.items()
            },
            "treatments": [e.to_dict() for e in self.treatments],
            "demographics": dict(self.demographics),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, object]) -> PatientRecord:
        """Reconstruct a record from a dict produced by :meth:`to_dict`."""
        covs = data.get("covariates", {})
        return cls(
            patient_id=str(data["patient_id"]),
            covariates={
                str(name): Series(
                    times=tuple(float(t) for t in s["times"]),
                    values=tuple(float(v) for v in s["values"]),
                )
                for name, s in covs.items()  # type: ignore[attr-defined]
            },
            treatments=tuple(
                TreatmentEvent.from_dict(e)
                for e in data.get("treatments", ())  # type: ignore[attr-defined]
            ),
            demographics=dict(data.get("demographics") or {}),  # type: ignore[call-overload]
        )


def treatment_violations(records: Iterable[PatientRecord]) -> list[str]:
    """Report treatment types whose (dose, route) differs within a dataset."""
    seen: dict[str, tuple[float, Route, str]] = {}
    found = []
    for record in records:
        for event in record.treatments:
            first = seen.setdefault(
                event.treatment_type, (event.dose, event.route, record.patient_id)
            )
            if (event.dose, event.route) != first[:2]:
                found.append(
                    f"{record.patient_id}: treatment {event.treatment_type!r} has dose "
                    f"{event.dose!r}/{event.route.value} but {first[2]} has "
                    f"{first[0]!r}/{first[1].value}"
                )
    return found
