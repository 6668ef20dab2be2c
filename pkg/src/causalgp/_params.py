"""Flat parameter vectors for the trainer.

A :class:`ParamSchema` lists the free hyperparameters of one patient's model
under stable names, for example::

    sbp/sigma_se  sbp/ell_se  sbp/sigma_per  sbp/ell_per  sbp/period
    sbp/noise     sbp/B       sbp/D          sbp/S[metoprolol:25mg:oral]
    ell[metoprolol:25mg:oral]

Positive parameters live on the log scale in the vector, the others (``B``,
``S``, ``c``, ``a``) are stored as is.  One entry per treatment *type* feeds
every administration of that type, which is the tying table.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from causalgp._engine import CovariateModel, GpModel, Treatment
from causalgp._errors import InputError, ParameterDomainError
from causalgp._kernels import KernelKind, KernelSpec
from causalgp._lfm import ForceConvention, LfmParams
from causalgp._means import ExpDecayMean
from causalgp._records import PatientRecord

FloatArray = NDArray[np.float64]

CIRCADIAN_PERIOD = 24.0
# fewer observations than this disables the periodic component
MIN_PERIODIC_OBSERVATIONS = 3
# placeholder force length-scale for families that switch the force off
_INERT_ELL = 1.0


class ModelFamily(enum.Enum):
    PROPOSED = "proposed"
    SE_PER = "se-per"
    OU_EXP = "ou-exp"


@dataclass(frozen=True)
class ParamEntry:
    name: str
    positive: bool
    init: float

    def __post_init__(self) -> None:
        if self.positive and not (math.isfinite(self.init) and self.init > 0):
            msg = f"initial value of {self.name!r} must be > 0; received {self.init!r}"
            raise ParameterDomainError(msg)


def _median_gap(times: ArrayLike) -> float:
    gaps = np.diff(np.unique(np.asarray(times, dtype=float)))
    return float(np.median(gaps)) if gaps.size else 1.0


def _scale(values: ArrayLike) -> float:
    values = np.asarray(values, dtype=float)
    std = float(values.std()) if values.size > 1 else 0.0
    return std if std > 0 else 1.0


@dataclass(frozen=True)
class ParamSchema:
    """Layout of the free parameters of one patient and model family."""

    family: ModelFamily
    covariates: tuple[str, ...]
    treatment_types: tuple[str, ...]
    marks: tuple[float, ...]
    admin_types: tuple[int, ...]
    entries: tuple[ParamEntry, ...]
    fixed: Mapping[str, float] = field(default_factory=dict)
    convention: ForceConvention = ForceConvention.UNZEROED
    jitter: float = 1e-8

    @classmethod
    def from_record(
        cls,
        record: PatientRecord,
        family: ModelFamily | str = ModelFamily.PROPOSED,
        *,
        convention: ForceConvention = ForceConvention.UNZEROED,
        jitter: float = 1e-8,
    ) -> ParamSchema:
        """Build the layout with data-driven initial values.

        Length-scales start at the median gap between observation times,
        output scales at the empirical standard deviation, noise at a tenth of
        it, ``D`` at the inverse median gap and ``B``, ``S``, ``c`` and ``a``
        at zero.  ``SE_PER`` drops the record's treatments.
        """
        family = ModelFamily(family)
        for name, series in record.covariates.items():
            if not len(series):
                msg = f"{record.patient_id}/{name}: at least one observation is required"
                raise InputError(msg)
        if family is ModelFamily.SE_PER:
            record = record.without_treatments()
        types = tuple(record.treatment_types)
        marks = tuple(e.time for e in record.treatments)
        admin_types = tuple(types.index(e.treatment_type) for e in record.treatments)
        pooled = np.concatenate([np.array(s.times) for s in record.covariates.values()])

        entries: list[ParamEntry] = []
        fixed: dict[str, float] = {}
        for name, series in record.covariates.items():
            times, values = series.arrays()
            gap, scale = _median_gap(times), _scale(values)
            if family is ModelFamily.OU_EXP:
                entries += [
                    ParamEntry(f"{name}/sigma_ou", True, scale),
                    ParamEntry(f"{name}/ell_ou", True, gap),
                    ParamEntry(f"{name}/noise", True, 0.1 * scale),
                    ParamEntry(f"{name}/c", False, 0.0),
                ]
                for kind in types:
                    entries += [
                        ParamEntry(f"{name}/a[{kind}]", False, 0.0),
                        ParamEntry(f"{name}/gamma[{kind}]", True, 1.0 / gap),
                    ]
                continue
            entries += [
                ParamEntry(f"{name}/sigma_se", True, scale),
                ParamEntry(f"{name}/ell_se", True, gap),
            ]
            if len(series) >= MIN_PERIODIC_OBSERVATIONS:
                entries += [
                    ParamEntry(f"{name}/sigma_per", True, scale),
                    ParamEntry(f"{name}/ell_per", True, 1.0),
                    ParamEntry(f"{name}/period", True, CIRCADIAN_PERIOD),
                ]
            entries += [
                ParamEntry(f"{name}/noise", True, 0.1 * scale),
                ParamEntry(f"{name}/B", False, 0.0),
            ]
            if types:
                entries.append(ParamEntry(f"{name}/D", True, 1.0 / gap))
                entries += [ParamEntry(f"{name}/S[{kind}]", False, 0.0) for kind in types]
            else:
                # only B / D enters the model without forcing
                fixed[f"{name}/D"] = 1.0 / gap
        if family is ModelFamily.PROPOSED:
            entries += [ParamEntry(f"ell[{kind}]", True, _median_gap(pooled)) for kind in types]

        return cls(
            family=family,
            covariates=tuple(record.covariates),
            treatment_types=types,
            marks=marks,
            admin_types=admin_types,
            entries=tuple(entries),
            fixed=fixed,
            convention=convention,
            jitter=jitter,
        )

    # ── layout ───────────────────────────────────────────────────────────

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    @property
    def size(self) -> int:
        return len(self.entries)

    @property
    def positive(self) -> NDArray[np.bool_]:
        return np.array([e.positive for e in self.entries], dtype=bool)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            msg = f"no parameter named {name!r}"
            raise InputError(msg) from None

    def has(self, name: str) -> bool:
        return name in self.names

    def sites(self, name: str) -> list[str]:
        """Model locations fed by parameter *name*."""
        if "[" not in name:
            return [name]
        head, kind = name[:-1].split("[", 1)
        k = self.treatment_types.index(kind)
        admins = [m for m, t in enumerate(self.admin_types) if t == k]
        return [f"{head}[{m}]" for m in admins]

    def initial(self) -> dict[str, float]:
        return {e.name: e.init for e in self.entries}

    def block(self, covariate: str) -> ParamSchema:
        """Sub-layout of one covariate; valid when no parameter couples covariates."""
        prefix = f"{covariate}/"
        return ParamSchema(
            family=self.family,
            covariates=(covariate,),
            treatment_types=self.treatment_types,
            marks=self.marks,
            admin_types=self.admin_types,
            entries=tuple(e for e in self.entries if e.name.startswith(prefix)),
            fixed={k: v for k, v in self.fixed.items() if k.startswith(prefix)},
            convention=self.convention,
            jitter=self.jitter,
        )

    @property
    def independent(self) -> bool:
        """True when the covariates share no force and can be fitted one by one."""
        return self.family is ModelFamily.OU_EXP or not self.treatment_types

    # ── model construction ───────────────────────────────────────────────

    def build_model(self, params: Mapping[str, float]) -> GpModel:
        """Assemble the :class:`GpModel` for constrained *params*."""
        values = {**self.fixed, **params}
        if self.family is ModelFamily.PROPOSED:
            ells = tuple(values[f"ell[{self.treatment_types[k]}]"] for k in self.admin_types)
        else:
            ells = tuple(_INERT_ELL for _ in self.admin_types)
        treatments = tuple(
            Treatment(self.treatment_types[k], t_m, ell)
            for k, t_m, ell in zip(self.admin_types, self.marks, ells, strict=True)
        )
        covariates = tuple(self._covariate(name, values, ells) for name in self.covariates)
        return GpModel(
            covariates=covariates,
            treatments=treatments,
            jitter=self.jitter,
            convention=self.convention,
        )

    def _covariate(
        self,
        name: str,
        values: Mapping[str, float],
        ells: tuple[float, ...],
    ) -> CovariateModel:
        def get(key: str) -> float:
            return values[f"{name}/{key}"]

        per_admin = [self.treatment_types[k] for k in self.admin_types]
        if self.family is ModelFamily.OU_EXP:
            return CovariateModel(
                name=name,
                baseline=(KernelSpec(KernelKind.OU, get("sigma_ou"), get("ell_ou")),),
                lfm=LfmParams(
                    B=0.0,
                    D=1.0,
                    S=tuple(0.0 for _ in per_admin),
                    ell=ells,
                    t_marks=self.marks,
                ),
                noise_var=get("noise") ** 2,
                decay=ExpDecayMean(
                    c=get("c"),
                    a=tuple(get(f"a[{kind}]") for kind in per_admin),
                    gamma=tuple(get(f"gamma[{kind}]") for kind in per_admin),
                ),
            )
        baseline = [KernelSpec(KernelKind.SE, get("sigma_se"), get("ell_se"))]
        if f"{name}/period" in values:
            baseline.append(
                KernelSpec(
                    KernelKind.PERIODIC,
                    get("sigma_per"),
                    get("ell_per"),
                    period=get("period"),
                )
            )
        return CovariateModel(
            name=name,
            baseline=tuple(baseline),
            lfm=LfmParams(
                B=get("B"),
                D=get("D"),
                S=tuple(get(f"S[{kind}]") for kind in per_admin),
                ell=ells,
                t_marks=self.marks,
            ),
            noise_var=get("noise") ** 2,
        )


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Unconstrained coordinates laid out by *schema*."""

    values: FloatArray
    schema: ParamSchema

    def __post_init__(self) -> None:
        if self.values.shape != (self.schema.size,):
            msg = f"vector of shape {self.values.shape} does not match {self.schema.size} parameters"
            raise InputError(msg)

    def with_values(self, values: ArrayLike) -> ParamVector:
        return ParamVector(np.asarray(values, dtype=float), self.schema)

    def model(self) -> GpModel:
        return self.schema.build_model(constrain(self))


def unconstrain(params: Mapping[str, float], schema: ParamSchema) -> ParamVector:
    """Map constrained values to the optimiser's coordinates (log for positive entries)."""
    values = np.empty(schema.size)
    for k, entry in enumerate(schema.entries):
        value = float(params[entry.name])
        if entry.positive:
            if not (math.isfinite(value) and value > 0):
                msg = f"{entry.name!r} must be > 0; received {value!r}"
                raise ParameterDomainError(msg)
            values[k] = math.log(value)
        else:
            values[k] = value
    return ParamVector(values, schema)


def constrain(vector: ParamVector) -> dict[str, float]:
    """Inverse of :func:`unconstrain`."""
    positive = vector.schema.positive
    values = vector.values.copy()
    values[positive] = np.exp(values[positive])
    return {name: float(v) for name, v in zip(vector.schema.names, values, strict=True)}


def initial_vector(schema: ParamSchema) -> ParamVector:
    return unconstrain(schema.initial(), schema)
