"""Synthetic patients sampled from the full generative model.

Each latent force is drawn on a fine grid from its causal-kernel prior, the
first-order ODE is integrated exactly for a force that is piecewise linear
between grid nodes, an independent baseline GP sample and i.i.d. noise are
added, and the result is read off at the observation times.  Observation
times, mark times and a regular grid of step ``resolution`` together form the
integration grid, so no interpolation is needed.
"""

from __future__ import annotations

import enum
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike, NDArray

from causalgp._engine import CovariateModel, GpModel, Treatment
from causalgp._errors import ConfigError
from causalgp._kernels import KernelKind, KernelSpec
from causalgp._lfm import ForceConvention, LfmParams, force_covariance
from causalgp._records import PatientRecord, Route, Series, TreatmentEvent

LOGGER = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

# effects are summarised over (t_m, t_m + EFFECT_WINDOW * ell_m)
EFFECT_WINDOW = 4.0


class SamplingLaw(enum.Enum):
    UNIFORM = "uniform-random"
    GRID = "fixed-grid"
    BURST = "burst"


@dataclass(frozen=True)
class SimCovariate:
    """Ground truth of one covariate; ``S`` is indexed by administration."""

    name: str
    B: float
    D: float
    S: tuple[float, ...]
    baseline: tuple[KernelSpec, ...]
    noise_var: float

    def to_dict(self) -> dict[str, object]:
        return {
            "name": self.name,
            "B": self.B,
            "D": self.D,
            "S": list(self.S),
            "baseline": [spec.to_dict() for spec in self.baseline],
            "noise_var": self.noise_var,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SimCovariate:
        return cls(
            name=str(data["name"]),
            B=float(data.get("B", 0.0)),
            D=float(data["D"]),
            S=tuple(float(s) for s in data.get("S", ())),
            baseline=tuple(KernelSpec.from_dict(s) for s in data.get("baseline", ())),
            noise_var=float(data["noise_var"]),
        )


@dataclass(frozen=True)
class SimTreatment:
    treatment_type: str
    time: float
    ell: float
    dose: float = 1.0
    route: Route = Route.ORAL

    def to_dict(self) -> dict[str, object]:
        return {
            "treatment_type": self.treatment_type,
            "time": self.time,
            "ell": self.ell,
            "dose": self.dose,
            "route": self.route.value,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SimTreatment:
        return cls(
            treatment_type=str(data["treatment_type"]),
            time=float(data["time"]),
            ell=float(data["ell"]),
            dose=float(data.get("dose", 1.0)),
            route=Route(data.get("route", "oral")),
        )


@dataclass(frozen=True)
class SimConfig:
    """One synthetic patient.

    ``force_mean`` is added to every force after its mark (0 keeps the
    zero-mean prior of the fitted model).  The grid step must resolve both
    the shortest force length-scale and the fastest decay.
    """

    covariates: tuple[SimCovariate, ...]
    treatments: tuple[SimTreatment, ...] = ()
    n_observations: int = 60
    horizon: float = 48.0
    sampling: SamplingLaw = SamplingLaw.UNIFORM
    resolution: float = 0.05
    seed: int = 0
    convention: ForceConvention = ForceConvention.ZEROED
    force_mean: float = 0.0
    patient_id: str = "sim-000"
    n_bursts: int = 4
    burst_width: float = 2.0

    def __post_init__(self) -> None:
        problems = []
        if not self.covariates:
            problems.append("at least one covariate is required")
        if self.n_observations < 1:
            problems.append(f"n_observations must be >= 1; received {self.n_observations}")
        for name in ("horizon", "resolution", "burst_width"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                problems.append(f"{name} must be > 0; received {value!r}")
        if self.sampling is SamplingLaw.BURST and not 1 <= self.n_bursts <= self.n_observations:
            problems.append(f"n_bursts must lie in [1, n_observations]; received {self.n_bursts}")
        for cov in self.covariates:
            if len(cov.S) != len(self.treatments):
                problems.append(
                    f"{cov.name}: {len(cov.S)} effect sizes for {len(self.treatments)} treatments"
                )
            if not (cov.D > 0 and cov.noise_var > 0):
                problems.append(f"{cov.name}: D and noise_var must be > 0")
        ells: dict[str, float] = {}
        for tr in self.treatments:
            if not tr.ell > 0:
                problems.append(f"{tr.treatment_type}: ell must be > 0; received {tr.ell!r}")
            if ells.setdefault(tr.treatment_type, tr.ell) != tr.ell:
                problems.append(f"{tr.treatment_type}: administrations disagree on ell")
        if problems:
            raise ConfigError("; ".join(problems))
        self._check_resolution()

    def _check_resolution(self) -> None:
        limits = [1 / (10 * max(cov.D for cov in self.covariates))]
        if self.treatments:
            limits.append(min(tr.ell for tr in self.treatments) / 10)
        if self.resolution > min(limits):
            msg = (
                f"grid resolution {self.resolution!r} does not resolve the model; "
                f"it must be <= {min(limits):.6g} (min ell / 10 and 1 / (10 max D))"
            )
            raise ConfigError(msg)

    @property
    def marks(self) -> tuple[float, ...]:
        return tuple(tr.time for tr in self.treatments)

    def lfm_params(self) -> list[LfmParams]:
        ells = tuple(tr.ell for tr in self.treatments)
        return [
            LfmParams(B=cov.B, D=cov.D, S=cov.S, ell=ells, t_marks=self.marks)
            for cov in self.covariates
        ]

    def model(self) -> GpModel:
        """The joint GP this configuration samples from (``force_mean`` aside)."""
        return GpModel(
            covariates=tuple(
                CovariateModel(cov.name, cov.baseline, lfm, cov.noise_var)
                for cov, lfm in zip(self.covariates, self.lfm_params(), strict=True)
            ),
            treatments=tuple(
                Treatment(tr.treatment_type, tr.time, tr.ell) for tr in self.treatments
            ),
            convention=self.convention,
        )

    def to_dict(self) -> dict[str, object]:
        return {
            "patient_id": self.patient_id,
            "covariates": [cov.to_dict() for cov in self.covariates],
            "treatments": [tr.to_dict() for tr in self.treatments],
            "n_observations": self.n_observations,
            "horizon": self.horizon,
            "sampling": self.sampling.value,
            "resolution": self.resolution,
            "seed": self.seed,
            "convention": self.convention.value,
            "force_mean": self.force_mean,
            "n_bursts": self.n_bursts,
            "burst_width": self.burst_width,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SimConfig:
        data = dict(data)
        try:
            covariates = tuple(SimCovariate.from_dict(c) for c in data.pop("covariates"))
            treatments = tuple(SimTreatment.from_dict(t) for t in data.pop("treatments", ()))
            if "sampling" in data:
                data["sampling"] = SamplingLaw(data["sampling"])
            if "convention" in data:
                data["convention"] = ForceConvention(data["convention"])
            return cls(covariates=covariates, treatments=treatments, **data)
        except (KeyError, TypeError, ValueError) as err:
            if isinstance(err, ConfigError):
                raise
            msg = f"invalid sim configuration: {err}"
            raise ConfigError(msg) from err


# ── ground truth ─────────────────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Noiseless trajectories behind one simulated record.

    ``effects[j, m]`` is the response of covariate *j* to force *m* alone,
    so ``lfm[j] = B_j / D_j + effects[j].sum(axis=0)``.
    """

    patient_id: str
    grid: FloatArray
    forces: FloatArray
    effects: FloatArray
    lfm: FloatArray
    times: dict[str, FloatArray]
    baseline: dict[str, FloatArray]
    noiseless: dict[str, FloatArray]
    config: SimConfig

    def window_effect(self, j: int, m: int) -> float:
        """Mean effect of administration *m* on covariate *j* over its effect window."""
        tr = self.config.treatments[m]
        inside = (self.grid > tr.time) & (self.grid <= tr.time + EFFECT_WINDOW * tr.ell)
        if not np.any(inside):
            return 0.0
        return float(self.effects[j, m][inside].mean())

    def effect_signs(self) -> dict[str, dict[str, int]]:
        """Sign of the summed window effect per covariate and treatment type."""
        signs: dict[str, dict[str, int]] = {}
        for j, cov in enumerate(self.config.covariates):
            totals: dict[str, float] = {}
            for m, tr in enumerate(self.config.treatments):
                totals[tr.treatment_type] = totals.get(tr.treatment_type, 0.0) + self.window_effect(j, m)
            signs[cov.name] = {kind: int(np.sign(total)) for kind, total in totals.items()}
        return signs

    def to_dict(self) -> dict[str, object]:
        return {
            "patient_id": self.patient_id,
            "config": self.config.to_dict(),
            "grid": self.grid.tolist(),
            "forces": self.forces.tolist(),
            "effects": self.effects.tolist(),
            "lfm": self.lfm.tolist(),
            "times": {k: v.tolist() for k, v in self.times.items()},
            "baseline": {k: v.tolist() for k, v in self.baseline.items()},
            "noiseless": {k: v.tolist() for k, v in self.noiseless.items()},
            "effect_signs": self.effect_signs(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> GroundTruth:
        config = SimConfig.from_dict(data["config"])
        n_cov, n_admin = len(config.covariates), len(config.treatments)
        grid = np.array(data["grid"], dtype=float)
        return cls(
            patient_id=str(data["patient_id"]),
            grid=grid,
            forces=np.array(data["forces"], dtype=float).reshape(n_admin, grid.size),
            effects=np.array(data["effects"], dtype=float).reshape(n_cov, n_admin, grid.size),
            lfm=np.array(data["lfm"], dtype=float).reshape(n_cov, grid.size),
            times={k: np.array(v, dtype=float) for k, v in data["times"].items()},
            baseline={k: np.array(v, dtype=float) for k, v in data["baseline"].items()},
            noiseless={k: np.array(v, dtype=float) for k, v in data["noiseless"].items()},
            config=config,
        )


# ── simulation ───────────────────────────────────────────────────────────


def integrate_lfm(
    grid: ArrayLike,
    D: float,
    left: ArrayLike,
    right: ArrayLike,
    *,
    drive: float = 0.0,
    initial: float = 0.0,
) -> FloatArray:
    """Solve ``dmu/dt = drive + u(t) - D mu`` exactly on *grid*.

    ``u`` is linear on each interval, from ``left[k]`` at ``grid[k]`` to
    ``right[k]`` at ``grid[k + 1]``; distinct left and right values let the
    input jump at a node.
    """
    grid = np.asarray(grid, dtype=float)
    left = np.asarray(left, dtype=float)
    right = np.asarray(right, dtype=float)
    h = np.diff(grid)
    decay = np.exp(-D * h)
    gain = -np.expm1(-D * h) / D
    # weight of the input slope: int_0^h s exp(-D (h - s)) ds / h
    ramp = (D * h + np.expm1(-D * h)) / (D * D * np.where(h > 0, h, 1.0))
    path = np.empty(grid.size)
    path[0] = initial
    for k in range(h.size):
        path[k + 1] = (
            path[k] * decay[k]
            + (drive + left[k]) * gain[k]
            + (right[k] - left[k]) * ramp[k]
        )
    return path


def _observation_times(config: SimConfig, rng: np.random.Generator) -> FloatArray:
    n, horizon = config.n_observations, config.horizon
    if config.sampling is SamplingLaw.GRID:
        return np.linspace(0.0, horizon, n)
    if config.sampling is SamplingLaw.UNIFORM:
        return np.sort(rng.uniform(0.0, horizon, n))
    width = min(config.burst_width, horizon)
    starts = np.sort(rng.uniform(0.0, horizon - width, config.n_bursts))
    sizes = [len(chunk) for chunk in np.array_split(np.arange(n), config.n_bursts)]
    times = [start + rng.uniform(0.0, width, size) for start, size in zip(starts, sizes, strict=True)]
    return np.sort(np.concatenate(times))


def _sample_force(
    grid: FloatArray,
    treatment: SimTreatment,
    config: SimConfig,
    rng: np.random.Generator,
) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Force values on *grid* plus the left and right input value of each interval."""
    t_m = treatment.time
    support = np.unique(np.append(grid[grid > t_m], t_m))
    cov = force_covariance(support[:, None], support[None, :], t_m, treatment.ell)
    draw = rng.multivariate_normal(np.zeros(support.size), cov, method="eigh", check_valid="ignore")
    # continuous post-mark process, held at its mark value before the mark
    smooth = np.interp(np.maximum(grid, t_m), support, draw)
    on = grid >= t_m
    after = grid > t_m
    mean = config.force_mean
    if config.convention is ForceConvention.ZEROED:
        values = np.where(after, smooth + mean, 0.0)
        left = np.where(on, smooth + mean, 0.0)[:-1]
        right = values[1:]
    else:
        values = smooth + mean * after
        left = (smooth + mean * on)[:-1]
        right = values[1:]
    return values, left, right


def _baseline_sample(
    specs: tuple[KernelSpec, ...],
    times: FloatArray,
    rng: np.random.Generator,
) -> FloatArray:
    cov = np.zeros((times.size, times.size))
    for spec in specs:
        cov += spec.evaluate(times[:, None], times[None, :])
    return rng.multivariate_normal(np.zeros(times.size), cov, method="eigh", check_valid="ignore")


def simulate_patient(config: SimConfig) -> tuple[PatientRecord, GroundTruth]:
    """Sample one patient; deterministic given ``config.seed``.

    Observation times, forces, baseline paths and noise come from independent
    streams, so switching effects off leaves every other draw unchanged.
    """
    times_rng, force_rng, baseline_rng, noise_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(4)
    )
    times = {cov.name: _observation_times(config, times_rng) for cov in config.covariates}
    steps = math.ceil(config.horizon / config.resolution)
    marks = [t for t in config.marks if 0.0 <= t <= config.horizon]
    grid = np.unique(np.concatenate([np.linspace(0.0, config.horizon, steps + 1), *times.values(), marks]))

    n_admin = len(config.treatments)
    forces = np.zeros((n_admin, grid.size))
    inputs = []
    for m, treatment in enumerate(config.treatments):
        forces[m], left, right = _sample_force(grid, treatment, config, force_rng)
        inputs.append((left, right))

    effects = np.zeros((len(config.covariates), n_admin, grid.size))
    lfm = np.zeros((len(config.covariates), grid.size))
    covariates: dict[str, Series] = {}
    baselines: dict[str, FloatArray] = {}
    noiseless: dict[str, FloatArray] = {}
    for j, cov in enumerate(config.covariates):
        for m, (left, right) in enumerate(inputs):
            if cov.S[m] != 0:
                effects[j, m] = integrate_lfm(grid, cov.D, cov.S[m] * left, cov.S[m] * right)
        lfm[j] = cov.B / cov.D + effects[j].sum(axis=0)
        t_j = times[cov.name]
        baselines[cov.name] = _baseline_sample(cov.baseline, t_j, baseline_rng)
        noiseless[cov.name] = lfm[j][np.searchsorted(grid, t_j)] + baselines[cov.name]
        noise = noise_rng.normal(0.0, math.sqrt(cov.noise_var), t_j.size)
        covariates[cov.name] = Series(
            tuple(t_j.tolist()), tuple((noiseless[cov.name] + noise).tolist())
        )

    record = PatientRecord(
        patient_id=config.patient_id,
        covariates=covariates,
        treatments=tuple(
            TreatmentEvent(tr.time, tr.treatment_type, tr.dose, tr.route)
            for tr in config.treatments
        ),
    )
    truth = GroundTruth(
        patient_id=config.patient_id,
        grid=grid,
        forces=forces,
        effects=effects,
        lfm=lfm,
        times=times,
        baseline=baselines,
        noiseless=noiseless,
        config=config,
    )
    LOGGER.debug("simulated %s on a %d-node grid", config.patient_id, grid.size)
    return record, truth


# ── cohorts ──────────────────────────────────────────────────────────────


def _interval(value: object, name: str) -> tuple[float, float]:
    lo, hi = (float(v) for v in value)  # type: ignore[attr-defined]
    if not lo <= hi:
        msg = f"{name} must be an interval [low, high]; received {value!r}"
        raise ConfigError(msg)
    return lo, hi


@dataclass(frozen=True)
class CohortSimConfig:
    """Ranges from which :func:`sample_cohort` draws per-patient :class:`SimConfig`s.

    Effect sizes are drawn per (covariate, treatment type) with magnitude in
    ``effect_range`` and a random sign; force length-scales per type.
    """

    n_patients: int = 20
    covariates: tuple[str, ...] = ("sbp", "hr")
    n_observations: int = 60
    horizon: float = 48.0
    sampling: SamplingLaw = SamplingLaw.UNIFORM
    treatment_types: tuple[str, ...] = ("metoprolol-tartrate:25mg:oral",)
    treatments_per_patient: tuple[int, int] = (1, 2)
    # administrations fall in this fraction of the horizon
    treatment_window: tuple[float, float] = (0.2, 0.6)
    effect_range: tuple[float, float] = (3.0, 8.0)
    decay_range: tuple[float, float] = (0.2, 1.0)
    drive_range: tuple[float, float] = (-1.0, 1.0)
    force_ell_range: tuple[float, float] = (1.0, 4.0)
    se_sigma_range: tuple[float, float] = (0.5, 1.5)
    se_ell_range: tuple[float, float] = (4.0, 12.0)
    per_sigma_range: tuple[float, float] = (0.2, 0.8)
    noise_std_range: tuple[float, float] = (0.2, 0.5)
    period: float = 24.0
    resolution: float = 0.05
    convention: ForceConvention = ForceConvention.ZEROED
    force_mean: float = 0.0

    def __post_init__(self) -> None:
        if self.n_patients < 1 or not self.covariates or not self.treatment_types:
            msg = "a cohort needs >= 1 patient, covariate and treatment type"
            raise ConfigError(msg)
        lo, hi = self.treatments_per_patient
        if not 0 <= lo <= hi:
            msg = f"treatments_per_patient must satisfy 0 <= low <= high; received {(lo, hi)}"
            raise ConfigError(msg)
        for name in (
            "treatment_window",
            "effect_range",
            "decay_range",
            "drive_range",
            "force_ell_range",
            "se_sigma_range",
            "se_ell_range",
            "per_sigma_range",
            "noise_std_range",
        ):
            _interval(getattr(self, name), name)

    def to_dict(self) -> dict[str, object]:
        data: dict[str, object] = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            if isinstance(value, enum.Enum):
                value = value.value
            elif isinstance(value, tuple):
                value = list(value)
            data[name] = value
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> CohortSimConfig:
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            msg = f"unknown cohort key(s) {sorted(unknown)}"
            raise ConfigError(msg)
        kwargs: dict[str, Any] = {}
        for name, value in data.items():
            if name == "sampling":
                kwargs[name] = SamplingLaw(value)
            elif name == "convention":
                kwargs[name] = ForceConvention(value)
            elif isinstance(value, list):
                kwargs[name] = tuple(value)
            else:
                kwargs[name] = value
        return cls(**kwargs)


def _draw(rng: np.random.Generator, bounds: tuple[float, float]) -> float:
    return float(rng.uniform(*bounds))


def sample_cohort(config: CohortSimConfig, seed: int) -> list[SimConfig]:
    """Draw one :class:`SimConfig` per patient, deterministically from *seed*."""
    configs = []
    width = len(str(config.n_patients - 1))
    for index, child in enumerate(np.random.SeedSequence(seed).spawn(config.n_patients)):
        rng = np.random.default_rng(child)
        n_admin = int(rng.integers(config.treatments_per_patient[0], config.treatments_per_patient[1] + 1))
        window = [w * config.horizon for w in config.treatment_window]
        times = np.sort(rng.uniform(*window, n_admin))
        kinds = [config.treatment_types[int(k)] for k in rng.integers(len(config.treatment_types), size=n_admin)]
        ells = {kind: _draw(rng, config.force_ell_range) for kind in config.treatment_types}
        treatments = tuple(
            SimTreatment(kind, float(t), ells[kind]) for kind, t in zip(kinds, times, strict=True)
        )
        covariates = []
        for name in config.covariates:
            effects = {
                kind: float(rng.choice([-1.0, 1.0])) * _draw(rng, config.effect_range)
                for kind in config.treatment_types
            }
            baseline = (
                KernelSpec(KernelKind.SE, _draw(rng, config.se_sigma_range), _draw(rng, config.se_ell_range)),
                KernelSpec(
                    KernelKind.PERIODIC,
                    _draw(rng, config.per_sigma_range),
                    1.0,
                    period=config.period,
                ),
            )
            covariates.append(
                SimCovariate(
                    name=name,
                    B=_draw(rng, config.drive_range),
                    D=_draw(rng, config.decay_range),
                    S=tuple(effects[kind] for kind in kinds),
                    baseline=baseline,
                    noise_var=_draw(rng, config.noise_std_range) ** 2,
                )
            )
        configs.append(
            SimConfig(
                covariates=tuple(covariates),
                treatments=treatments,
                n_observations=config.n_observations,
                horizon=config.horizon,
                sampling=config.sampling,
                resolution=config.resolution,
                seed=int(child.generate_state(1)[0]),
                convention=config.convention,
                force_mean=config.force_mean,
                patient_id=f"sim-{index:0{width}d}",
            )
        )
    return configs


def simulate_cohort(
    configs: list[SimConfig],
) -> tuple[list[PatientRecord], list[GroundTruth]]:
    records, truths = [], []
    for config in configs:
        record, truth = simulate_patient(config)
        records.append(record)
        truths.append(truth)
    LOGGER.info("simulated %d patient(s)", len(records))
    return records, truths


def truth_document(truths: list[GroundTruth]) -> dict[str, object]:
    """The ``truth.json`` document: ground truth keyed by patient id."""
    return {"schema_version": 1, "patients": {t.patient_id: t.to_dict() for t in truths}}


def load_truth(data: Mapping[str, Any]) -> dict[str, GroundTruth]:
    return {pid: GroundTruth.from_dict(entry) for pid, entry in data["patients"].items()}
