"""Experiment protocol: per-patient fit and forecast, MAE reports and trajectories.

Each patient is rebased to start at time 0, normalised, split into its first
70% (training) and last 30% (testing) observations per covariate, fitted on
the training part and scored by the mean absolute error of the predictive
mean at the test times, in the covariate's original units.
"""

from __future__ import annotations

import logging
import math
import pathlib
import re
import time
import zlib
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Any, TypeVar, cast

import joblib
import numpy as np
import pandas as pd
from numpy.typing import ArrayLike

from causalgp._baselines import fit_baseline
from causalgp._cohort import (
    AttritionStep,
    cohort_filter,
    denormalize,
    normalize,
    rebase_times,
    split_train_test,
)
from causalgp._config import AcceptanceThresholds, ExperimentConfig, resolve_methods
from causalgp._engine import GpModel, posterior_latent_force, posterior_predict
from causalgp._errors import CausalGPError, InputError
from causalgp._io import finite_or_none, load_records, read_document, write_document
from causalgp._records import PatientRecord, Series
from causalgp._sim import EFFECT_WINDOW, GroundTruth, load_truth
from causalgp._trainer import FitResult, fit_patient

LOGGER = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TRAJECTORY_COLUMNS = ("kind", "covariate", "time_hours", "mean", "variance", "observed", "split")
GRID_POINTS = 200
# posterior effects are averaged over this many points of the effect window
_WINDOW_POINTS = 64

_T = TypeVar("_T")
_R = TypeVar("_R")


def mae(predictions: ArrayLike, actuals: ArrayLike) -> float:
    """Mean absolute error."""
    pred = np.asarray(predictions, dtype=float)
    actual = np.asarray(actuals, dtype=float)
    if pred.ndim != 1 or pred.shape != actual.shape:
        msg = f"predictions {pred.shape} and actuals {actual.shape} must be equal-length sequences"
        raise InputError(msg)
    if not pred.size:
        msg = "mae needs at least one prediction"
        raise InputError(msg)
    return float(np.mean(np.abs(pred - actual)))


def patient_seed(seed: int, patient_id: str) -> int:
    """Per-patient seed; independent of the order patients are processed in."""
    sequence = np.random.SeedSequence([seed, zlib.crc32(patient_id.encode("utf-8"))])
    return int(sequence.generate_state(1)[0])


# ── preprocessing ────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Prepared:
    """A rebased, normalised record with what is needed to undo both."""

    record: PatientRecord
    origin: float
    means: dict[str, float]


def prepare(record: PatientRecord) -> Prepared:
    record = record.select([n for n, s in record.covariates.items() if len(s)])
    rebased, origin = rebase_times(record)
    normalised, means = normalize(rebased)
    return Prepared(normalised, origin, means)


def apply_preparation(record: PatientRecord, origin: float, means: Mapping[str, float]) -> PatientRecord:
    """Shift and centre *record* with a stored origin and stored means."""
    covariates = {
        name: Series(
            tuple(t - origin for t in s.times),
            tuple(v - means[name] for v in s.values),
        )
        for name, s in record.covariates.items()
        if name in means
    }
    treatments = tuple(replace(e, time=e.time - origin) for e in record.treatments)
    return replace(record, covariates=covariates, treatments=treatments)


def fit_method(
    method: str,
    record: PatientRecord,
    config: ExperimentConfig,
    seed: int,
) -> FitResult:
    if method == "proposed":
        return fit_patient(
            record,
            config.optimizer,
            config.prior,
            seed=seed,
            convention=config.force_convention,
            jitter=config.jitter,
        )
    return fit_baseline(
        method,
        record,
        config.optimizer,
        config.prior,
        seed=seed,
        jitter=config.jitter,
    )


# ── trajectories ─────────────────────────────────────────────────────────


def trajectory_frame(
    model: GpModel,
    train: PatientRecord,
    test: PatientRecord | None,
    origin: float,
    means: Mapping[str, float],
    *,
    treatments: Iterable[tuple[str, float]] = (),
    include_noise: bool = False,
    n_grid: int = GRID_POINTS,
) -> pd.DataFrame:
    """Plot-ready rows: predictions at observed times and on a regular grid.

    Times and values are in the original units.  ``treatments`` holds
    ``(treatment_type, rebased time)`` pairs written as ``treatment`` rows.
    """
    observations = train.observations(model.names)
    rows: list[dict[str, object]] = []
    for name in model.names:
        parts = [("train", *train.covariates[name].arrays())]
        if test is not None and name in test.covariates:
            parts.append(("test", *test.covariates[name].arrays()))
        observed_t = np.concatenate([p[1] for p in parts])
        end = float(observed_t.max()) if observed_t.size else 1.0
        grid = np.linspace(0.0, end, n_grid)
        post = posterior_predict(
            model,
            observations,
            name,
            np.concatenate([observed_t, grid]),
            include_noise=include_noise,
        )
        mean = denormalize(post.mean, means[name])
        k = 0
        for split, times, values in parts:
            for t, y in zip(times, denormalize(values, means[name]), strict=True):
                rows.append(
                    {
                        "kind": "prediction",
                        "covariate": name,
                        "time_hours": t + origin,
                        "mean": mean[k],
                        "variance": post.variance[k],
                        "observed": y,
                        "split": split,
                    }
                )
                k += 1
        rows.extend(
            {
                "kind": "prediction",
                "covariate": name,
                "time_hours": t + origin,
                "mean": mean[k + i],
                "variance": post.variance[k + i],
                "observed": math.nan,
                "split": "grid",
            }
            for i, t in enumerate(grid)
        )
    rows.extend(
        {
            "kind": "treatment",
            "covariate": kind,
            "time_hours": t + origin,
            "mean": math.nan,
            "variance": math.nan,
            "observed": math.nan,
            "split": "",
        }
        for kind, t in treatments
    )
    return pd.DataFrame(rows, columns=list(TRAJECTORY_COLUMNS))


def _safe_name(patient_id: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", patient_id)


# ── sign recovery ────────────────────────────────────────────────────────


@dataclass(frozen=True)
class SignScore:
    patient_id: str
    covariate: str
    treatment_type: str
    truth: int
    fitted: int

    @property
    def matched(self) -> bool:
        return self.truth == self.fitted

    def to_dict(self) -> dict[str, object]:
        return {
            "patient_id": self.patient_id,
            "covariate": self.covariate,
            "treatment_type": self.treatment_type,
            "truth": self.truth,
            "fitted": self.fitted,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SignScore:
        return cls(
            str(data["patient_id"]),
            str(data["covariate"]),
            str(data["treatment_type"]),
            int(data["truth"]),
            int(data["fitted"]),
        )


def score_signs(
    model: GpModel,
    train: PatientRecord,
    truth: GroundTruth,
) -> list[SignScore]:
    """Compare the sign of each fitted treatment effect with the simulated one.

    A covariate's response to a treatment type is the posterior mean effect
    of its forces averaged over ``(t_m, t_m + EFFECT_WINDOW * ell_m]`` and
    summed over administrations.  Unlike ``S`` alone this does not depend on
    the arbitrary sign of the latent force.
    """
    observations = train.observations(model.names)
    totals: dict[tuple[str, str], float] = {}
    for m, tr in enumerate(model.treatments):
        end = tr.mark_time + EFFECT_WINDOW * tr.ell
        if end <= 0:
            continue
        query = np.linspace(max(tr.mark_time, 0.0), end, _WINDOW_POINTS + 1)[1:]
        posterior = posterior_latent_force(model, observations, m, query)
        for name, effect in posterior.effects.items():
            key = (name, tr.treatment_type)
            totals[key] = totals.get(key, 0.0) + float(np.mean(effect))
    expected = truth.effect_signs()
    scores = []
    for (name, kind), total in totals.items():
        sign = expected.get(name, {}).get(kind, 0)
        if sign:
            scores.append(SignScore(truth.patient_id, name, kind, sign, int(np.sign(total))))
    return scores


# ── per-patient evaluation ───────────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class PatientResult:
    patient_id: str
    error: str | None = None
    mae: dict[str, float] = field(default_factory=dict)
    n_test: dict[str, int] = field(default_factory=dict)
    objective: float | None = None
    best_restart: dict[str, int] = field(default_factory=dict)
    signs: tuple[SignScore, ...] = ()
    trajectory: pd.DataFrame | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict[str, object]:
        return {
            "patient_id": self.patient_id,
            "status": "ok" if self.ok else "failed",
            "error": self.error,
            "mae": {k: finite_or_none(v) for k, v in sorted(self.mae.items())},
            "n_test": dict(sorted(self.n_test.items())),
            "objective": None if self.objective is None else finite_or_none(self.objective),
            "best_restart": dict(sorted(self.best_restart.items())),
            "signs": [s.to_dict() for s in self.signs],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> PatientResult:
        return cls(
            patient_id=str(data["patient_id"]),
            error=data.get("error"),
            mae={k: float(v) for k, v in data.get("mae", {}).items() if v is not None},
            n_test={k: int(v) for k, v in data.get("n_test", {}).items()},
            objective=data.get("objective"),
            best_restart={k: int(v) for k, v in data.get("best_restart", {}).items()},
            signs=tuple(SignScore.from_dict(s) for s in data.get("signs", ())),
        )


def _evaluate(
    record: PatientRecord,
    method: str,
    config: ExperimentConfig,
    seed: int,
    truth: GroundTruth | None,
) -> PatientResult:
    prepared = prepare(record)
    train, test = split_train_test(prepared.record, config.train_fraction)
    usable = [n for n, s in train.covariates.items() if len(s)]
    if not usable:
        msg = f"{record.patient_id}: no covariate has training observations"
        raise InputError(msg)
    if len(usable) < len(train.covariates):
        LOGGER.warning("%s: covariates without training data dropped", record.patient_id)
    train, test = train.select(usable), test.select(usable)

    fit = fit_method(method, train, config, seed)
    observations = train.observations(fit.model.names)
    errors: dict[str, float] = {}
    counts: dict[str, int] = {}
    for name in fit.model.names:
        times, values = test.covariates[name].arrays()
        if not times.size:
            continue
        post = posterior_predict(
            fit.model, observations, name, times, include_noise=config.predictive_noise
        )
        mean = prepared.means[name]
        errors[name] = mae(denormalize(post.mean, mean), denormalize(values, mean))
        counts[name] = int(times.size)

    signs = score_signs(fit.model, train, truth) if truth is not None else []
    trajectory = trajectory_frame(
        fit.model,
        train,
        test,
        prepared.origin,
        prepared.means,
        treatments=[(e.treatment_type, e.time) for e in prepared.record.treatments],
        include_noise=config.predictive_noise,
    )
    return PatientResult(
        patient_id=record.patient_id,
        mae=errors,
        n_test=counts,
        objective=fit.objective,
        best_restart=fit.best_restart,
        signs=tuple(signs),
        trajectory=trajectory,
    )


def evaluate_patient(
    record: PatientRecord,
    method: str,
    config: ExperimentConfig,
    seed: int,
    truth: GroundTruth | None = None,
) -> PatientResult:
    """Run the protocol for one patient; failures are returned, not raised."""
    try:
        return _evaluate(record, method, config, seed, truth)
    except CausalGPError as err:
        LOGGER.warning("%s excluded (%s): %s", record.patient_id, method, err)
        return PatientResult(record.patient_id, error=f"{type(err).__name__}: {err}")


def _evaluate_task(
    task: tuple[PatientRecord, str, ExperimentConfig, int, GroundTruth | None],
) -> PatientResult:
    return evaluate_patient(*task)


def parallel_map(func: Callable[[_T], _R], items: Sequence[_T], workers: int) -> list[_R]:
    """Order-preserving map, over loky worker processes when *workers* > 1."""
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    par = joblib.Parallel(n_jobs=min(workers, len(items)), backend="loky")
    return list(par(joblib.delayed(func)(item) for item in items))


# ── reports ──────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class CovariateSummary:
    """Mean MAE over patients; ``se`` is undefined (``None``) for one patient."""

    mae: float
    se: float | None
    n: int

    def to_dict(self) -> dict[str, object]:
        se = None if self.se is None else finite_or_none(self.se)
        return {"mae": finite_or_none(self.mae), "se": se, "n": self.n}


def summarise(results: Iterable[PatientResult]) -> dict[str, CovariateSummary]:
    by_covariate: dict[str, list[float]] = {}
    for result in results:
        if result.ok:
            for name, value in result.mae.items():
                by_covariate.setdefault(name, []).append(value)
    summary = {}
    for name in sorted(by_covariate):
        values = np.array(by_covariate[name])
        se = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else None
        summary[name] = CovariateSummary(float(values.mean()), se, int(values.size))
    return summary


@dataclass(frozen=True, eq=False)
class EvalReport:
    method: str
    seed: int
    config_hash: str
    covariates: dict[str, CovariateSummary]
    patients: tuple[PatientResult, ...]
    attrition: tuple[AttritionStep, ...] = ()
    schema_version: int = SCHEMA_VERSION

    @property
    def n_failed(self) -> int:
        return sum(not p.ok for p in self.patients)

    @property
    def sign_scores(self) -> list[SignScore]:
        return [s for p in self.patients for s in p.signs]

    def sign_recovery(self, min_rate: float | None = None) -> dict[str, object] | None:
        """Matched and total effect signs; with *min_rate*, also whether the rate reaches it."""
        scores = self.sign_scores
        if not scores:
            return None
        matched = sum(s.matched for s in scores)
        recovery: dict[str, object] = {
            "matched": matched,
            "total": len(scores),
            "rate": matched / len(scores),
        }
        if min_rate is not None:
            recovery["min_rate"] = min_rate
            recovery["passed"] = matched >= _required(min_rate, len(scores))
        return recovery

    def to_dict(self) -> dict[str, object]:
        return {
            "schema_version": self.schema_version,
            "method": self.method,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "n_patients": len(self.patients),
            "n_failed": self.n_failed,
            "failures": [
                {"patient_id": p.patient_id, "error": p.error} for p in self.patients if not p.ok
            ],
            "covariates": {k: v.to_dict() for k, v in self.covariates.items()},
            "patients": [p.to_dict() for p in self.patients],
            "attrition": [a.to_dict() for a in self.attrition],
            "sign_recovery": self.sign_recovery(),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> EvalReport:
        patients = tuple(PatientResult.from_dict(p) for p in data["patients"])
        return cls(
            method=str(data["method"]),
            seed=int(data["seed"]),
            config_hash=str(data["config_hash"]),
            covariates=summarise(patients),
            patients=patients,
            attrition=tuple(
                AttritionStep(
                    a["filter"], a["records_in"], a["records_out"], a["events_in"], a["events_out"]
                )
                for a in data.get("attrition", ())
            ),
            schema_version=int(data.get("schema_version", SCHEMA_VERSION)),
        )


# ── datasets ─────────────────────────────────────────────────────────────


def dataset_file(path: str | pathlib.Path) -> pathlib.Path:
    """The records file of *path*, which may be a file or a directory."""
    path = pathlib.Path(path)
    if path.is_dir():
        for name in ("records.json", "records.csv"):
            if (path / name).is_file():
                return path / name
        msg = f"{str(path)!r} holds neither records.json nor records.csv"
        raise InputError(msg)
    if not path.is_file():
        msg = f"dataset {str(path)!r} does not exist"
        raise InputError(msg)
    return path


def find_truth(path: str | pathlib.Path) -> dict[str, GroundTruth]:
    """Ground truth written by ``simulate`` next to the dataset, if any."""
    path = pathlib.Path(path)
    folder = path if path.is_dir() else path.parent
    candidate = folder / "truth.json"
    if not candidate.is_file():
        return {}
    return load_truth(read_document(candidate))


def load_dataset(path: str | pathlib.Path) -> list[PatientRecord]:
    return load_records(dataset_file(path))


# ── experiments ──────────────────────────────────────────────────────────


def write_report(
    report: EvalReport,
    out_dir: str | pathlib.Path,
    *,
    wall_time: float | None = None,
) -> pathlib.Path:
    """Write ``report.json``, ``timing.json`` and one trajectory CSV per patient."""
    folder = pathlib.Path(out_dir) / report.method
    trajectories = folder / "trajectories"
    trajectories.mkdir(parents=True, exist_ok=True)
    write_document(report.to_dict(), folder / "report.json")
    if wall_time is not None:
        write_document({"wall_time_seconds": wall_time}, folder / "timing.json")
    for patient in report.patients:
        if patient.trajectory is not None:
            patient.trajectory.to_csv(
                trajectories / f"{_safe_name(patient.patient_id)}.csv", index=False
            )
    LOGGER.info("wrote %s report to %s", report.method, folder)
    return folder


def run_experiment(
    dataset: str | pathlib.Path,
    method: str,
    config: ExperimentConfig,
    out_dir: str | pathlib.Path,
    *,
    truth: Mapping[str, GroundTruth] | None = None,
) -> EvalReport:
    """Evaluate *method* on every patient of *dataset* that survives the filters.

    Sign recovery is scored for the proposed method when ground truth is
    passed or found next to the dataset.
    """
    (method,) = resolve_methods([method])
    records, attrition = cohort_filter(load_dataset(dataset), config.filters)
    records.sort(key=lambda r: r.patient_id)
    if truth is None:
        truth = find_truth(dataset)
    tasks = [
        (
            record,
            method,
            config,
            patient_seed(config.seed, record.patient_id),
            truth.get(record.patient_id) if method == "proposed" else None,
        )
        for record in records
    ]
    start = time.perf_counter()
    results = parallel_map(_evaluate_task, tasks, config.workers)
    elapsed = time.perf_counter() - start

    report = EvalReport(
        method=method,
        seed=config.seed,
        config_hash=config.config_hash(),
        covariates=summarise(results),
        patients=tuple(results),
        attrition=tuple(attrition),
    )
    if report.n_failed:
        LOGGER.warning("%d of %d patient(s) failed", report.n_failed, len(results))
    write_report(report, out_dir, wall_time=elapsed)
    return report


def _required(fraction: float, total: int) -> int:
    return math.ceil(fraction * total - 1e-9)


def comparison(
    reports: Mapping[str, EvalReport],
    thresholds: AcceptanceThresholds | None = None,
) -> dict[str, object]:
    """Per-covariate win counts of ``proposed`` against every other method.

    A win is a patient, fitted by both methods, with a strictly lower test MAE.
    Baselines named in ``thresholds.min_win_fraction`` also get ``required``
    and ``passed`` on every covariate entry.
    """
    proposed = {p.patient_id: p for p in reports["proposed"].patients if p.ok}
    baselines: dict[str, object] = {}
    for method, report in sorted(reports.items()):
        if method == "proposed":
            continue
        table: dict[str, dict[str, Any]] = {}
        for other in report.patients:
            mine = proposed.get(other.patient_id)
            if mine is None or not other.ok:
                continue
            for name, value in other.mae.items():
                if name not in mine.mae:
                    continue
                entry = table.setdefault(name, {"wins": 0, "paired": 0})
                entry["paired"] += 1
                entry["wins"] += int(mine.mae[name] < value)
        fraction = None if thresholds is None else thresholds.min_win_fraction.get(method)
        if fraction is not None:
            for entry in table.values():
                entry["required"] = _required(fraction, entry["paired"])
                entry["passed"] = entry["wins"] >= entry["required"]
        baselines[method] = dict(sorted(table.items()))
    first = reports["proposed"]
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": first.seed,
        "config_hash": first.config_hash,
        "baselines": baselines,
    }


def acceptance_verdict(
    reports: Mapping[str, EvalReport],
    thresholds: AcceptanceThresholds,
) -> dict[str, object]:
    """Check a run against *thresholds*.

    Sign recovery is gated on ``proposed`` and fails when no ground truth was
    scored. Win fractions are gated for every baseline that was run.
    """
    if "proposed" not in reports:
        msg = "acceptance thresholds need the proposed method in the run"
        raise InputError(msg)
    failed: list[str] = []
    recovery = None
    if thresholds.min_sign_rate is not None:
        recovery = reports["proposed"].sign_recovery(thresholds.min_sign_rate)
        if recovery is None:
            failed.append("sign recovery: no ground truth")
        elif not recovery["passed"]:
            failed.append(f"sign recovery {recovery['matched']}/{recovery['total']}")
    table = comparison(reports, thresholds)
    baselines = cast("dict[str, dict[str, dict[str, Any]]]", table["baselines"])
    for method, covariates in baselines.items():
        for name, entry in covariates.items():
            if entry.get("passed") is False:
                failed.append(f"{name} vs {method} {entry['wins']}/{entry['paired']}")
    return {
        "schema_version": SCHEMA_VERSION,
        "config_hash": reports["proposed"].config_hash,
        "thresholds": thresholds.to_dict(),
        "sign_recovery": recovery,
        "baselines": baselines,
        "failed": failed,
        "passed": not failed,
    }


def run_methods(
    dataset: str | pathlib.Path,
    config: ExperimentConfig,
    out_dir: str | pathlib.Path,
) -> dict[str, EvalReport]:
    """Run every configured method.

    Writes ``comparison.json`` when ``proposed`` has company, and
    ``acceptance.json`` when the configuration sets acceptance thresholds.
    """
    reports = {
        method: run_experiment(dataset, method, config, out_dir) for method in config.methods
    }
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if "proposed" in reports and len(reports) > 1:
        write_document(comparison(reports, config.acceptance), out / "comparison.json")
    if config.acceptance is not None:
        verdict = acceptance_verdict(reports, config.acceptance)
        write_document(verdict, out / "acceptance.json")
        if not verdict["passed"]:
            LOGGER.warning("acceptance failed: %s", "; ".join(cast("list[str]", verdict["failed"])))
    return reports


# ── fit / predict verbs ──────────────────────────────────────────────────


def _json_safe(value: object) -> object:
    if isinstance(value, float):
        return finite_or_none(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, list | tuple):
        return [_json_safe(v) for v in value]
    return value


def _fit_entry(task: tuple[PatientRecord, str, ExperimentConfig, int]) -> dict[str, object]:
    record, method, config, seed = task
    try:
        prepared = prepare(record)
        fit = fit_method(method, prepared.record, config, seed)
    except CausalGPError as err:
        LOGGER.warning("%s: fit failed: %s", record.patient_id, err)
        return {"patient_id": record.patient_id, "error": f"{type(err).__name__}: {err}"}
    return {
        "patient_id": record.patient_id,
        "error": None,
        "origin": prepared.origin,
        "means": prepared.means,
        "model": fit.model.to_dict(),
        "params": fit.params,
        "objective": fit.objective,
        "best_restart": fit.best_restart,
        "traces": [t.to_dict() for t in fit.traces],
    }


def fit_records(
    records: Sequence[PatientRecord],
    method: str,
    config: ExperimentConfig,
) -> dict[str, object]:
    """Fit every record on all of its observations; the document behind ``fit.json``."""
    (method,) = resolve_methods([method])
    ordered = sorted(records, key=lambda r: r.patient_id)
    tasks = [(r, method, config, patient_seed(config.seed, r.patient_id)) for r in ordered]
    entries = parallel_map(_fit_entry, tasks, config.workers)
    return {
        "schema_version": SCHEMA_VERSION,
        "method": method,
        "seed": config.seed,
        "config_hash": config.config_hash(),
        "patients": _json_safe(entries),
    }


def predict_records(
    records: Sequence[PatientRecord],
    fitted: Mapping[str, Any],
    *,
    include_noise: bool = False,
    n_grid: int = GRID_POINTS,
) -> dict[str, pd.DataFrame]:
    """Trajectories of every record with a successful entry in a ``fit.json`` document."""
    entries = {e["patient_id"]: e for e in fitted["patients"] if e.get("error") is None}
    frames = {}
    for record in records:
        entry = entries.get(record.patient_id)
        if entry is None:
            LOGGER.warning("%s: no fitted model; skipped", record.patient_id)
            continue
        model = GpModel.from_dict(entry["model"])
        origin, means = float(entry["origin"]), entry["means"]
        shifted = apply_preparation(record, origin, means)
        frames[record.patient_id] = trajectory_frame(
            model,
            shifted.select(model.names),
            None,
            origin,
            means,
            treatments=[(e.treatment_type, e.time) for e in shifted.treatments],
            include_noise=include_noise,
            n_grid=n_grid,
        )
    return frames


def write_trajectories(frames: Mapping[str, pd.DataFrame], out_dir: str | pathlib.Path) -> None:
    folder = pathlib.Path(out_dir) / "trajectories"
    folder.mkdir(parents=True, exist_ok=True)
    for patient_id, frame in frames.items():
        frame.to_csv(folder / f"{_safe_name(patient_id)}.csv", index=False)
    LOGGER.info("wrote %d trajectory file(s) to %s", len(frames), folder)
