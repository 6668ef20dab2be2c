"""Joint GP over all covariates of one patient: assembly, likelihood, posteriors.

The observed process of covariate ``j`` is the baseline GP (SE + periodic)
plus the LFM output driven by the treatment forces, plus i.i.d. noise.  Only
the LFM part couples covariates, through forces they share.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from causalgp._errors import ConsistencyError, InputError, NumericalError, ParameterDomainError
from causalgp._kernels import KernelSpec
from causalgp._lfm import (
    ForceConvention,
    LfmParams,
    cross_cov_unit,
    force_covariance,
    output_cov_unit,
)
from causalgp._means import ExpDecayMean, decay_profiles
from causalgp._validate import as_finite_times, require_positive

LOGGER = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]
IntArray = NDArray[np.int64]

# a per-covariate (times, values) pair, ordered as GpModel.covariates
Observations = Sequence[tuple[ArrayLike, ArrayLike]]

_MAX_JITTER = 1e-4
_FIRST_JITTER = 1e-8
_VARIANCE_SLACK = 1e-10


@dataclass(frozen=True)
class Treatment:
    """One administration: its type, mark time and the (type-shared) force length-scale."""

    treatment_type: str
    mark_time: float
    ell: float

    def __post_init__(self) -> None:
        require_positive(self.ell, "ell", f"Treatment({self.treatment_type})")


@dataclass(frozen=True)
class CovariateModel:
    """Baseline kernels, dynamics and noise of one covariate.

    When ``decay`` is set the mean is the exponential-decay curve instead of
    ``B / D``; this is how the OU+Exp baseline is expressed.
    """

    name: str
    baseline: tuple[KernelSpec, ...]
    lfm: LfmParams
    noise_var: float
    decay: ExpDecayMean | None = None

    def __post_init__(self) -> None:
        require_positive(self.noise_var, "noise_var", f"CovariateModel({self.name})")

    def mean(self, t: FloatArray) -> FloatArray:
        if self.decay is None:
            return np.full(t.shape, self.lfm.B / self.lfm.D)
        profiles = decay_profiles(t, self.decay, self.lfm.t_marks)
        return self.decay.c + np.asarray(self.decay.a) @ profiles

    def baseline_cov(self, t: ArrayLike, t2: ArrayLike) -> FloatArray:
        t = np.asarray(t, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        total = np.zeros(np.broadcast(t, t2).shape)
        for spec in self.baseline:
            total = total + spec.evaluate(t, t2)
        return total

    def to_dict(self) -> dict[str, object]:
        data: dict[str, object] = {
            "name": self.name,
            "baseline": [spec.to_dict() for spec in self.baseline],
            "lfm": {
                "B": self.lfm.B,
                "D": self.lfm.D,
                "S": list(self.lfm.S),
                "ell": list(self.lfm.ell),
                "t_marks": list(self.lfm.t_marks),
            },
            "noise_var": self.noise_var,
        }
        if self.decay is not None:
            data["decay"] = self.decay.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> CovariateModel:
        lfm = dict(data["lfm"])  # type: ignore[call-overload]
        decay = data.get("decay")
        return cls(
            name=str(data["name"]),
            baseline=tuple(KernelSpec.from_dict(s) for s in data["baseline"]),  # type: ignore[attr-defined]
            lfm=LfmParams(
                B=float(lfm["B"]),
                D=float(lfm["D"]),
                S=tuple(lfm["S"]),
                ell=tuple(lfm["ell"]),
                t_marks=tuple(lfm["t_marks"]),
            ),
            noise_var=float(data["noise_var"]),  # type: ignore[arg-type]
            decay=None if decay is None else ExpDecayMean.from_dict(decay),  # type: ignore[arg-type]
        )


@dataclass(frozen=True)
class GpModel:
    """The joint model of one patient."""

    covariates: tuple[CovariateModel, ...]
    treatments: tuple[Treatment, ...] = ()
    jitter: float = 1e-8
    convention: ForceConvention = ForceConvention.UNZEROED

    def __post_init__(self) -> None:
        require_positive(self.jitter, "jitter", "GpModel")
        if not self.covariates:
            msg = "GpModel requires at least one covariate"
            raise ParameterDomainError(msg)
        ells = tuple(tr.ell for tr in self.treatments)
        marks = tuple(tr.mark_time for tr in self.treatments)
        for cov in self.covariates:
            if cov.lfm.n_treatments != len(self.treatments):
                msg = (
                    f"covariate {cov.name!r} has {cov.lfm.n_treatments} effect sizes "
                    f"for {len(self.treatments)} treatments"
                )
                raise ConsistencyError(msg)
            if cov.lfm.ell != ells or cov.lfm.t_marks != marks:
                msg = f"covariate {cov.name!r} disagrees with the model's treatment forces"
                raise ConsistencyError(msg)

    @property
    def names(self) -> list[str]:
        return [cov.name for cov in self.covariates]

    def covariate_index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            msg = f"unknown covariate {name!r}; model has {self.names}"
            raise InputError(msg) from None

    def to_dict(self) -> dict[str, object]:
        return {
            "covariates": [cov.to_dict() for cov in self.covariates],
            "treatments": [
                {"treatment_type": tr.treatment_type, "mark_time": tr.mark_time, "ell": tr.ell}
                for tr in self.treatments
            ],
            "jitter": self.jitter,
            "convention": self.convention.value,
        }

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> GpModel:
        return cls(
            covariates=tuple(CovariateModel.from_dict(c) for c in data["covariates"]),  # type: ignore[attr-defined]
            treatments=tuple(Treatment(**t) for t in data.get("treatments", ())),  # type: ignore[attr-defined]
            jitter=float(data.get("jitter", 1e-8)),  # type: ignore[arg-type]
            convention=ForceConvention(data.get("convention", "unzeroed")),
        )


@dataclass(frozen=True, eq=False)
class Posterior:
    """Predictive mean and variance at ``times``."""

    times: FloatArray
    mean: FloatArray
    variance: FloatArray


@dataclass(frozen=True, eq=False)
class ForcePosterior:
    """Posterior of one latent force plus its induced effect on each covariate."""

    force: Posterior
    effects: dict[str, FloatArray] = field(default_factory=dict)


# ── stacking and assembly ────────────────────────────────────────────────


def stack(
    model: GpModel,
    observations: Observations,
) -> tuple[IntArray, FloatArray, FloatArray]:
    """Concatenate per-covariate observations into (covariate rows, times, values)."""
    if len(observations) != len(model.covariates):
        msg = (
            f"expected observations for {len(model.covariates)} covariates; "
            f"received {len(observations)}"
        )
        raise InputError(msg)
    rows, times, values = [], [], []
    for j, (t, y) in enumerate(observations):
        name = model.covariates[j].name
        t_arr = as_finite_times(t, f"{name} times")
        y_arr = as_finite_times(y, f"{name} values")
        if t_arr.size != y_arr.size:
            msg = f"{name}: {t_arr.size} times but {y_arr.size} values"
            raise InputError(msg)
        rows.append(np.full(t_arr.size, j, dtype=np.int64))
        times.append(t_arr)
        values.append(y_arr)
    return np.concatenate(rows), np.concatenate(times), np.concatenate(values)


def _require_origin(model: GpModel, times: FloatArray) -> None:
    if model.treatments and times.size and float(times.min()) < 0:
        msg = f"times must be >= 0 (the LFM starts at time 0); received {times.min()!r}"
        raise ParameterDomainError(msg)


def mean_vector(model: GpModel, rows: IntArray, times: FloatArray) -> FloatArray:
    mu = np.empty(times.shape)
    for j, cov in enumerate(model.covariates):
        sel = rows == j
        mu[sel] = cov.mean(times[sel])
    return mu


def effect_matrix(model: GpModel, rows: IntArray) -> FloatArray:
    """``S[m, i]``: effect size of treatment *m* on the covariate of row *i*."""
    s_by_cov = np.array([cov.lfm.S for cov in model.covariates], dtype=float)
    return s_by_cov.reshape(len(model.covariates), len(model.treatments))[rows].T


def lfm_unit(
    model: GpModel,
    m: int,
    rows_a: IntArray,
    t_a: FloatArray,
    rows_b: IntArray,
    t_b: FloatArray,
    *,
    outer: bool = True,
) -> FloatArray:
    """Unit-effect output covariance through the force of administration *m*."""
    decays = np.array([cov.lfm.D for cov in model.covariates])
    da, db = decays[rows_a], decays[rows_b]
    if outer:
        t_a, t_b, da, db = t_a[:, None], t_b[None, :], da[:, None], db[None, :]
    tr = model.treatments[m]
    return output_cov_unit(t_a, t_b, tr.mark_time, tr.ell, da, db, model.convention)


def baseline_matrix(
    model: GpModel,
    rows_a: IntArray,
    t_a: FloatArray,
    rows_b: IntArray,
    t_b: FloatArray,
    *,
    outer: bool = True,
) -> FloatArray:
    if outer:
        t_a, t_b, rows_a, rows_b = t_a[:, None], t_b[None, :], rows_a[:, None], rows_b[None, :]
    total = np.zeros(np.broadcast(t_a, t_b).shape)
    for j, cov in enumerate(model.covariates):
        same = (rows_a == j) & (rows_b == j)
        if np.any(same):
            total = total + np.where(same, cov.baseline_cov(t_a, t_b), 0.0)
    return total


def prior_cov(
    model: GpModel,
    rows_a: IntArray,
    t_a: FloatArray,
    rows_b: IntArray,
    t_b: FloatArray,
    *,
    outer: bool = True,
) -> FloatArray:
    """Noise-free prior covariance between two sets of (covariate, time) points."""
    total = baseline_matrix(model, rows_a, t_a, rows_b, t_b, outer=outer)
    if not model.treatments:
        return total
    s_a, s_b = effect_matrix(model, rows_a), effect_matrix(model, rows_b)
    for m in range(len(model.treatments)):
        coupling = np.outer(s_a[m], s_b[m]) if outer else s_a[m] * s_b[m]
        if not np.any(coupling):
            continue
        unit = lfm_unit(model, m, rows_a, t_a, rows_b, t_b, outer=outer)
        total = total + coupling * unit
    return total


@dataclass(frozen=True, eq=False)
class Factor:
    """Lower Cholesky factor of ``K`` and the diagonal loading that made it succeed."""

    lower: FloatArray
    matrix: FloatArray
    jitter: float

    def solve(self, b: ArrayLike) -> FloatArray:
        return cho_solve((self.lower, True), b)

    def log_det(self) -> float:
        return float(2.0 * np.sum(np.log(np.diag(self.lower))))


def stable_cholesky(K: FloatArray, jitter: float) -> Factor:
    """Cholesky of ``K + jitter I``, escalating the loading on failure.

    Extra loading starts at ``1e-8 * max(diag K)`` and grows tenfold up to
    ``1e-4 * max(diag K)``.
    """
    if not np.all(np.isfinite(K)):
        msg = "covariance matrix contains NaN or infinite entries"
        raise NumericalError(msg, diagnostics={"jitter": jitter})
    n = K.shape[0]
    scale = max(float(np.max(np.diag(K))), np.finfo(float).tiny) if n else 1.0
    extra = 0.0
    tried: list[float] = []
    eye = np.eye(n)
    while True:
        loading = jitter + extra
        try:
            lower = cholesky(K + loading * eye, lower=True)
        except LinAlgError:
            tried.append(loading)
            extra = _FIRST_JITTER * scale if extra == 0.0 else extra * 10
            if extra > _MAX_JITTER * scale * (1 + 1e-9):
                msg = "covariance is not positive definite after jitter escalation"
                raise NumericalError(
                    msg,
                    diagnostics={"jitter_tried": tried, "max_diagonal": scale, "size": n},
                ) from None
            LOGGER.debug("Cholesky failed; retrying with extra jitter %.3g", extra)
            continue
        return Factor(lower=lower, matrix=K + loading * eye, jitter=loading)


def _factorize(model: GpModel, rows: IntArray, times: FloatArray) -> Factor:
    K = prior_cov(model, rows, times, rows, times)
    noise = np.array([cov.noise_var for cov in model.covariates])[rows]
    return stable_cholesky(K + np.diag(noise), model.jitter)


# ── public operations ────────────────────────────────────────────────────


def assemble_covariance(model: GpModel, times: Sequence[ArrayLike]) -> FloatArray:
    """Joint covariance (noise and jitter included) over all covariates' times."""
    rows, t, _ = stack(model, [(ti, np.zeros(np.size(ti))) for ti in times])
    _require_origin(model, t)
    return _factorize(model, rows, t).matrix


def log_marginal_likelihood(model: GpModel, observations: Observations) -> float:
    """Exact log marginal likelihood of the observations under *model*."""
    rows, t, y = stack(model, observations)
    if not y.size:
        msg = "log_marginal_likelihood requires at least one observation"
        raise InputError(msg)
    _require_origin(model, t)
    factor = _factorize(model, rows, t)
    resid = y - mean_vector(model, rows, t)
    alpha = factor.solve(resid)
    return float(
        -0.5 * resid @ alpha - 0.5 * factor.log_det() - 0.5 * y.size * math.log(2 * math.pi)
    )


def _clamp_variance(var: FloatArray, prior: FloatArray) -> FloatArray:
    slack = _VARIANCE_SLACK * max(1.0, float(np.max(prior, initial=0.0)))
    if np.any(var < -slack):
        worst = float(var.min())
        msg = f"posterior variance {worst:.3g} is negative beyond tolerance"
        raise NumericalError(msg, diagnostics={"min_variance": worst, "slack": slack})
    return np.maximum(var, 0.0)


def _condition(
    model: GpModel,
    train: Observations,
) -> tuple[IntArray, FloatArray, Factor, FloatArray]:
    rows, t, y = stack(model, train)
    if not y.size:
        msg = "conditioning requires at least one training observation"
        raise InputError(msg)
    _require_origin(model, t)
    factor = _factorize(model, rows, t)
    alpha = factor.solve(y - mean_vector(model, rows, t))
    return rows, t, factor, alpha


def posterior_predict(
    model: GpModel,
    train: Observations,
    covariate: int | str,
    query_times: ArrayLike,
    *,
    include_noise: bool = False,
) -> Posterior:
    """Posterior of one covariate at *query_times* given all training observations.

    The variance is that of the latent process unless *include_noise* is set,
    in which case the observation noise of the covariate is added.
    """
    j = covariate if isinstance(covariate, int) else model.covariate_index(covariate)
    rows, t, factor, alpha = _condition(model, train)
    tq = as_finite_times(query_times, "query_times")
    _require_origin(model, tq)
    rq = np.full(tq.size, j, dtype=np.int64)
    cross = prior_cov(model, rows, t, rq, tq)
    prior = prior_cov(model, rq, tq, rq, tq, outer=False)
    mean = mean_vector(model, rq, tq) + cross.T @ alpha
    v = solve_triangular(factor.lower, cross, lower=True)
    var = _clamp_variance(prior - np.sum(v * v, axis=0), prior)
    if include_noise:
        var = var + model.covariates[j].noise_var
    return Posterior(times=tq, mean=mean, variance=var)


def posterior_latent_force(
    model: GpModel,
    train: Observations,
    m: int,
    query_times: ArrayLike,
) -> ForcePosterior:
    """Posterior of the force of treatment *m* and of its effect on every covariate."""
    if not 0 <= m < len(model.treatments):
        msg = f"treatment index {m} out of range for {len(model.treatments)} treatments"
        raise ParameterDomainError(msg)
    tr = model.treatments[m]
    rows, t, factor, alpha = _condition(model, train)
    tq = as_finite_times(query_times, "query_times")
    _require_origin(model, tq)
    decays = np.array([cov.lfm.D for cov in model.covariates])
    s = effect_matrix(model, rows)[m]
    cross = s[:, None] * cross_cov_unit(
        t[:, None], tq[None, :], tr.mark_time, tr.ell, decays[rows][:, None], model.convention
    )
    prior = force_covariance(tq, tq, tr.mark_time, tr.ell, model.convention)
    v = solve_triangular(factor.lower, cross, lower=True)
    force = Posterior(
        times=tq,
        mean=cross.T @ alpha,
        variance=_clamp_variance(prior - np.sum(v * v, axis=0), prior),
    )
    effects: dict[str, FloatArray] = {}
    for j, cov in enumerate(model.covariates):
        unit = output_cov_unit(
            tq[:, None],
            t[None, :],
            tr.mark_time,
            tr.ell,
            cov.lfm.D,
            decays[rows][None, :],
            model.convention,
        )
        effects[cov.name] = (cov.lfm.S[m] * unit * s[None, :]) @ alpha
    return ForcePosterior(force=force, effects=effects)
