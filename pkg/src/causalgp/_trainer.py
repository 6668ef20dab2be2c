"""Maximum marginal likelihood estimation of one patient's hyperparameters."""

from __future__ import annotations

import fnmatch
import logging
import math
import zlib
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import OptimizeResult, minimize

from causalgp._engine import (
    GpModel,
    baseline_matrix,
    effect_matrix,
    lfm_unit,
    log_marginal_likelihood,
    mean_vector,
    stable_cholesky,
)
from causalgp._errors import ConfigError, FitError, NumericalError
from causalgp._kernels import KernelKind, kernel_derivatives
from causalgp._lfm import ForceConvention
from causalgp._means import decay_profiles
from causalgp._params import (
    ModelFamily,
    ParamSchema,
    ParamVector,
    constrain,
    initial_vector,
    unconstrain,
)
from causalgp._records import PatientRecord
from causalgp._validate import require_positive

LOGGER = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

_LOG_2PI = math.log(2 * math.pi)
_FD_STEP = 1e-5

_KERNEL_KEYS = {
    KernelKind.SE: {"sigma": "sigma_se", "length_scale": "ell_se"},
    KernelKind.PERIODIC: {"sigma": "sigma_per", "length_scale": "ell_per", "period": "period"},
    KernelKind.OU: {"sigma": "sigma_ou", "length_scale": "ell_ou"},
}


@dataclass(frozen=True)
class OptimizerConfig:
    """L-BFGS-B settings; ``log_bound`` boxes each log coordinate around its start."""

    max_iter: int = 500
    gtol: float = 1e-3
    ftol: float = 1e-15
    restarts: int = 3
    log_bound: float = math.log(1e4)

    def __post_init__(self) -> None:
        if self.max_iter < 1 or self.restarts < 1:
            msg = f"max_iter and restarts must be >= 1; received {self.max_iter}, {self.restarts}"
            raise ConfigError(msg)
        for name in ("gtol", "ftol", "log_bound"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                msg = f"optimizer {name} must be > 0; received {value!r}"
                raise ConfigError(msg)

    def to_dict(self) -> dict[str, object]:
        return {
            "max_iter": self.max_iter,
            "gtol": self.gtol,
            "ftol": self.ftol,
            "restarts": self.restarts,
            "log_bound": self.log_bound,
        }


@dataclass(frozen=True)
class GaussianPrior:
    """Independent Gaussian priors on unconstrained coordinates.

    ``patterns`` maps a glob over parameter names to ``(mean, variance)``;
    the first matching pattern applies.  ``*`` and ``?`` are wildcards and
    brackets match literally, so ``"*/S[*]"`` covers every effect size.
    """

    patterns: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for pattern, (_, variance) in self.patterns.items():
            require_positive(variance, "variance", f"GaussianPrior[{pattern!r}]")

    def resolve(self, schema: ParamSchema) -> tuple[NDArray[np.bool_], FloatArray, FloatArray]:
        mask = np.zeros(schema.size, dtype=bool)
        means = np.zeros(schema.size)
        variances = np.ones(schema.size)
        for k, name in enumerate(schema.names):
            for pattern, (mean, variance) in self.patterns.items():
                if fnmatch.fnmatchcase(name, pattern.replace("[", "[[]")):
                    mask[k], means[k], variances[k] = True, mean, variance
                    break
        return mask, means, variances

    def penalty(self, vector: ParamVector) -> tuple[float, FloatArray]:
        """``sum (x - mean)**2 / (2 variance)`` and its gradient."""
        mask, means, variances = self.resolve(vector.schema)
        diff = np.where(mask, vector.values - means, 0.0)
        return float(np.sum(diff**2 / (2 * variances))), diff / variances


# ── objective ────────────────────────────────────────────────────────────


def _stacked(
    schema: ParamSchema,
    record: PatientRecord,
) -> tuple[NDArray[np.int64], FloatArray, FloatArray]:
    rows, times, values = [], [], []
    for j, name in enumerate(schema.covariates):
        t, y = record.covariates[name].arrays()
        rows.append(np.full(t.size, j, dtype=np.int64))
        times.append(t)
        values.append(y)
    return np.concatenate(rows), np.concatenate(times), np.concatenate(values)


def objective(
    vector: ParamVector,
    record: PatientRecord,
    prior: GaussianPrior | None = None,
) -> float:
    """Negative log marginal likelihood plus the prior penalty."""
    model = vector.model()
    value = -log_marginal_likelihood(model, record.observations(vector.schema.covariates))
    if prior is not None:
        value += prior.penalty(vector)[0]
    return value


def _lfm_matrix(
    model: GpModel,
    rows: NDArray[np.int64],
    t: FloatArray,
    admins: list[int],
) -> FloatArray:
    s = effect_matrix(model, rows)
    total = np.zeros((t.size, t.size))
    for m in admins:
        total += np.outer(s[m], s[m]) * lfm_unit(model, m, rows, t, rows, t)
    return total


def _fd_lfm(
    vector: ParamVector,
    k: int,
    rows: NDArray[np.int64],
    t: FloatArray,
    admins: list[int],
) -> FloatArray:
    """Central difference of the LFM covariance along unconstrained coordinate *k*."""
    step = _FD_STEP * max(1.0, abs(float(vector.values[k])))
    up, down = vector.values.copy(), vector.values.copy()
    up[k] += step
    down[k] -= step
    k_up = _lfm_matrix(vector.with_values(up).model(), rows, t, admins)
    k_down = _lfm_matrix(vector.with_values(down).model(), rows, t, admins)
    return (k_up - k_down) / (2 * step)


def _nll_and_gradient(
    vector: ParamVector,
    rows: NDArray[np.int64],
    t: FloatArray,
    y: FloatArray,
) -> tuple[float, FloatArray]:
    schema = vector.schema
    model = vector.model()
    n_admin = len(model.treatments)
    coupled = schema.family is ModelFamily.PROPOSED and n_admin > 0

    s = effect_matrix(model, rows)
    units = [lfm_unit(model, m, rows, t, rows, t) for m in range(n_admin)] if coupled else []
    K = baseline_matrix(model, rows, t, rows, t)
    for m, unit in enumerate(units):
        K += np.outer(s[m], s[m]) * unit
    noise = np.array([cov.noise_var for cov in model.covariates])[rows]
    factor = stable_cholesky(K + np.diag(noise), model.jitter)

    resid = y - mean_vector(model, rows, t)
    alpha = factor.solve(resid)
    nll = 0.5 * float(resid @ alpha) + 0.5 * factor.log_det() + 0.5 * y.size * _LOG_2PI
    # d nll = -alpha' d mu + 0.5 tr(W dK) with W = K^-1 - alpha alpha'
    W = factor.solve(np.eye(y.size)) - np.outer(alpha, alpha)
    grad = np.zeros(schema.size)

    for j, cov in enumerate(model.covariates):
        name = cov.name
        idx = np.flatnonzero(rows == j)
        t_j, a_j = t[idx], alpha[idx]
        W_jj = W[np.ix_(idx, idx)]
        for spec in cov.baseline:
            for key, dK in kernel_derivatives(spec, t_j, t_j).items():
                grad[schema.index(f"{name}/{_KERNEL_KEYS[spec.kind][key]}")] = 0.5 * np.sum(W_jj * dK)
        grad[schema.index(f"{name}/noise")] = cov.noise_var * np.trace(W_jj)

        if cov.decay is not None:
            profiles = decay_profiles(t_j, cov.decay, cov.lfm.t_marks)
            grad[schema.index(f"{name}/c")] = -a_j.sum()
            for k, kind in enumerate(schema.treatment_types):
                admins = [m for m, typ in enumerate(schema.admin_types) if typ == k]
                dmu_da = profiles[admins].sum(axis=0)
                elapsed = t_j[None, :] - np.array([cov.lfm.t_marks[m] for m in admins])[:, None]
                rate = cov.decay.gamma[admins[0]]
                amp = cov.decay.a[admins[0]]
                dmu_dlog_rate = -amp * rate * np.sum(elapsed * profiles[admins], axis=0)
                grad[schema.index(f"{name}/a[{kind}]")] = -a_j @ dmu_da
                grad[schema.index(f"{name}/gamma[{kind}]")] = -a_j @ dmu_dlog_rate
            continue

        grad[schema.index(f"{name}/B")] = -a_j.sum() / cov.lfm.D
        if not coupled:
            continue
        # mean B / D plus the LFM covariance, whose D-dependence is differenced
        k_d = schema.index(f"{name}/D")
        active = [m for m in range(n_admin) if np.any(s[m])]
        grad[k_d] = a_j.sum() * cov.lfm.B / cov.lfm.D
        if active:
            grad[k_d] += 0.5 * np.sum(W * _fd_lfm(vector, k_d, rows, t, active))
        for k, kind in enumerate(schema.treatment_types):
            total = 0.0
            for m, typ in enumerate(schema.admin_types):
                if typ == k:
                    total += float(np.sum(((W * units[m]) @ s[m])[idx]))
            grad[schema.index(f"{name}/S[{kind}]")] = total

    if coupled:
        for k, kind in enumerate(schema.treatment_types):
            admins = [m for m, typ in enumerate(schema.admin_types) if typ == k and np.any(s[m])]
            if admins:
                k_ell = schema.index(f"ell[{kind}]")
                grad[k_ell] = 0.5 * np.sum(W * _fd_lfm(vector, k_ell, rows, t, admins))
    return nll, grad


def nll_and_gradient(
    vector: ParamVector,
    record: PatientRecord,
    prior: GaussianPrior | None = None,
) -> tuple[float, FloatArray]:
    """Negative log marginal likelihood (plus prior penalty) and its gradient.

    The gradient is in unconstrained coordinates.  It is analytic except for
    the LFM covariance's dependence on ``D`` and the force length-scales,
    which is central-differenced at the matrix level.
    """
    rows, t, y = _stacked(vector.schema, record)
    try:
        value, grad = _nll_and_gradient(vector, rows, t, y)
    except NumericalError as err:
        msg = f"objective failed: {err}"
        raise NumericalError(msg, diagnostics={**err.diagnostics, "params": constrain(vector)}) from err
    if prior is not None:
        penalty, dpenalty = prior.penalty(vector)
        value += penalty
        grad = grad + dpenalty
    return value, grad


def numerical_gradient(
    vector: ParamVector,
    record: PatientRecord,
    prior: GaussianPrior | None = None,
) -> FloatArray:
    """Central differences of :func:`objective` with step ``1e-5 * max(1, |x_k|)``."""
    grad = np.empty(vector.schema.size)
    for k, x_k in enumerate(vector.values):
        step = _FD_STEP * max(1.0, abs(float(x_k)))
        up, down = vector.values.copy(), vector.values.copy()
        up[k] += step
        down[k] -= step
        grad[k] = (
            objective(vector.with_values(up), record, prior)
            - objective(vector.with_values(down), record, prior)
        ) / (2 * step)
    return grad


# ── fitting ──────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class RestartTrace:
    block: str
    index: int
    initial_objective: float
    final_objective: float
    objectives: tuple[float, ...] = ()
    n_iterations: int = 0
    converged: bool = False
    message: str = ""
    error: str | None = None

    def to_dict(self) -> dict[str, object]:
        return {
            "block": self.block,
            "index": self.index,
            "initial_objective": self.initial_objective,
            "final_objective": self.final_objective,
            "objectives": list(self.objectives),
            "n_iterations": self.n_iterations,
            "converged": self.converged,
            "message": self.message,
            "error": self.error,
        }


@dataclass(frozen=True, eq=False)
class FitResult:
    """Best model over restarts.

    Covariates that share no force are fitted as separate blocks; then
    ``best_restart`` has one entry per covariate and ``objective`` is the
    sum over blocks.
    """

    model: GpModel
    vector: ParamVector
    objective: float
    best_restart: dict[str, int]
    traces: tuple[RestartTrace, ...]

    @property
    def params(self) -> dict[str, float]:
        return constrain(self.vector)


def _restart(
    schema: ParamSchema,
    record: PatientRecord,
    start: FloatArray,
    bounds: list[tuple[float | None, float | None]],
    config: OptimizerConfig,
    prior: GaussianPrior | None,
    block: str,
    index: int,
) -> tuple[RestartTrace, FloatArray]:
    def fun(x: FloatArray) -> tuple[float, FloatArray]:
        return nll_and_gradient(ParamVector(np.asarray(x, dtype=float), schema), record, prior)

    try:
        f0, _ = fun(start)
    except NumericalError as err:
        LOGGER.debug("%s restart %d failed at its start: %s", block, index, err)
        return RestartTrace(block, index, math.nan, math.nan, error=str(err)), start

    objectives: list[float] = []

    def callback(intermediate_result: OptimizeResult) -> None:
        objectives.append(float(intermediate_result.fun))

    LOGGER.debug("%s restart %d: start objective %.6g", block, index, f0)
    try:
        result = minimize(
            fun,
            start,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            callback=callback,
            options={"maxiter": config.max_iter, "gtol": config.gtol, "ftol": config.ftol},
        )
    except NumericalError as err:
        LOGGER.debug("%s restart %d failed: %s", block, index, err)
        trace = RestartTrace(block, index, f0, math.nan, tuple(objectives), error=str(err))
        return trace, start

    x, final = np.asarray(result.x, dtype=float), float(result.fun)
    if not final <= f0:
        x, final = start, f0
    trace = RestartTrace(
        block=block,
        index=index,
        initial_objective=f0,
        final_objective=final,
        objectives=tuple(objectives),
        n_iterations=int(result.nit),
        converged=bool(result.success),
        message=str(result.message),
    )
    LOGGER.debug("%s restart %d: final objective %.6g (%s)", block, index, final, trace.message)
    return trace, x


def _fit_block(
    schema: ParamSchema,
    record: PatientRecord,
    config: OptimizerConfig,
    prior: GaussianPrior | None,
    restarts: int,
    seed: int,
    block: str,
) -> tuple[ParamVector, float, int, list[RestartTrace]]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(block.encode())]))
    x0 = initial_vector(schema).values
    bounds: list[tuple[float | None, float | None]] = [
        (x - config.log_bound, x + config.log_bound) if entry.positive else (None, None)
        for x, entry in zip(x0, schema.entries, strict=True)
    ]
    # effect sizes start at 0, a saddle of the likelihood; later restarts perturb them
    jittered = np.array(["/S[" in n or "/a[" in n for n in schema.names], dtype=bool)

    traces: list[RestartTrace] = []
    best: tuple[float, int, FloatArray] | None = None
    for index in range(restarts):
        start = x0.copy()
        if index > 0:
            start[jittered] += rng.standard_normal(int(jittered.sum()))
        trace, x = _restart(schema, record, start, bounds, config, prior, block, index)
        traces.append(trace)
        if trace.error is None and (best is None or trace.final_objective < best[0]):
            best = (trace.final_objective, index, x)

    if best is None:
        msg = f"all {restarts} restart(s) failed for {record.patient_id}/{block}"
        raise FitError(msg, diagnostics={"restarts": [t.to_dict() for t in traces]})
    final, index, x = best
    return ParamVector(x, schema), final, index, traces


def fit_patient(
    record: PatientRecord,
    config: OptimizerConfig | None = None,
    prior: GaussianPrior | None = None,
    *,
    restarts: int | None = None,
    seed: int = 0,
    family: ModelFamily | str = ModelFamily.PROPOSED,
    convention: ForceConvention = ForceConvention.UNZEROED,
    jitter: float = 1e-8,
) -> FitResult:
    """Fit one patient by restarted L-BFGS-B on the (penalised) negative log likelihood.

    The lowest final objective wins, ties going to the lowest restart index.
    Deterministic given *seed*.
    """
    config = config or OptimizerConfig()
    restarts = config.restarts if restarts is None else restarts
    if restarts < 1:
        msg = f"restarts must be >= 1; received {restarts}"
        raise ConfigError(msg)
    schema = ParamSchema.from_record(record, family, convention=convention, jitter=jitter)

    if schema.independent:
        blocks = [(name, schema.block(name), record.select([name])) for name in schema.covariates]
    else:
        blocks = [("joint", schema, record)]

    params: dict[str, float] = {}
    traces: list[RestartTrace] = []
    best_restart: dict[str, int] = {}
    total = 0.0
    for label, sub_schema, sub_record in blocks:
        vector, final, index, block_traces = _fit_block(
            sub_schema, sub_record, config, prior, restarts, seed, label
        )
        params.update(constrain(vector))
        traces += block_traces
        best_restart[label] = index
        total += final

    vector = unconstrain(params, schema)
    LOGGER.info(
        "fitted %s (%s): objective %.6g, best restart %s",
        record.patient_id,
        schema.family.value,
        total,
        best_restart,
    )
    return FitResult(
        model=vector.model(),
        vector=vector,
        objective=total,
        best_restart=best_restart,
        traces=tuple(traces),
    )
