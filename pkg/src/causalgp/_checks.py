"""Self-checks run from the command line: closed forms against quadrature and
analytic gradients against finite differences."""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from causalgp._errors import InputError, NumericalError
from causalgp._kernels import KernelKind, KernelSpec
from causalgp._lfm import ForceConvention, LfmParams, cov_output_output, cross_cov_force_output
from causalgp._params import ModelFamily, ParamSchema, initial_vector
from causalgp._quadrature import quadrature_cov_output, quadrature_cross_cov
from causalgp._sim import SimConfig, SimCovariate, SimTreatment, simulate_patient
from causalgp._trainer import nll_and_gradient, numerical_gradient

LOGGER = logging.getLogger(__name__)

# position of (t, t2) relative to the mark
ORDERINGS = ("pre-pre", "pre-post", "post-pre", "post-post")

CrossCov = Callable[[float, float, int, LfmParams, ForceConvention], float]
OutputCov = Callable[[float, float, LfmParams, LfmParams, Sequence[int], ForceConvention], float]


# ── closed forms against quadrature ──────────────────────────────────────


@dataclass(frozen=True)
class OracleCase:
    index: int
    quantity: str
    convention: str
    ordering: str
    inputs: dict[str, float]
    closed: float | None
    quadrature: float | None
    tolerance: float
    error: str | None = None

    @property
    def deviation(self) -> float | None:
        if self.closed is None or self.quadrature is None:
            return None
        return abs(self.closed - self.quadrature)

    @property
    def passed(self) -> bool:
        deviation = self.deviation
        return self.error is None and deviation is not None and deviation <= self.tolerance

    def to_dict(self) -> dict[str, object]:
        return {
            "index": self.index,
            "quantity": self.quantity,
            "convention": self.convention,
            "ordering": self.ordering,
            "inputs": dict(self.inputs),
            "closed": self.closed,
            "quadrature": self.quadrature,
            "deviation": self.deviation,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "error": self.error,
        }


@dataclass(frozen=True)
class OracleReport:
    cases: tuple[OracleCase, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cases)

    @property
    def failures(self) -> list[OracleCase]:
        return [c for c in self.cases if not c.passed]

    def max_deviation(self) -> dict[str, float]:
        """Largest deviation per ``quantity/convention/ordering``."""
        worst: dict[str, float] = {}
        for case in self.cases:
            if case.deviation is None:
                continue
            key = f"{case.quantity}/{case.convention}/{case.ordering}"
            worst[key] = max(worst.get(key, 0.0), case.deviation)
        return dict(sorted(worst.items()))

    def to_dict(self) -> dict[str, object]:
        return {
            "passed": self.passed,
            "n_cases": len(self.cases),
            "n_failed": len(self.failures),
            "max_deviation": self.max_deviation(),
            "failures": [c.to_dict() for c in self.failures],
        }


def _side(rng: np.random.Generator, t_m: float, *, post: bool) -> float:
    if post:
        return t_m + float(rng.uniform(0.0, 5.0))
    return float(rng.uniform(0.0, t_m))


def _compare(
    index: int,
    quantity: str,
    convention: ForceConvention,
    ordering: str,
    inputs: dict[str, float],
    closed: Callable[[], float],
    quadrature: Callable[[], float],
    tolerance: float,
) -> OracleCase:
    try:
        value = float(closed())
        reference = float(quadrature())
    except NumericalError as err:
        return OracleCase(
            index, quantity, convention.value, ordering, inputs, None, None, tolerance, str(err)
        )
    return OracleCase(
        index, quantity, convention.value, ordering, inputs, value, reference, tolerance
    )


def oracle_check(
    n: int,
    seed: int,
    *,
    conventions: Sequence[ForceConvention] = tuple(ForceConvention),
    effect_range: tuple[float, float] = (-5.0, 5.0),
    cross_tol: float = 1e-6,
    output_tol: float = 1e-5,
    cross_cov: CrossCov = cross_cov_force_output,
    cov_output: OutputCov = cov_output_output,
) -> OracleReport:
    """Compare the closed-form covariances with numerical integration.

    Case *i* uses ordering ``ORDERINGS[i % 4]``, so the four orderings are
    covered evenly.  Each case is checked under every convention.
    """
    if n < 1:
        msg = f"oracle_check needs n >= 1; received {n}"
        raise InputError(msg)
    rng = np.random.default_rng(seed)
    cases: list[OracleCase] = []
    for index in range(n):
        ordering = ORDERINGS[index % len(ORDERINGS)]
        t_m = float(rng.uniform(0.5, 5.0))
        ell = float(rng.uniform(0.5, 3.0))
        d_a, d_b = (float(d) for d in rng.uniform(0.2, 2.0, 2))
        s_a, s_b = (float(s) for s in rng.uniform(*effect_range, 2))
        t = _side(rng, t_m, post=ordering.startswith("post"))
        t2 = _side(rng, t_m, post=ordering.endswith("post"))
        params_a = LfmParams(B=0.0, D=d_a, S=(s_a,), ell=(ell,), t_marks=(t_m,))
        params_b = LfmParams(B=0.0, D=d_b, S=(s_b,), ell=(ell,), t_marks=(t_m,))
        inputs = {"t": t, "t2": t2, "t_m": t_m, "ell": ell, "D_a": d_a, "D_b": d_b, "S_a": s_a, "S_b": s_b}
        for convention in conventions:
            cases.append(
                _compare(
                    index,
                    "cross",
                    convention,
                    ordering,
                    inputs,
                    lambda c=convention: cross_cov(t, t2, 0, params_a, c),
                    lambda c=convention: quadrature_cross_cov(t, t2, 0, params_a, convention=c),
                    cross_tol,
                )
            )
            cases.append(
                _compare(
                    index,
                    "output",
                    convention,
                    ordering,
                    inputs,
                    lambda c=convention: cov_output(t, t2, params_a, params_b, [0], c),
                    lambda c=convention: quadrature_cov_output(
                        t, t2, params_a, params_b, [0], convention=c
                    ),
                    output_tol,
                )
            )
    report = OracleReport(tuple(cases))
    LOGGER.info(
        "oracle check: %d case(s), %d failed", len(report.cases), len(report.failures)
    )
    return report


# ── analytic gradient against central differences ────────────────────────


@dataclass(frozen=True)
class GradcheckCase:
    index: int
    family: str
    analytic: dict[str, float]
    numeric: dict[str, float]
    rel_tol: float
    abs_tol: float

    def excess(self) -> dict[str, float]:
        """Per-parameter error over its allowance; 1 is the pass limit."""
        return {
            name: abs(self.analytic[name] - num) / max(self.abs_tol, self.rel_tol * abs(num))
            for name, num in self.numeric.items()
        }

    @property
    def passed(self) -> bool:
        return all(v <= 1.0 for v in self.excess().values())

    def to_dict(self) -> dict[str, object]:
        excess = self.excess()
        worst = max(excess, key=excess.__getitem__) if excess else None
        return {
            "index": self.index,
            "family": self.family,
            "passed": self.passed,
            "worst_parameter": worst,
            "worst_excess": excess[worst] if worst else 0.0,
            "analytic": dict(self.analytic),
            "numeric": dict(self.numeric),
        }


@dataclass(frozen=True)
class GradcheckReport:
    cases: tuple[GradcheckCase, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.cases)

    def to_dict(self) -> dict[str, object]:
        return {
            "passed": self.passed,
            "n_cases": len(self.cases),
            "n_failed": sum(not c.passed for c in self.cases),
            "cases": [c.to_dict() for c in self.cases],
        }


_FAMILIES = (ModelFamily.PROPOSED, ModelFamily.PROPOSED, ModelFamily.OU_EXP, ModelFamily.SE_PER)


def _problem(rng: np.random.Generator, n_observations: int, convention: ForceConvention) -> SimConfig:
    n_admin = int(rng.integers(1, 3))
    ell = float(rng.uniform(1.0, 3.0))
    treatments = tuple(
        SimTreatment("drug:1:oral", float(t), ell) for t in np.sort(rng.uniform(2.0, 6.0, n_admin))
    )
    covariates = tuple(
        SimCovariate(
            name=name,
            B=float(rng.uniform(-1.0, 1.0)),
            D=float(rng.uniform(0.3, 1.0)),
            S=(float(rng.uniform(-3.0, 3.0)),) * n_admin,
            baseline=(
                KernelSpec(KernelKind.SE, float(rng.uniform(0.5, 1.5)), float(rng.uniform(2.0, 5.0))),
                KernelSpec(KernelKind.PERIODIC, 0.3, 1.0, period=24.0),
            ),
            noise_var=0.01,
        )
        for name in ("a", "b")
    )
    return SimConfig(
        covariates=covariates,
        treatments=treatments,
        n_observations=n_observations,
        horizon=10.0,
        resolution=0.02,
        seed=int(rng.integers(2**31)),
        convention=convention,
    )


def gradcheck(
    n: int,
    seed: int,
    *,
    n_observations: int = 10,
    rel_tol: float = 1e-4,
    abs_tol: float = 1e-6,
    convention: ForceConvention = ForceConvention.UNZEROED,
) -> GradcheckReport:
    """Check the trainer gradient on *n* random parameter vectors of small simulated problems."""
    if n < 1:
        msg = f"gradcheck needs n >= 1; received {n}"
        raise InputError(msg)
    cases = []
    for index in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([seed, index]))
        record, _ = simulate_patient(_problem(rng, n_observations, convention))
        family = _FAMILIES[index % len(_FAMILIES)]
        schema = ParamSchema.from_record(record, family, convention=convention)
        start = initial_vector(schema)
        vector = start.with_values(start.values + rng.normal(0.0, 0.3, schema.size))
        _, analytic = nll_and_gradient(vector, record)
        numeric = numerical_gradient(vector, record)
        cases.append(
            GradcheckCase(
                index=index,
                family=family.value,
                analytic=dict(zip(schema.names, analytic.tolist(), strict=True)),
                numeric=dict(zip(schema.names, numeric.tolist(), strict=True)),
                rel_tol=rel_tol,
                abs_tol=abs_tol,
            )
        )
        LOGGER.debug("gradcheck case %d (%s): passed=%s", index, family.value, cases[-1].passed)
    report = GradcheckReport(tuple(cases))
    LOGGER.info("gradcheck: %d case(s), %d failed", n, sum(not c.passed for c in cases))
    return report
