"""The two comparison models.

``se-per``
    SE + periodic baseline kernel with a learned constant mean, fitted per
    covariate with the treatments dropped.
``ou-exp``
    OU kernel with an exponential-decay treatment mean; amplitude and decay
    are tied per treatment type.
"""

from __future__ import annotations

import enum

from causalgp._lfm import ForceConvention
from causalgp._means import ExpDecayMean, exp_decay_mean
from causalgp._params import ModelFamily
from causalgp._records import PatientRecord
from causalgp._trainer import FitResult, GaussianPrior, OptimizerConfig, fit_patient

__all__ = ["BaselineKind", "ExpDecayMean", "exp_decay_mean", "fit_baseline"]


class BaselineKind(enum.Enum):
    SE_PER = "se-per"
    OU_EXP = "ou-exp"

    @property
    def family(self) -> ModelFamily:
        return ModelFamily(self.value)


def fit_baseline(
    kind: BaselineKind | str,
    record: PatientRecord,
    config: OptimizerConfig | None = None,
    prior: GaussianPrior | None = None,
    *,
    restarts: int | None = None,
    seed: int = 0,
    jitter: float = 1e-8,
) -> FitResult:
    """Fit a comparison model; each covariate is an independent block."""
    family = BaselineKind(kind).family
    return fit_patient(
        record,
        config,
        prior,
        restarts=restarts,
        seed=seed,
        family=family,
        # baselines carry no latent force, so the convention has no effect
        convention=ForceConvention.UNZEROED,
        jitter=jitter,
    )
