"""causalgp: treatment effects on clinical time series with causal latent force models."""

from importlib import metadata as _metadata

from causalgp._baselines import BaselineKind, fit_baseline
from causalgp._checks import GradcheckReport, OracleReport, gradcheck, oracle_check
from causalgp._cohort import (
    AttritionStep,
    FilterCriteria,
    cohort_filter,
    denormalize,
    normalize,
    rebase_times,
    split_train_test,
)
from causalgp._config import (
    AcceptanceThresholds,
    ExperimentConfig,
    config_from_dict,
    load_config,
)
from causalgp._engine import (
    CovariateModel,
    ForcePosterior,
    GpModel,
    Posterior,
    Treatment,
    assemble_covariance,
    log_marginal_likelihood,
    posterior_latent_force,
    posterior_predict,
)
from causalgp._errors import (
    CausalGPError,
    ConfigError,
    ConsistencyError,
    FitError,
    InputError,
    NumericalError,
    ParameterDomainError,
    ParseError,
    ValidationError,
)
from causalgp._evaluate import (
    EvalReport,
    acceptance_verdict,
    comparison,
    mae,
    prepare,
    run_experiment,
    run_methods,
)
from causalgp._io import from_jsons, load_json, load_records, save_records, to_jsons, write_json
from causalgp._kernels import (
    KernelKind,
    KernelSpec,
    causal_force_kernel,
    gram,
    ou_kernel,
    periodic_kernel,
    se_kernel,
)
from causalgp._lfm import (
    ForceConvention,
    LfmParams,
    cov_output_output,
    cross_cov_force_output,
    lfm_mean,
)
from causalgp._means import ExpDecayMean, exp_decay_mean
from causalgp._params import ModelFamily, ParamSchema, ParamVector, constrain, unconstrain
from causalgp._quadrature import quadrature_cov_output, quadrature_cross_cov
from causalgp._records import PatientRecord, Route, Series, TreatmentEvent
from causalgp._sim import (
    CohortSimConfig,
    GroundTruth,
    SamplingLaw,
    SimConfig,
    SimCovariate,
    SimTreatment,
    sample_cohort,
    simulate_cohort,
    simulate_patient,
)
from causalgp._trainer import FitResult, GaussianPrior, OptimizerConfig, fit_patient, nll_and_gradient

__version__ = _metadata.version("causalgp")

__all__ = [
    "AcceptanceThresholds",
    "AttritionStep",
    "BaselineKind",
    "CausalGPError",
    "CohortSimConfig",
    "ConfigError",
    "ConsistencyError",
    "CovariateModel",
    "EvalReport",
    "ExpDecayMean",
    "ExperimentConfig",
    "FilterCriteria",
    "FitError",
    "FitResult",
    "ForceConvention",
    "ForcePosterior",
    "GaussianPrior",
    "GpModel",
    "GradcheckReport",
    "GroundTruth",
    "InputError",
    "KernelKind",
    "KernelSpec",
    "LfmParams",
    "ModelFamily",
    "NumericalError",
    "OptimizerConfig",
    "OracleReport",
    "ParamSchema",
    "ParamVector",
    "ParameterDomainError",
    "ParseError",
    "PatientRecord",
    "Posterior",
    "Route",
    "SamplingLaw",
    "Series",
    "SimConfig",
    "SimCovariate",
    "SimTreatment",
    "Treatment",
    "TreatmentEvent",
    "ValidationError",
    "__version__",
    "acceptance_verdict",
    "assemble_covariance",
    "causal_force_kernel",
    "cohort_filter",
    "comparison",
    "config_from_dict",
    "constrain",
    "cov_output_output",
    "cross_cov_force_output",
    "denormalize",
    "exp_decay_mean",
    "fit_baseline",
    "fit_patient",
    "from_jsons",
    "gradcheck",
    "gram",
    "lfm_mean",
    "load_config",
    "load_json",
    "load_records",
    "log_marginal_likelihood",
    "mae",
    "nll_and_gradient",
    "normalize",
    "oracle_check",
    "ou_kernel",
    "periodic_kernel",
    "posterior_latent_force",
    "posterior_predict",
    "prepare",
    "quadrature_cov_output",
    "quadrature_cross_cov",
    "rebase_times",
    "run_experiment",
    "run_methods",
    "sample_cohort",
    "save_records",
    "se_kernel",
    "simulate_cohort",
    "simulate_patient",
    "split_train_test",
    "to_jsons",
    "unconstrain",
    "write_json",
]
