"""Experiment configuration files (YAML or JSON).

A complete file, every key optional::

    seed: 0
    workers: 1
    train_fraction: 0.7
    force_convention: unzeroed      # or zeroed
    predictive_noise: false
    jitter: 1.0e-8
    methods: [proposed]             # proposed, se-per, ou-exp or all
    optimizer: {max_iter: 500, gtol: 1.0e-3, ftol: 1.0e-15, restarts: 3, log_bound: 9.21}
    prior:                          # glob over parameter names -> [mean, variance]
      "*/S[*]": [0.0, 100.0]
    filters: {exclude_classes: [], drug_classes: {}, allowed_treatment_types: null,
              min_treatment_count: 0, require_treatment: false,
              min_observations: 0, covariates: []}
    sim: {...}                      # CohortSimConfig fields, or a list of SimConfigs
    acceptance:                     # gate for the evaluate verb, absent by default
      min_sign_rate: 0.9
      min_win_fraction: {se-per: 0.75, ou-exp: 0.6}
"""

from __future__ import annotations

import hashlib
import json
import pathlib
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import Any

import yaml

from causalgp._cohort import FilterCriteria
from causalgp._errors import ConfigError
from causalgp._lfm import ForceConvention
from causalgp._sim import CohortSimConfig, SimConfig
from causalgp._trainer import GaussianPrior, OptimizerConfig

METHODS = ("proposed", "se-per", "ou-exp")

_TOP_KEYS = {
    "seed",
    "workers",
    "train_fraction",
    "force_convention",
    "predictive_noise",
    "jitter",
    "methods",
    "optimizer",
    "prior",
    "filters",
    "sim",
    "acceptance",
}


def resolve_methods(methods: str | list[str] | tuple[str, ...]) -> tuple[str, ...]:
    """Expand ``all`` and reject unknown method names."""
    names = [methods] if isinstance(methods, str) else list(methods)
    if "all" in names:
        return METHODS
    unknown = [n for n in names if n not in METHODS]
    if unknown or not names:
        msg = f"methods must be drawn from {list(METHODS)} or 'all'; received {names}"
        raise ConfigError(msg)
    return tuple(dict.fromkeys(names))


@dataclass(frozen=True)
class AcceptanceThresholds:
    """Pass marks for an evaluation run.

    ``min_sign_rate`` applies to the recovered effect signs of ``proposed``.
    ``min_win_fraction`` maps a baseline to the share of paired patients in
    which ``proposed`` must have the strictly lower test MAE, per covariate.
    """

    min_sign_rate: float | None = 0.9
    min_win_fraction: dict[str, float] = field(
        default_factory=lambda: {"se-per": 0.75, "ou-exp": 0.6}
    )

    def __post_init__(self) -> None:
        problems = []
        if self.min_sign_rate is not None and not 0 <= self.min_sign_rate <= 1:
            problems.append(
                f"acceptance.min_sign_rate must lie in [0, 1]; received {self.min_sign_rate!r}"
            )
        for method, fraction in self.min_win_fraction.items():
            if method not in METHODS or method == "proposed":
                problems.append(f"acceptance.min_win_fraction has no baseline {method!r}")
            elif not 0 <= fraction <= 1:
                problems.append(
                    f"acceptance.min_win_fraction.{method} must lie in [0, 1]; "
                    f"received {fraction!r}"
                )
        if problems:
            msg = "; ".join(problems)
            raise ConfigError(msg)

    def to_dict(self) -> dict[str, object]:
        return {
            "min_sign_rate": self.min_sign_rate,
            "min_win_fraction": dict(self.min_win_fraction),
        }


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    workers: int = 1
    train_fraction: float = 0.7
    force_convention: ForceConvention = ForceConvention.UNZEROED
    predictive_noise: bool = False
    jitter: float = 1e-8
    methods: tuple[str, ...] = ("proposed",)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    prior: GaussianPrior = field(default_factory=GaussianPrior)
    filters: FilterCriteria = field(default_factory=FilterCriteria)
    sim: CohortSimConfig | tuple[SimConfig, ...] | None = None
    acceptance: AcceptanceThresholds | None = None

    def __post_init__(self) -> None:
        if self.workers < 1:
            msg = f"workers must be >= 1; received {self.workers}"
            raise ConfigError(msg)
        if not 0 < self.train_fraction < 1:
            msg = f"train_fraction must lie in (0, 1); received {self.train_fraction!r}"
            raise ConfigError(msg)
        if not self.jitter > 0:
            msg = f"jitter must be > 0; received {self.jitter!r}"
            raise ConfigError(msg)
        resolve_methods(self.methods)

    def with_overrides(
        self,
        *,
        seed: int | None = None,
        force_convention: ForceConvention | str | None = None,
        methods: str | None = None,
    ) -> ExperimentConfig:
        """Apply command-line overrides; ``None`` keeps the configured value."""
        changes: dict[str, Any] = {}
        if seed is not None:
            changes["seed"] = seed
        if force_convention is not None:
            changes["force_convention"] = ForceConvention(force_convention)
        if methods is not None:
            changes["methods"] = resolve_methods(methods)
        return replace(self, **changes)

    def to_dict(self) -> dict[str, object]:
        if isinstance(self.sim, CohortSimConfig):
            sim: object = self.sim.to_dict()
        elif self.sim is None:
            sim = None
        else:
            sim = [c.to_dict() for c in self.sim]
        criteria = self.filters
        return {
            "seed": self.seed,
            "workers": self.workers,
            "train_fraction": self.train_fraction,
            "force_convention": self.force_convention.value,
            "predictive_noise": self.predictive_noise,
            "jitter": self.jitter,
            "methods": list(self.methods),
            "optimizer": self.optimizer.to_dict(),
            "prior": {k: list(v) for k, v in self.prior.patterns.items()},
            "filters": {
                "exclude_classes": list(criteria.exclude_classes),
                "drug_classes": dict(criteria.drug_classes),
                "allowed_treatment_types": (
                    None
                    if criteria.allowed_treatment_types is None
                    else list(criteria.allowed_treatment_types)
                ),
                "min_treatment_count": criteria.min_treatment_count,
                "require_treatment": criteria.require_treatment,
                "min_observations": criteria.min_observations,
                "covariates": list(criteria.covariates),
            },
            "sim": sim,
            "acceptance": None if self.acceptance is None else self.acceptance.to_dict(),
        }

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form of the resolved configuration."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _check_keys(data: Mapping[str, Any], allowed: set[str] | frozenset[str], path: str) -> None:
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        where = ", ".join(f"{path}{key}" for key in unknown)
        msg = f"unknown configuration key(s): {where}"
        raise ConfigError(msg)


def _mapping(value: object, path: str) -> Mapping[str, Any]:
    if value is None:
        return {}
    if not isinstance(value, Mapping):
        msg = f"{path} must be a mapping; received {type(value).__name__}"
        raise ConfigError(msg)
    return value


def _optimizer(data: Mapping[str, Any]) -> OptimizerConfig:
    _check_keys(data, set(OptimizerConfig.__dataclass_fields__), "optimizer.")
    return OptimizerConfig(**data)


def _prior(data: Mapping[str, Any]) -> GaussianPrior:
    patterns: dict[str, tuple[float, float]] = {}
    for pattern, value in data.items():
        try:
            mean, variance = (float(v) for v in value)
        except (TypeError, ValueError):
            msg = f"prior.{pattern} must be [mean, variance]; received {value!r}"
            raise ConfigError(msg) from None
        patterns[str(pattern)] = (mean, variance)
    try:
        return GaussianPrior(patterns)
    except ValueError as err:
        raise ConfigError(str(err)) from err


def _filters(data: Mapping[str, Any]) -> FilterCriteria:
    _check_keys(data, set(FilterCriteria.__dataclass_fields__), "filters.")
    kwargs: dict[str, Any] = dict(data)
    for key in ("exclude_classes", "covariates"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key] or ())
    if kwargs.get("allowed_treatment_types") is not None:
        kwargs["allowed_treatment_types"] = tuple(kwargs["allowed_treatment_types"])
    if "drug_classes" in kwargs:
        kwargs["drug_classes"] = dict(_mapping(kwargs["drug_classes"], "filters.drug_classes"))
    return FilterCriteria(**kwargs)


def _sim(value: object) -> CohortSimConfig | tuple[SimConfig, ...] | None:
    if value is None:
        return None
    if isinstance(value, list):
        return tuple(SimConfig.from_dict(_mapping(item, "sim[]")) for item in value)
    return CohortSimConfig.from_dict(_mapping(value, "sim"))


def _acceptance(value: object) -> AcceptanceThresholds | None:
    if value is None:
        return None
    data = _mapping(value, "acceptance")
    _check_keys(data, set(AcceptanceThresholds.__dataclass_fields__), "acceptance.")
    kwargs: dict[str, Any] = {}
    if "min_sign_rate" in data:
        rate = data["min_sign_rate"]
        kwargs["min_sign_rate"] = None if rate is None else float(rate)
    if "min_win_fraction" in data:
        fractions = _mapping(data["min_win_fraction"], "acceptance.min_win_fraction")
        kwargs["min_win_fraction"] = {str(k): float(v) for k, v in fractions.items()}
    return AcceptanceThresholds(**kwargs)


def config_from_dict(data: Mapping[str, Any] | None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig`; missing keys take their defaults."""
    data = _mapping(data, "configuration")
    _check_keys(data, _TOP_KEYS, "")
    kwargs: dict[str, Any] = {
        key: data[key]
        for key in ("seed", "workers", "train_fraction", "predictive_noise", "jitter")
        if key in data
    }
    try:
        if "force_convention" in data:
            kwargs["force_convention"] = ForceConvention(data["force_convention"])
        if "methods" in data:
            kwargs["methods"] = resolve_methods(data["methods"])
        kwargs["optimizer"] = _optimizer(_mapping(data.get("optimizer"), "optimizer"))
        kwargs["prior"] = _prior(_mapping(data.get("prior"), "prior"))
        kwargs["filters"] = _filters(_mapping(data.get("filters"), "filters"))
        kwargs["sim"] = _sim(data.get("sim"))
        kwargs["acceptance"] = _acceptance(data.get("acceptance"))
        return ExperimentConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as err:
        msg = f"invalid configuration: {err}"
        raise ConfigError(msg) from err


def load_config(path: str | pathlib.Path | None) -> ExperimentConfig:
    """Read a YAML (``.yaml``/``.yml``) or JSON configuration; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    path = pathlib.Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        msg = f"cannot read configuration {str(path)!r}: {err.strerror}"
        raise ConfigError(msg) from err
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text) if text.strip() else {}
        else:
            data = yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as err:
        msg = f"cannot parse configuration {str(path)!r}: {err}"
        raise ConfigError(msg) from err
    return config_from_dict(data)
