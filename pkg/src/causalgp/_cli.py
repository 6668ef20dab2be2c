"""The ``causalgp`` command line.

Exit status: 0 on success, 2 for invalid input or configuration, 3 for a
numerical failure and 4 when an acceptance check fails.
"""

from __future__ import annotations

import argparse
import logging
import pathlib
import sys
from collections.abc import Sequence

from causalgp._checks import gradcheck, oracle_check
from causalgp._config import ExperimentConfig, load_config
from causalgp._errors import CausalGPError, NumericalError
from causalgp._evaluate import (
    acceptance_verdict,
    fit_records,
    load_dataset,
    predict_records,
    run_methods,
    write_trajectories,
)
from causalgp._io import RecordFormat, read_document, save_records, write_document
from causalgp._lfm import ForceConvention
from causalgp._sim import CohortSimConfig, sample_cohort, simulate_cohort, truth_document

LOGGER = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3
EXIT_CHECK_FAILED = 4


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=pathlib.Path, help="YAML or JSON configuration file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", type=pathlib.Path, default=pathlib.Path("out"), help="output directory")
    common.add_argument("--method", help="proposed, se-per, ou-exp or all")
    common.add_argument(
        "--force-convention",
        choices=[c.value for c in ForceConvention],
        help="treatment of the latent force before its mark",
    )
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="causalgp",
        description="Treatment effects on clinical time series with causal latent force models.",
    )
    verbs = parser.add_subparsers(dest="verb", required=True)

    simulate = verbs.add_parser("simulate", parents=[common], help="write a synthetic cohort")
    simulate.add_argument("--format", choices=[f.value for f in RecordFormat], default="json")

    fit = verbs.add_parser("fit", parents=[common], help="fit every patient of a dataset")
    fit.add_argument("dataset", type=pathlib.Path)

    predict = verbs.add_parser("predict", parents=[common], help="write posterior trajectories")
    predict.add_argument("dataset", type=pathlib.Path)
    predict.add_argument("--fit", type=pathlib.Path, required=True, help="fit.json written by 'fit'")
    predict.add_argument("--grid", type=int, default=200, help="grid points per covariate")

    evaluate = verbs.add_parser("evaluate", parents=[common], help="70/30 forecast evaluation")
    evaluate.add_argument("dataset", type=pathlib.Path)

    oracle = verbs.add_parser("oracle-check", parents=[common], help="closed forms vs quadrature")
    oracle.add_argument("--n", type=int, default=200)

    grad = verbs.add_parser("gradcheck", parents=[common], help="gradient vs finite differences")
    grad.add_argument("--n", type=int, default=20)
    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    return load_config(args.config).with_overrides(
        seed=args.seed,
        force_convention=args.force_convention,
        methods=args.method,
    )


def _simulate(args: argparse.Namespace, config: ExperimentConfig) -> int:
    sim = config.sim if config.sim is not None else CohortSimConfig()
    configs = sample_cohort(sim, config.seed) if isinstance(sim, CohortSimConfig) else list(sim)
    records, truths = simulate_cohort(configs)
    args.out.mkdir(parents=True, exist_ok=True)
    save_records(records, args.out / f"records.{args.format}")
    write_document(truth_document(truths), args.out / "truth.json")
    return EXIT_OK


def _fit(args: argparse.Namespace, config: ExperimentConfig) -> int:
    document = fit_records(load_dataset(args.dataset), config.methods[0], config)
    args.out.mkdir(parents=True, exist_ok=True)
    write_document(document, args.out / "fit.json")
    return EXIT_OK


def _predict(args: argparse.Namespace, config: ExperimentConfig) -> int:
    frames = predict_records(
        load_dataset(args.dataset),
        read_document(args.fit),
        include_noise=config.predictive_noise,
        n_grid=args.grid,
    )
    write_trajectories(frames, args.out)
    return EXIT_OK


def _evaluate(args: argparse.Namespace, config: ExperimentConfig) -> int:
    reports = run_methods(args.dataset, config, args.out)
    for method, report in reports.items():
        for name, summary in report.covariates.items():
            se = "n/a" if summary.se is None else f"{summary.se:.4g}"
            print(f"{method}\t{name}\tMAE {summary.mae:.4g} ± {se}\t(n={summary.n})")
        recovery = report.sign_recovery()
        if recovery is not None:
            print(f"{method}\tsign recovery {recovery['matched']}/{recovery['total']}")
    if config.acceptance is None:
        return EXIT_OK
    verdict = acceptance_verdict(reports, config.acceptance)
    print(f"acceptance: {'passed' if verdict['passed'] else 'failed'}")
    return EXIT_OK if verdict["passed"] else EXIT_CHECK_FAILED


def _oracle(args: argparse.Namespace, config: ExperimentConfig) -> int:
    report = oracle_check(args.n, config.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    write_document(report.to_dict(), args.out / "oracle.json")
    for key, deviation in report.max_deviation().items():
        print(f"{key}\tmax deviation {deviation:.3g}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def _gradcheck(args: argparse.Namespace, config: ExperimentConfig) -> int:
    report = gradcheck(args.n, config.seed, convention=config.force_convention)
    args.out.mkdir(parents=True, exist_ok=True)
    write_document(report.to_dict(), args.out / "gradcheck.json")
    print(f"gradcheck: {sum(c.passed for c in report.cases)}/{len(report.cases)} passed")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


_VERBS = {
    "simulate": _simulate,
    "fit": _fit,
    "predict": _predict,
    "evaluate": _evaluate,
    "oracle-check": _oracle,
    "gradcheck": _gradcheck,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)
    try:
        config = _resolve_config(args)
        return _VERBS[args.verb](args, config)
    except NumericalError as err:
        LOGGER.error("numerical failure: %s", err)  # noqa: TRY400
        return EXIT_NUMERICAL
    except (CausalGPError, OSError) as err:
        LOGGER.error("%s", err)  # noqa: TRY400
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
