"""Tests for the command line."""

import json

import pytest

from causalgp._checks import GradcheckCase, GradcheckReport
from causalgp._cli import EXIT_CHECK_FAILED, EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, build_parser, main
from causalgp._errors import NumericalError
from causalgp._evaluate import EvalReport, PatientResult, SignScore, summarise
from causalgp._io import load_records, read_document

SMALL = {
    "seed": 4,
    "optimizer": {"max_iter": 20, "restarts": 1},
    "sim": {"n_patients": 2, "n_observations": 12, "horizon": 12.0},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL))
    return path


def test_parser_requires_a_verb():
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args([])
    assert info.value.code == 2


def test_simulate_writes_records_and_truth(config_file, tmp_path):
    out = tmp_path / "data"
    assert main(["simulate", "--config", str(config_file), "--out", str(out), "--format", "csv", "-q"]) == EXIT_OK
    records = load_records(out / "records.csv")
    assert [r.patient_id for r in records] == ["sim-0", "sim-1"]
    truth = read_document(out / "truth.json")
    assert set(truth["patients"]) == {"sim-0", "sim-1"}


def test_seed_override_changes_the_cohort(config_file, tmp_path):
    main(["simulate", "--config", str(config_file), "--out", str(tmp_path / "a"), "-q"])
    main(["simulate", "--config", str(config_file), "--out", str(tmp_path / "b"), "--seed", "5", "-q"])
    assert load_records(tmp_path / "a" / "records.json") != load_records(tmp_path / "b" / "records.json")


def test_evaluate_all_methods(config_file, tmp_path, capsys):
    data = tmp_path / "data"
    main(["simulate", "--config", str(config_file), "--out", str(data), "-q"])
    out = tmp_path / "results"
    code = main(["evaluate", str(data), "--config", str(config_file), "--method", "all", "--out", str(out), "-q"])
    assert code == EXIT_OK
    for method in ("proposed", "se-per", "ou-exp"):
        assert (out / method / "report.json").is_file()
    assert set(read_document(out / "comparison.json")["baselines"]) == {"se-per", "ou-exp"}
    printed = capsys.readouterr().out
    assert "proposed\tsbp\tMAE" in printed
    assert "sign recovery" in printed


def test_fit_and_predict(config_file, tmp_path):
    data = tmp_path / "data"
    main(["simulate", "--config", str(config_file), "--out", str(data), "-q"])
    assert main(["fit", str(data), "--config", str(config_file), "--out", str(tmp_path / "fit"), "-q"]) == EXIT_OK
    fit = tmp_path / "fit" / "fit.json"
    assert [e["patient_id"] for e in read_document(fit)["patients"]] == ["sim-0", "sim-1"]
    code = main(["predict", str(data), "--fit", str(fit), "--grid", "10", "--out", str(tmp_path / "pred"), "-q"])
    assert code == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "pred" / "trajectories").iterdir()) == ["sim-0.csv", "sim-1.csv"]


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--config", "missing.yaml"],
        ["evaluate", "nowhere"],
        ["simulate", "--method", "arima"],
    ],
)
def test_invalid_input_exit_code(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main([*argv, "-q"]) == EXIT_INPUT


def test_numerical_failure_exit_code(config_file, tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        msg = "not positive definite"
        raise NumericalError(msg)

    monkeypatch.setattr("causalgp._cli.simulate_cohort", broken)
    assert main(["simulate", "--config", str(config_file), "--out", str(tmp_path), "-q"]) == EXIT_NUMERICAL


def test_oracle_check_verb(tmp_path):
    assert main(["oracle-check", "--n", "4", "--out", str(tmp_path), "-q"]) == EXIT_OK
    assert read_document(tmp_path / "oracle.json")["n_cases"] == 16


def test_failed_check_exit_code(tmp_path, monkeypatch):
    failing = GradcheckReport((GradcheckCase(0, "proposed", {"x": 1.0}, {"x": 2.0}, 1e-4, 1e-6),))
    monkeypatch.setattr("causalgp._cli.gradcheck", lambda *args, **kwargs: failing)
    assert main(["gradcheck", "--n", "1", "--out", str(tmp_path), "-q"]) == EXIT_CHECK_FAILED
    assert read_document(tmp_path / "gradcheck.json")["passed"] is False


@pytest.mark.parametrize(("matched", "expected"), [(17, EXIT_CHECK_FAILED), (18, EXIT_OK)])
def test_evaluate_acceptance_gate(matched, expected, tmp_path, monkeypatch, capsys):
    signs = tuple(SignScore("p1", "sbp", f"drug{i}", 1, 1 if i < matched else -1) for i in range(20))
    patient = PatientResult("p1", mae={"sbp": 1.0}, signs=signs)
    report = EvalReport("proposed", 0, "abc", summarise([patient]), (patient,))
    monkeypatch.setattr("causalgp._cli.run_methods", lambda *args: {"proposed": report})
    config = tmp_path / "gated.json"
    config.write_text(json.dumps({"acceptance": {"min_sign_rate": 0.9}}))
    argv = ["evaluate", str(tmp_path), "--config", str(config), "--out", str(tmp_path / "out"), "-q"]
    assert main(argv) == expected
    assert "acceptance: " in capsys.readouterr().out
