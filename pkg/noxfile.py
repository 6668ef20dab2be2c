import os
import sys

import nox

# on python >= 3.12 this will improve speed of test coverage a lot
if sys.version_info >= (3, 12):
    os.environ["COVERAGE_CORE"] = "sysmon"

nox.options.default_venv_backend = "uv"

_py_versions = range(11, 15)


@nox.session(python=False)
def fmt(session: nox.Session) -> None:
    session.run("ruff", "check", "--fix-only", ".", external=True)
    session.run("ruff", "format", ".", external=True)


@nox.session(python=[f"3.{v}" for v in _py_versions])
def test(session: nox.Session) -> None:
    session.install("-e.[dev]")
    session.chdir("tests")
    session.run(
        "pytest",
        "-s",
        "-x",
        "-m",
        "not slow",
        *session.posargs,
    )


@nox.session(python="3.13")
def acceptance(session: nox.Session) -> None:
    """Full-size checks: oracle, gradients and the recovery benchmark."""
    session.install("-e.")
    out = session.create_tmp()
    session.run("causalgp", "oracle-check", "--n", "200", "--out", out)
    session.run("causalgp", "gradcheck", "--n", "20", "--out", out)
    config = os.path.join(os.path.dirname(__file__), "configs", "recovery.yaml")
    data = os.path.join(out, "recovery")
    session.run("causalgp", "simulate", "--config", config, "--out", data)
    session.run("causalgp", "evaluate", data, "--config", config, "--method", "all", "--out", os.path.join(out, "results"))
