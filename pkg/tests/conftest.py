import os

# Pin BLAS threading before numpy loads so metric reports and training are
# bit-reproducible run to run.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest

from luxtune.dataio import DatasetConfig, build_dataset

_ACCEPTANCE_RESULTS = []


@pytest.fixture(scope="session")
def micro_dataset(tmp_path_factory):
    """Small fast dataset for unit-level training tests."""
    root = tmp_path_factory.mktemp("micro_ds")
    config = DatasetConfig(scenes=10, width=32, height=32, seed=1234)
    return build_dataset(config, root)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    _ACCEPTANCE_RESULTS.append((name, report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in _ACCEPTANCE_RESULTS:
        status = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"[{status}] {name} ({duration:.1f}s)")
