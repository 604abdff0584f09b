from pathlib import Path

import numpy as np
import pytest

from dpfair.data import SplitSpec, load_adult

DATA_DIR = Path(__file__).resolve().parents[1] / "data" / "adult"

# criterion id -> (passed, detail); filled by test_acceptance, printed at the end
CRITERIA: dict = {}


def adult_available() -> bool:
    return (DATA_DIR / "adult.data").exists() and (DATA_DIR / "adult.test").exists()


requires_adult = pytest.mark.skipif(not adult_available(), reason="Adult files not in data/adult")


@pytest.fixture(scope="session")
def adult_dir():
    if not adult_available():
        pytest.skip("Adult files not in data/adult")
    return DATA_DIR


@pytest.fixture(scope="session")
def adult(adult_dir):
    return load_adult(adult_dir, SplitSpec())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA, key=lambda k: (int(k.split(".")[0]), k)):
        passed, detail = CRITERIA[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if passed else 'FAIL'}  {detail}")
