import numpy as np
import pytest
from hypothesis import settings

from hybridlsh.data_io import ClusterSpec, SyntheticSpec, generate_synthetic

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# radius per metric giving a mix of empty and non-empty answers on small_data
RADII = {"l2": 0.3, "l1": 1.5, "cosine": 0.05, "hamming": 8}


def small_dataset(metric: str, n: int = 2000, d: int = 32, seed: int = 1):
    spec = SyntheticSpec(n, d, (ClusterSpec(n // 3, 0.05),), seed=seed, metric=metric)
    return generate_synthetic(spec)[0]


@pytest.fixture(params=["l2", "l1", "cosine", "hamming"])
def metric(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
