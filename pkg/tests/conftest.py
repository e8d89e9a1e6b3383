import numpy as np
import pytest

from catalyst.data import DatasetSpec, generate_dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiny_data():
    return generate_dataset(DatasetSpec("gaussian-blobs", n_classes=3, dim=2, n_train=96, n_test=48, seed=1))


def pytest_configure(config):
    config.acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance summary")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def record(request):
    """Print one status line and keep it for the end-of-session summary."""
    def _record(name, passed, detail, tag=None):
        line = f"[{tag or ('PASS' if passed else 'FAIL')}] {name}: {detail}"
        print(line)
        request.config.acceptance_lines.append(line)
        return passed
    return _record
