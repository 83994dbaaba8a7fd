import sys
from pathlib import Path

import numpy as np
import pytest

# Make the oracles module importable from any test file.
sys.path.insert(0, str(Path(__file__).parent))

REPO_ROOT = Path(__file__).resolve().parent.parent
MNIST_DIR = REPO_ROOT / "data" / "mnist"


@pytest.fixture(scope="session")
def mnist_dir():
    if not (MNIST_DIR / "train-images-idx3-ubyte.gz").exists():
        pytest.skip("canonical MNIST archives not present; run scripts/fetch_mnist.py")
    return MNIST_DIR


@pytest.fixture(scope="session")
def mnist_sets(mnist_dir):
    from ghostgan.data import load_mnist

    return load_mnist(mnist_dir)


@pytest.fixture()
def rng():
    return np.random.default_rng(0)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion at the end of the session."""
    lines = {}
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            name = nodeid.split("::")[-1]
            # Keep the worst outcome across setup/call/teardown phases.
            current = lines.get(name)
            rank = {"passed": 0, "skipped": 1, "failed": 2, "error": 2}
            if current is None or rank[status] > rank[current]:
                lines[name] = status
    if lines:
        terminalreporter.section("acceptance criteria")
        for name in sorted(lines):
            terminalreporter.write_line(f"{name}: {lines[name].upper()}")
