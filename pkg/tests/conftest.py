import numpy as np
import pytest

from rangequant import WeightTensor
from rangequant.storage import save_model

# Weight-like scale: sigma = 0.05 puts the 8-bit MSE near 2e-7, typical of
# trained conv layers.
SIGMA = 0.05
CORPUS_SIZE = 50
CORPUS_N = 10_000


def gaussian_tensor(name, seed, n=CORPUS_N, sigma=SIGMA, shape=None):
    values = np.random.default_rng(seed).normal(0.0, sigma, n)
    return WeightTensor(name, shape or (n,), values)


def laplace_tensor(name, seed, n=CORPUS_N, sigma=SIGMA):
    values = np.random.default_rng(seed).laplace(0.0, sigma / np.sqrt(2.0), n)
    return WeightTensor(name, (n,), values)


def seeded_corpus():
    """50 tensors, alternating Gaussian / Laplacian, same std."""
    out = []
    for i in range(CORPUS_SIZE):
        make = gaussian_tensor if i % 2 == 0 else laplace_tensor
        out.append(make(f"t{i:02d}", 1000 + i))
    return out


def outlier_tensor():
    """Gaussian body (sigma 0.05) with a single weight at 1.0."""
    values = np.random.default_rng(7).normal(0.0, SIGMA, CORPUS_N)
    values[0] = 1.0
    return WeightTensor("outlier", (CORPUS_N,), values)


def quadratic_tensor():
    """At b=2 every weight keeps code 1 for all alpha in (0, 1], so the
    uniform MSE is exactly 0.01 * ((1 - a)^2 + 3 (0.6 - a)^2) / 4:
    minimum 3e-4 at alpha = 0.7."""
    values = np.array([0.1] * 9 + [0.06] * 27)
    return WeightTensor("quad", (4, 9), values)


QUAD_BITS = 2
QUAD_ALPHA = 0.7
QUAD_LOSS = 3e-4


@pytest.fixture(scope="session")
def corpus():
    return seeded_corpus()


@pytest.fixture
def model_dir(tmp_path):
    """Three-tensor model on disk; returns the manifest path."""
    rng = np.random.default_rng(3)
    tensors = [
        WeightTensor("conv1", (8, 3, 3, 3), rng.normal(0, 0.1, 216)),
        WeightTensor("layer1.0.conv1", (16, 8, 3, 3), rng.normal(0, 0.05, 1152)),
        WeightTensor("fc", (10, 16), rng.laplace(0, 0.03, 160)),
    ]
    return save_model(tmp_path / "model", tensors)


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _ACCEPTANCE.append((marker.args[0], report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if outcome == 'passed' else 'FAIL'}  {name}")
