import pytest
import torch

from pirgan.config import ModelConfig, TrainingConfig
from pirgan.data import ToySpec, generate_toy_domains


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)


@pytest.fixture(scope="session")
def small_model():
    return ModelConfig(resolution=32, z_dim=16, g_channels=8, d_channels=8, f_channels=8)


@pytest.fixture(scope="session")
def small_cfg(small_model):
    return TrainingConfig(model=small_model, batch_size=4, iterations=4, checkpoint_interval=2)


@pytest.fixture(scope="session")
def toy_small():
    return generate_toy_domains(ToySpec(n_source=64, n_target=32, seed=3))


ACCEPTANCE = pytest.StashKey()


@pytest.fixture
def acceptance(request):
    """Record a PASS/FAIL line for an acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE, {})

    def record(number, title, ok, detail):
        lines[number] = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
