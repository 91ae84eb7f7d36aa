import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conceptspace import generate_xor_and_xor, split, train
from conceptspace.config import ExperimentConfig, TrainPlan
from conceptspace.model import SharedConceptModel
from conceptspace.rng import substream


@pytest.fixture(scope="session")
def small_cfg():
    return ExperimentConfig(n_samples=300, seed=0,
                            plan=TrainPlan(epochs=40, phase2_epochs=40))


@pytest.fixture(scope="session")
def small_split(small_cfg):
    samples = generate_xor_and_xor(small_cfg.n_samples, small_cfg.seed,
                                   small_cfg.random_edge_max)
    return split(samples, small_cfg.split_ratio, small_cfg.seed)


@pytest.fixture(scope="session")
def small_model(small_cfg, small_split):
    """A briefly trained model: good enough for every contract test that
    needs trained statistics and a nontrivial concept layout."""
    model = SharedConceptModel(small_cfg, substream(small_cfg.seed, "init"))
    model, history = train(model, small_split, small_cfg)
    return model, history


# -- acceptance reporting ----------------------------------------------------

_ACCEPTANCE_LINES = []


def record_criterion(name: str, ok: bool, detail: str = ""):
    _ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {name}" +
                             (f" - {detail}" if detail else ""))


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
