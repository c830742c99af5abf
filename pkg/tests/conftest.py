import numpy as np
import pytest

from talentforest.dataset import Dataset, FeatureSchema, Feature, SynthSpec, generate_synthetic
from talentforest.forest import ForestParams, train_forest

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def synth600():
    """Noisy synthetic dataset used by the qualitative checks."""
    return generate_synthetic(SynthSpec(n_rows=600, noise_rate=0.1, seed=0))


@pytest.fixture(scope="session")
def forest500(synth600):
    return train_forest(synth600, ForestParams(n_trees=500, seed=1))


@pytest.fixture
def separable4():
    """Four rows, one feature A; A=Good -> Good, A=Poor -> Poor."""
    schema = FeatureSchema((Feature("A", ("Good", "Average", "Poor")),))
    return Dataset(schema, np.array([[0], [0], [2], [2]]), np.array([0, 0, 2, 2]))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
