from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from xensemble import nncore as nn

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def constant_model(probs, input_dim: int = 4) -> nn.MicroModel:
    """A model whose output ignores the input: zero weights, bias = log probs."""
    p = np.asarray(probs, dtype=np.float64)
    return nn.MicroModel((nn.Layer(np.zeros((p.size, input_dim)), np.log(p), "identity"),), p.size, input_dim)


def one_hot_model(label: int, num_classes: int = 3, input_dim: int = 4, margin: float = 30.0) -> nn.MicroModel:
    logits = np.zeros(num_classes)
    logits[label] = margin
    return nn.MicroModel((nn.Layer(np.zeros((num_classes, input_dim)), logits, "identity"),),
                         num_classes, input_dim)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_problem():
    """4x4 two-class data and a trained single-hidden-layer model."""
    from xensemble import synthdata as sd
    train = sd.gen_in_distribution(2, 40, 4, 0.05, seed=3, name="train")
    test = sd.gen_in_distribution(2, 10, 4, 0.05, seed=4, name="test")
    model = nn.init_model([16, 12, 2], seed=7)
    model = nn.train(model, train, nn.TrainConfig(epochs=20, learning_rate=0.05, seed=1))
    return train, test, model


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[num])
