import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def easy_model():
    """Baseline trained on a corpus whose tokens are identifiable in-segment.

    The first five test utterances decode exactly with this model; they form
    the fixed decoding fixture.
    """
    from rnnt_delay.data import CorpusSpec, generate
    from rnnt_delay.training import TrainConfig, train

    corpus = generate(CorpusSpec(num_train=400, num_dev=0, num_test=5,
                                 future_cue_prob=0.0, noise_std=0.1))
    params, _ = train(corpus["train"], [], TrainConfig(n_epochs=5, eval_interval=10**6))
    return params, corpus["test"]
