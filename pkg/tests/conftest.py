import numpy as np
import pytest
from hypothesis import settings

from mpqplan.netlab import TrainSchedule, convnet, pattern_images, split, train

settings.register_profile("ci", max_examples=60, deadline=None)
settings.load_profile("ci")

TOY_SCHEDULE = TrainSchedule(learning_rate=0.05, weight_decay=1e-4, batch_size=32, epochs=30)


def toy_setup(seed: int):
    """Trained BN convnet on the 4-class pattern images for one seed."""
    net = convnet(1, 8, 4)
    ds = split(pattern_images(600, 4, 8, noise=1.0, seed=seed), 4, seed=seed)
    params, _ = train(net, net.init_params(seed), ds, TOY_SCHEDULE, seed=seed)
    return net, params, ds


@pytest.fixture(scope="session")
def trained_convnet():
    return toy_setup(0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


CRITERIA: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
