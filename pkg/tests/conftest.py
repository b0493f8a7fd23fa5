import numpy as np
import pytest

from finepot.core.grid_domain import build_domain


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    """Keep shell or .env settings from leaking into the tests."""
    for name in ('FINEPOT_OUT', 'FINEPOT_SEED', 'FINEPOT_JOBS', 'FINEPOT_ARCHIVE_URI', 'FINEPOT_LOG_LEVEL'):
        monkeypatch.setenv(name, '')


@pytest.fixture
def square():
    """[-1, 1]^2 with h = 1/16."""
    return build_domain(2, [-1, 1], 33)


@pytest.fixture
def fine_square():
    """[-1, 1]^2 with h = 1/32."""
    return build_domain(2, [-1, 1], 65)


@pytest.fixture
def interval():
    """[0, 1] with h = 1/64."""
    return build_domain(1, [0, 1], 65)


@pytest.fixture
def inner_box(square):
    return square.open_box([-0.5, -0.5], [0.5, 0.5])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
