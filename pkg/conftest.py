import pytest

from validity_domain.log import set_quietness


@pytest.fixture(autouse=True)
def quiet_logs():
    """Only warnings and errors reach the console while testing."""
    set_quietness(1)
    yield
    set_quietness(0)
