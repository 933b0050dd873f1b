import pytest
from hypothesis import HealthCheck, settings

from oselab.reproduction import example_cocycle

settings.register_profile(
    "default",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def thm1_cocycle():
    return example_cocycle("thm1")


@pytest.fixture(scope="session")
def thm2_cocycle():
    return example_cocycle("thm2")


@pytest.fixture(scope="session")
def sec7_cocycle():
    return example_cocycle("sec7")
