import numpy as np
import pytest

from cespdc.config import load_preset
from cespdc.scenarios import build_components


@pytest.fixture(scope="session")
def components():
    return build_components(load_preset("fig2_unfiltered").params)


@pytest.fixture(scope="session")
def filtered_components():
    return build_components(load_preset("fig4_filtered").params)


@pytest.fixture(scope="session")
def cavity(components):
    return components.cavity


@pytest.fixture(scope="session")
def spectrum(components):
    return components.spectrum


@pytest.fixture(scope="session")
def template(components):
    return components.mode_template()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
