import logging

import pytest

from timberline.synth import build_fixture

logging.getLogger("timberline").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def synth1():
    return build_fixture("SYNTH-1")


@pytest.fixture(scope="session")
def synth_panel():
    return build_fixture("SYNTH-5PANEL")


@pytest.fixture(scope="session")
def synth_grm():
    return build_fixture("SYNTH-GRM")


@pytest.fixture(scope="session")
def synth_inv():
    return build_fixture("SYNTH-INV")
