import os
import pathlib

import pytest

ROOT = pathlib.Path(__file__).resolve().parents[2]


@pytest.fixture(scope="session")
def assets():
    return pathlib.Path(os.environ.get("SPLATSIM_ASSETS", ROOT / "assets"))


@pytest.fixture(scope="session")
def cli():
    path = os.environ.get("SPLATSIM_CLI")
    if not path:
        pytest.skip("SPLATSIM_CLI not set")
    return path
