"""Shared fixtures: the default scenario and constants derived from it."""

import pytest

from pcrb_tracker.energy import PropulsionParams
from pcrb_tracker.pcrb import SensingConstants
from pcrb_tracker.scenario import Scenario


@pytest.fixture(scope="session")
def scenario() -> Scenario:
    return Scenario()


@pytest.fixture(scope="session")
def pp(scenario) -> PropulsionParams:
    return PropulsionParams.from_scenario(scenario)


@pytest.fixture(scope="session")
def consts(scenario) -> SensingConstants:
    return SensingConstants.from_scenario(scenario)
