import numpy as np
import pytest

from ipmtherm.config import ScenarioConfig
from ipmtherm.machine_model import MachineParams
from ipmtherm.scenario import run_scenario


@pytest.fixture
def params():
    return MachineParams()


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def window_config(rpm, mode="rotating_flux", duration=16.0, **run):
    """One injection window from 1 s to 16 s at full load."""
    return (ScenarioConfig()
            .with_injection(mode=mode, start=1.0, on_duration=15.0, period=600.0)
            .with_run(duration_s=duration, speed_setpoint_rpm=rpm, load_pct_of_rated=100, **run))


@pytest.fixture(scope="session")
def flux_run_600():
    return run_scenario(window_config(600))


@pytest.fixture(scope="session")
def torque_run_600():
    return run_scenario(window_config(600, mode="torque"))
