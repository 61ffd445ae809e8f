"""Magnet temperature estimation for a simulated hysteresis-DTC interior-PM drive.

An injected harmonic is superimposed on the drive's flux or torque reference.
Its voltage and current phasors give an HF resistance, which is converted to
a magnet temperature and compared with a synthetic thermal plant.
"""

from .config import ScenarioConfig, load_config, loads_config
from .machine_model import FrameVector, MachineParams
from .scenario import RunLog, Summary, run_scenario, sweep_speeds

__all__ = [
    "FrameVector",
    "MachineParams",
    "RunLog",
    "ScenarioConfig",
    "Summary",
    "load_config",
    "loads_config",
    "run_scenario",
    "sweep_speeds",
]
__version__ = "0.1.0"
