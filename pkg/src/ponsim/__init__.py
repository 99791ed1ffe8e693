"""
ponsim: a discrete-event simulator for ATM passive optical networks and
their migration towards wavelength-division multiplexing.

The usual entry points are :func:`load_scenario` and :func:`run`; the
``ponsim`` command wraps both.
"""

__version__ = "0.1.0"

from .core import FRAME_TICKS, LINE_RATE_HZ, SLOT_TICKS, Engine  # noqa: E402
from .olt import Olt, RangingError  # noqa: E402
from .ont import Ont  # noqa: E402
from .scenario import (Scenario, ScenarioError, Stage, build_topology,  # noqa: E402
                       load_scenario, scenario_from_dict, with_seed)
from .simulation import RunResult, Simulation, run, simulate  # noqa: E402

__all__ = [
    "__version__", "FRAME_TICKS", "LINE_RATE_HZ", "SLOT_TICKS", "Engine", "Olt", "Ont",
    "RangingError", "Scenario", "ScenarioError", "Stage", "build_topology", "load_scenario",
    "scenario_from_dict", "with_seed", "RunResult", "Simulation", "run", "simulate",
]
