"""Joint offloading, power control and CPU allocation for vehicle-assisted edge computing."""

from .esm import EsmStrides, run_esm
from .joet import JoetConfig, OptionSpace, ResourceLedger, run_joet
from .model import DecisionVector, SlotInstance, SlotResult, evaluate_decision, utility
from .scenario import ScenarioConfig, generate_scenario
from .schemes import SCHEMES, run_scheme

__all__ = [
    "DecisionVector", "EsmStrides", "JoetConfig", "OptionSpace", "ResourceLedger", "SCHEMES", "ScenarioConfig",
    "SlotInstance", "SlotResult", "evaluate_decision", "generate_scenario", "run_esm", "run_joet", "run_scheme",
    "utility",
]
__version__ = "0.1.0"
