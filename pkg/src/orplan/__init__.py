"""Surgery planning under uncertainty: offline block assignment with a
surrogate second-stage model, competitor planners, a greedy online policy in
a discrete-event simulator, and Monte Carlo cost evaluation."""

from .model import (
    Block,
    CostBreakdown,
    CostParams,
    ElectivePatient,
    EmergencyCase,
    EmergencyParams,
    Instance,
    Plan,
    Scenario,
    SimulationOutcome,
    Specialty,
)

__version__ = "0.1.0"

__all__ = [
    "Block",
    "CostBreakdown",
    "CostParams",
    "ElectivePatient",
    "EmergencyCase",
    "EmergencyParams",
    "Instance",
    "Plan",
    "Scenario",
    "SimulationOutcome",
    "Specialty",
    "__version__",
]
