"""fleetcharge: mixed-type EV charger planning and opportunity-charging
scheduling for industrial truck fleets.

Pipeline: GPS traces -> stop detection and zone ranking -> time-gridded
instances -> deterministic or robust MILP -> direct solve, fix-and-optimize
heuristic, or whole-year planning (representative days / monthly iteration)
-> replay verification and metrics.
"""

from .core import (
    FAST,
    SLOW,
    ChargerType,
    FleetInstance,
    InstanceError,
    Stretch,
    TimeGrid,
    Truck,
    Zone,
    default_charger_catalog,
    load_instance,
    parked_stretches,
    save_instance,
    successor,
)
from .model import (
    BigMSet,
    BuildConfig,
    ModelError,
    PlanningModel,
    build_model,
    compute_big_m,
    fix_fast_charging,
    set_case_profile,
)
from .solver import (
    SolveSettings,
    Solution,
    SolverError,
    extract_installation,
    solve,
)
from .uncertainty import (
    UncertaintyMoments,
    compute_moments,
    moments_from_instance,
    robust_coefficient,
    sample_pp,
)

__version__ = "0.1.0"

__all__ = [
    "ChargerType", "FleetInstance", "InstanceError", "Stretch", "TimeGrid",
    "Truck", "Zone", "SLOW", "FAST", "default_charger_catalog",
    "load_instance", "save_instance", "parked_stretches", "successor",
    "BigMSet", "BuildConfig", "ModelError", "PlanningModel", "build_model",
    "compute_big_m", "fix_fast_charging", "set_case_profile",
    "SolveSettings", "Solution", "SolverError", "extract_installation", "solve",
    "UncertaintyMoments", "compute_moments", "moments_from_instance",
    "robust_coefficient", "sample_pp",
]
