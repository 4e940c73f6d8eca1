from .engine import (
    ALL_RED,
    GREEN,
    YELLOW,
    SimState,
    TrafficEnv,
    apply_actions,
    observe,
    observe_all,
    pressure,
    reward,
    step_second,
    travel_time_metric,
)
from .network import (
    N_PHASES,
    PHASE_NAMES,
    PHASES,
    RoadNetwork,
    Vehicles,
    build_network,
    entry_name,
    generate_vehicles,
    permission_table,
    vehicles_from_routes,
)

__all__ = [
    "ALL_RED",
    "GREEN",
    "YELLOW",
    "N_PHASES",
    "PHASES",
    "PHASE_NAMES",
    "RoadNetwork",
    "SimState",
    "TrafficEnv",
    "Vehicles",
    "apply_actions",
    "build_network",
    "entry_name",
    "generate_vehicles",
    "observe",
    "observe_all",
    "permission_table",
    "pressure",
    "reward",
    "step_second",
    "travel_time_metric",
    "vehicles_from_routes",
]
