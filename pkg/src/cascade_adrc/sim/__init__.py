"""Closed-loop simulation: fixed-step RK4 runs, grids and the telescope scenario."""

from .closed_loop import ClosedLoop, closed_loop_jacobian, integrate_generic
from .kernel import BACKEND, available_backends
from .scenario import (
    FIRST_ORDER_LAG,
    CurrentLoopConfig,
    GridCell,
    NumericAbort,
    ObserverRun,
    ScenarioConfig,
    ScenarioResult,
    StabilitySettings,
    WindupWarning,
    cell_certificate,
    run_grid,
    run_observer,
    run_scenario,
    scalar_config,
)
from .telescope import (
    SIDEREAL_RATE,
    TELESCOPE_GAINS,
    TelescopeRun,
    current_loop_derivative,
    run_telescope,
    sat,
    simulate_current_loop,
    telescope_config,
)

__all__ = [
    "BACKEND", "available_backends", "ClosedLoop", "closed_loop_jacobian", "integrate_generic",
    "FIRST_ORDER_LAG", "CurrentLoopConfig", "GridCell", "NumericAbort", "ObserverRun",
    "ScenarioConfig", "ScenarioResult", "StabilitySettings", "WindupWarning", "cell_certificate",
    "run_grid", "run_observer", "run_scenario", "scalar_config",
    "SIDEREAL_RATE", "TELESCOPE_GAINS", "TelescopeRun", "current_loop_derivative", "run_telescope", "sat",
    "simulate_current_loop", "telescope_config",
]
