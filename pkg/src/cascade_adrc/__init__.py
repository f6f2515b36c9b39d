"""ADRC with unmodeled first-order input dynamics: simulation and Lyapunov certification."""

from .control import CompensationMode, ControlOutput, ControllerGains, control_derivative_analytic, feedback
from .model import (
    CallableComponent,
    CallableDisturbance,
    DisturbanceBounds,
    ParametricDisturbance,
    PlantModel,
    ReferenceTrajectory,
    TanhFriction,
    ZeroComponent,
    plant_derivative,
    sine_reference,
    tracking_error,
)
from .observer import ObserverGains, build_C0, build_C1, build_Ho, observation_error_derivative, observer_derivative
from .scaling import (
    ScaledSystem,
    ScalingParams,
    delta,
    scale_errors,
    scale_gains,
    scaled_error_derivatives,
    unscale_gains,
    verify_scaling_identities,
)
from .stability import (
    LyapunovPair,
    StabilityReport,
    assemble_QY1,
    certify,
    feasible_sets,
    lyapunov_measures,
    perturbation_bounds,
    solve_lyapunov,
    vdot_decomposition_check,
)

__version__ = "0.1.0"
