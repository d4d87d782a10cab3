"""Quantum optimal control by Krotov's method with constrained updates."""

__version__ = "0.1.0"

from .analysis import (
    LandscapeGrid,
    Spectrum,
    band_filter_pulse,
    landscape_scan,
    population_trace,
    pulse_spectrum,
)
from .errors import (
    ConfigError,
    MonotonicityError,
    NumericsError,
    PropagationError,
)
from .krotov import (
    OptimizationProblem,
    OptimizationResult,
    SpectralConstraint,
    StateConstraint,
    StopRule,
    evaluate_functional,
    optimize,
    sine_squared_shape,
)
from .model import (
    LevelSystem,
    PulseParametrization,
    SubspaceProjector,
    TargetSpec,
    anharmonic_ladder_table,
    build_sodium_system,
    build_two_manifold_system,
    gaussian_guess_pulse,
    load_level_system,
    parametrized_field,
)
from .propagation import Pulse, StateTrajectory, TimeGrid, propagate
from .spectral import (
    FilterBank,
    FredholmSolver,
    GaussianFilter,
    check_admissibility,
    kernel_penalty,
    kernel_spectrum,
    kernel_time,
)

__all__ = [
    "ConfigError",
    "MonotonicityError",
    "NumericsError",
    "PropagationError",
    "FilterBank",
    "FredholmSolver",
    "GaussianFilter",
    "LandscapeGrid",
    "LevelSystem",
    "OptimizationProblem",
    "OptimizationResult",
    "Pulse",
    "PulseParametrization",
    "SpectralConstraint",
    "Spectrum",
    "StateConstraint",
    "StateTrajectory",
    "StopRule",
    "SubspaceProjector",
    "TargetSpec",
    "TimeGrid",
    "anharmonic_ladder_table",
    "band_filter_pulse",
    "build_sodium_system",
    "build_two_manifold_system",
    "check_admissibility",
    "evaluate_functional",
    "gaussian_guess_pulse",
    "kernel_penalty",
    "kernel_spectrum",
    "kernel_time",
    "landscape_scan",
    "load_level_system",
    "optimize",
    "parametrized_field",
    "population_trace",
    "propagate",
    "pulse_spectrum",
    "sine_squared_shape",
    "__version__",
]
