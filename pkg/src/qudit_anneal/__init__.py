"""Spectral simulator for adiabatic quantum optimization with multi-level
(qudit) devices: two-state vs four-state Hamiltonians, minimum-gap sweeps,
spin-glass ensembles, and rf-SQUID parameter extraction."""

__version__ = "0.1.0"

from .ensemble import (ComparisonRecord, EnsembleConfig, PAPER_VALUE_SET,
                       filter_degenerate, generate_instance, run_comparison,
                       run_comparison_on)
from .model import (AnnealSchedule, ConsistencyError, IsingProblem,
                    QuditParams, ScheduleError, SchedulePoint,
                    SingleQuditParams, TunnelingHamiltonian, build_four_state,
                    build_two_state, default_schedule, load_instance,
                    qudit_to_effective_matrix, save_instance,
                    tunneling_to_qudit)
from .operators import HamiltonianOperator, PauliTerm, apply_term, matvec, to_dense
from .spectrum import (ClassicalGround, ConvergenceError, EigenResult,
                       GapSweepResult, classical_ground, gap_at,
                       lowest_eigenpairs, min_gap_sweep)
from .squid import (BistabilityError, DeviceConfig, FluxGrid, LocalizedBasis,
                    SquidParams, build_schedule, classical_minima,
                    extract_at_bias, extract_tunneling, load_device_config,
                    localize, potential, solve_grid)

__all__ = [
    "__version__",
    "PauliTerm", "HamiltonianOperator", "apply_term", "matvec", "to_dense",
    "IsingProblem", "SchedulePoint", "AnnealSchedule", "QuditParams",
    "TunnelingHamiltonian", "SingleQuditParams", "ScheduleError",
    "ConsistencyError", "build_two_state", "build_four_state",
    "tunneling_to_qudit", "qudit_to_effective_matrix", "default_schedule",
    "load_instance", "save_instance",
    "EigenResult", "GapSweepResult", "ClassicalGround", "ConvergenceError",
    "lowest_eigenpairs", "gap_at", "min_gap_sweep", "classical_ground",
    "PAPER_VALUE_SET", "EnsembleConfig", "ComparisonRecord",
    "generate_instance", "filter_degenerate", "run_comparison",
    "run_comparison_on",
    "SquidParams", "FluxGrid", "LocalizedBasis", "DeviceConfig",
    "BistabilityError", "potential", "classical_minima", "solve_grid",
    "localize", "extract_tunneling", "extract_at_bias", "build_schedule",
    "load_device_config",
]
