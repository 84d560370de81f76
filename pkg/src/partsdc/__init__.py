"""Partitioned spectral deferred correction solvers for coupled systems."""

from .errors import (BracketError, CollocationConvergenceError, ConfigError,
                     DimensionMismatchError, NewtonDivergenceError,
                     PartSdcError, SingularMatrixError, SweepDivergenceError)
from .implicit import NewtonConfig, lu_solve, newton_solve, spectral_radius
from .quadrature import (ALL_SCHEME_NAMES, LowOrderVariant, SchemeName,
                         SdcScheme, collocation_defect, make_scheme,
                         weights_from_nodes)
from .system import (CoupledSystem, JacobianCheck, PartitionedState, concat,
                     validate_jacobian)
from .sweep import (CollocationResult, MonolithicStepper, PartitionedStepper,
                    StepResult, SweepWorkspace, Trajectory, collocation_solve,
                    integrate, sdc_step_monolithic, sdc_step_partitioned)
from .stability import (LinearPartition, StabilityReport, TheoremReport,
                        bisect_dt_max, empirical_update_matrix,
                        fixed_point_iteration_matrix,
                        forward_euler_update_matrix,
                        measure_fixed_point_contraction,
                        sample_diagonally_dominant, scan_dt_max,
                        sdc1_update_matrix, theorem_check)
from .problems import (AdrProblem, AdrSystem, LinearDaeProblem,
                       LinearDaeSystem, ScalarRowsLinearSystem,
                       StiffOdeProblem, StiffOdeSystem, make_adr_system,
                       make_dae_system, make_stiff_system, save_species_grid,
                       stiff_exact)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
