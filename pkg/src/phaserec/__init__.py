"""Phase-field tumour growth: forward solvers and initial-state reconstruction.

The package couples a tumour phase field, a nutrient concentration, and a
tissue PSA level through a reaction-diffusion system discretised with C1
quadratic B-splines in space and the generalized-alpha method in time.
Two Landweber-type schemes recover the initial tumour configuration from a
single terminal measurement.
"""

from .errors import (ConfigError, DegenerateMeasurementError, DomainError,
                     PreconditionerError, SolverError, SpaceMismatchError,
                     StepError, StepSizeSingularityError)
from .integrator import NewtonConfig, TimeConfig, Trajectory, solve, step
from .linalg import GmresConfig, GmresResult, gmres_solve
from .metrics import MetricsReport, metrics, sample_grid, tumour_volume
from .model import ModelParams, initial_laws
from .reconstruction import (ReconConfig, ReconRecord, ReconResult,
                             ReferenceFields, adaptive_gd, agd_initial_step,
                             agd_step_size, check_convergence, initial_guess,
                             landweber_fixed, landweber_sd, truncate_phi0)
from .splines import (Field, QuadratureRule, SplineSpace, evaluate,
                      evaluate_gradient, l2_inner_product, l2_norm, l2_project)
from .synthetic import (GroundTruthSpec, add_noise, make_ground_truth,
                        tanh_ellipse, transfer)
from .systems import (Assembler, StateTriple, SystemKind, assemble_residual,
                      assemble_tangent)

__version__ = "0.1.0"
