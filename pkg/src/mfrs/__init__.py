"""Risk-sensitive mean-field LQ control numerics.

Three independent routes to the exponential-of-integral cost — a
closed-form Riccati pipeline, interacting-particle Monte Carlo, and a
degenerate Fokker-Planck grid solver — plus the validation checks that
cross-examine them.
"""

from ._kernels import active_backend, use_backend
from .checks import (CheckReport, alpha_limit_check, chi_positivity_check,
                     martingale_check, three_way_value_check)
from .errors import (BlowUpInput, CflViolation, DomainTruncationWarning,
                     EmptyBounds, EmptyTrajectory, InputError,
                     IntegrabilityViolation, MassLoss, MfrsError,
                     NonFiniteInput, NonFiniteState, NonpositiveRho)
from .fpk import (GridDensity2D, discretize_initial, solve_fpk_x, solve_fpk_xz,
                  terminal_exponential_moment)
from .hamiltonian import (HamiltonianResult, lq_hamiltonian,
                          numeric_hamiltonian, tilde_reduce)
from .lqvalue import (ApproxChiCorrection, MFLQSolution, SMPDiagnostics,
                      approx_value_small_beta, lambda_T_quadrature,
                      optimal_feedback, smp_terminal_residual)
from .models import (GenericModel, InitialLaw, LQMatrixModel, LQScalarModel,
                     Policy, RiskParams, TimeGrid, ValidationOutcome,
                     lq_scalar_generic, risk_seeking_transform, validate_model)
from .particles import (CostEstimate, ParticleEnsemble, ParticleTrajectory,
                        estimate_chi0, estimate_chi_inverse_path,
                        estimate_risk_sensitive_cost, simulate_particles,
                        step_normals)
from .riccati import (ChiRatio, RiccatiSolution, solve_matrix_riccati,
                      solve_mean_ode, solve_omega, solve_scalar_riccati)

__version__ = "0.1.0"
