"""Submonolayer deposition with critical cluster size n: exact representation,
similarity profiles and convergence diagnostics."""

from .closedform import (I1, I2, S3, S4, ApplicabilityError, DegenerateGeometryError,
                         ScalingPoint, c_tilde, delta_j, j_star, log_sum,
                         poisson_weight_log, scaling_point, split_sum_total)
from .diagnostics import (RateFit, J_term, check_lemma_rates, decomposition, fit_rate,
                          g_factor, phi_continuous, prefactor_P, final_constant_series)
from .kinetics import (MonomerTrajectory, TruncatedSolution, c1_asymptotic, c1_tilde,
                       fn_correction, solve_full_truncated, solve_monomer_bulk,
                       solve_triangular_tau)
from .model import (Explicit, InitialData, ModelParams, MonomerOnly, PowerLaw,
                    ValidationError, make_explicit, make_power_law, monomer_only, nu0)
from .profiles import phi1, phi2, phi2_at_zero, profile_table, scaled_observable
from .quadrature import QuadratureError, QuadratureSpec, quad_finite

__version__ = "0.1.0"
