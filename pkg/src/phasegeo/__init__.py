"""Mass-conserving phase-field flows with isoperimetric verification tools."""

from .grid import DomainGrid, ScalarField, integrate, make_grid
from .potential import DoubleWell, get_well, interface_constant, optimal_profile, quartic_well
from .field_ops import (OperatorWorkspace, grad_sq, laplacian_neumann,
                        poisson_neumann_zero_mean, x2_inner, x2_norm)
from .energy import EnergyReport, diffuse_energy, energy_deficit, sharp_diffuse_energy0
from .geometry import (AnalyticShape, IndicatorSet, alpha, ball,
                       first_variation_check, perimeter, quarter_disk,
                       second_variation_check, sharp_interface_field, stripe,
                       well_prepared, well_prepared_report)
from .flow import FlowConfig, TrajectoryRecord, lagrange_multiplier, run_flow, step_ch, step_nlac
from .isoperimetry import (IsoProfile, iso_profile_analytic,
                           iso_profile_exhaustive, local_iso_profile,
                           semiconcavity_check, supergradient_check,
                           taylor_check)
from .rearrangement import (Minorant, build_minorant, check_rearrangement_bounds, weighted_profile_energy,
                            rearrange, solve_weight)
from .experiments import (SlowMotionReport, dissipation_budget,
                          level_set_proposition_check, slow_motion_sweep)

__version__ = "0.1.0"
