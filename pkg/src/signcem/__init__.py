"""CEM-GMsFEM for diffusion problems with sign-changing coefficients."""

from .grid import GridHierarchy, Region, build_hierarchy, local_dof_map, oversample
from .coeff import (CoefficientField, ExactSolution, SourceField, flat_interface,
                    flat_wellposed, gaussian_source, periodic_cross, periodic_square,
                    random_inclusions)
from .auxspace import AuxSpace, build_aux_space, project, solve_local_eigen, spectral_statistics
from .cem import MsBasisSet, build_all, build_basis, decay_study
from .online import assemble_online, interpolate_exact, solve_online, solve_reference
from .metrics import ErrorReport, energy_norm, error_report, l2_norm

__version__ = "0.1.0"
