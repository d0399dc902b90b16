"""Finite element laboratory for -div(A grad u) = sigma / u^lambda with measure data."""

from .errors import ConfigError, SolverError
from .grid import (FeFunction, Mesh, build_interval_mesh, build_mesh, build_square_mesh,
                   h1_seminorm, l2_norm, p1_interpolate)
from .homogenization import (ConvergenceTable, OscillatingFamily, fit_effective_coefficient,
                             h_limit_layered, layered_coefficient, perturbed_measure_family,
                             run_h_convergence)
from .measures import (DiscreteMeasure, abs_diff, atom_measure, boundary_power_density,
                       density_measure, dhr_weighted_norm, truncate_to_core)
from .operators import (CoefficientField, SparseSpdOperator, assemble_lumped_mass,
                        assemble_stiffness, check_ellipticity, solve_spd)
from .potential import (EnergyReport, cov_energy, d_lambda, direct_trace_sup, energy_report,
                        green_potential, h_minus1_norm, linear_solution,
                        potential_weighted_measure, trace_norm)
from .singular import SolveReport, SolverOptions, energy_J, solve_singular, verify_bounds

__version__ = "0.1.0"
