"""luq: divergence-based uncertainty quantification for SDE model reduction."""
__version__ = "0.1.0"

from .bounds import (BoundReport, Observable, bound_minus, bound_plus, chapman_robbins, csiszar_tv_bound,
                     information_bounds, linearized_bound, representation_bound)
from .divergence import CATALOG_NAMES, PhiFunction, catalog, conjugate_numeric, divergence
from .errors import (CapabilityError, GridMismatchError, InfiniteDivergenceError, LuqError, SimulationError,
                     StabilityError)
from .ftdr import ftdr, ftdr_bound_check, ftdr_field, pathspace_marginal_bound
from .grid import DiscreteDistribution, Grid, GridDensity, gaussian_density
from .kolmogorov import conditional, effective_coefficients, fpe_solve, kde_estimate, marginalize
from .reconstruction import divergence_bound_reconstruction, tensor_pseudo_inverse, theta_field
from .sde import Ensemble, RngSpec, SdeModel, integrate_em
from .slowfast import SlowFastParams, compare_reductions
