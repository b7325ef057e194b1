"""Numerics for the index Whittaker transform and its convolution structure."""

__version__ = "0.1.0"

from .errors import (BracketError, CalibrationError, CostCapError, CoverageError, DivergenceError, DomainError,
                     NumericalError, PoleError, QuadratureError, TailEstimateError, WhitconvError)
from .specfun import DEFAULT_QUAD, Order, Params, QuadConfig, bW, bW_dx, eta_kernel, parabolic_cylinder_D
from .spectral import (BumpFunction, DiscreteMeasure, GridDensity, forward_transform, inverse_transform,
                       kernel_matrix, m_weight, plancherel_pair, rho_density, transform_of_measure)
from .convolve import (GrowthEnvelope, conv_cdf, convolve_measures, convolve_point_masses, kernel_mass,
                       oplus_sample, q_kernel, translate)
from .infdiv import (ExponentFn, build_exponent, compound_poisson_series, compound_poisson_transform,
                     gaussian_criterion, semigroup_density)
from .processes import (PathEnsemble, martingale_check, quadratic_variation_check, random_walk,
                        simulate_diffusion, simulate_levy, transition_law)
from .moments import (MomentTable, NormalizedPair, apply_L, growth_check, modified_moment, normalized_pair,
                      phi_tilde, phi_tilde1_closed)
