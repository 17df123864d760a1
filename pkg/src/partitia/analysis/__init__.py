"""Theory numerics, limit-law references and ensemble statistics."""

from .cramer import (CramerData, DropletShift, coefficients_from_cumulants, cramer_series, droplet_shift,
                     legendre_fit, truncation_order)
from .reference import (GammaSeriesReference, PoissonClusterReference, StableReference, b_coefficient,
                        empirical_log_laplace)
from .stats import CondensateStats, GofResult, chi2_gof, extract_stats, ks_test, total_variation
from .theory import (DensitySeries, condensate_fraction_theory, free_energy_limit, sigma_c, solve_activity,
                     typical_limits)
