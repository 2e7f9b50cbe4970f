"""Numerical verification of functional Santaló-type inequalities.

Grid-based convex conjugates, log-concave measures in one dimension,
maximal-correlation transport costs and report-producing verifiers.
"""

from .convex_core import (
    ConvexGridFunction,
    DegenerateFunctionError,
    GridFunction,
    conjugate_at,
    inf_convolution,
    legendre_transform,
    moreau_yosida,
    young_gap,
)
from .inequalities import (
    AdmissibilityError,
    UnconditionalPotential,
    VerificationReport,
    basic_identity_residual,
    chebyshev_pointwise_bound,
    correlation_check,
    et_deficit,
    moreau_conjugate_identity,
    profile_inequality_gap,
    santalo_product,
    unconditional_verify,
    weighted_product_gap,
)
from .measures import (
    LogConcaveMeasure,
    Profile,
    QuantileMeasure,
    TailError,
    entropy,
    essential_continuity_check,
    measure_from_profile,
    moment_measure,
    normalize,
    profile,
)
from .transport import (
    Coupling,
    DiscreteMeasure,
    brute_force_cost,
    dual_feasibility_gap,
    moment_pair_cost,
    potential_pair_cost,
    quantile_correlation,
)

__version__ = "0.1.0"
