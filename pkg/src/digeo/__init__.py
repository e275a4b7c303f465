"""Numerical geometry of direct integrals of normed spaces over finite measure spaces."""

__version__ = "0.1.0"

from .config import DEFAULT_TOL, Tolerances
from .direct_integral import (
    DirectIntegralSpace,
    construct_norming_functional,
    di_dual_norm,
    di_duality_pairing,
    di_norm,
    embed_fiber,
    equalize_pointwise_norms,
    verify_duality_isometry,
)
from .kothe import KotheSpace, kothe_dual_norm, kothe_duality_pairing, kothe_norm
from .modulus import (
    ModulusCurve,
    global_modulus_estimate,
    local_modulus_estimate,
    midpoint_modulus_estimate,
    modulus_curve,
    strong_modulus_estimate,
)
from .spaces import MeasureSpace, NormSpec, dual_norm_eval, norm_eval, radial_project, sphere_sample
from .verdict import PropertyVerdict
