"""Central tolerance record.

Every numeric threshold used by a verdict lives here so that a run can be
reproduced from its (space, seed, budget, tolerances) tuple alone.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class Tolerances:
    unit: float = 1e-12            # ||radial_project(x)|| == 1
    homogeneity: float = 1e-12
    triangle: float = 1e-12
    lattice: float = 1e-12         # ||g||_E <= ||f||_E when |g| <= |f|
    holder: float = 1e-9           # <phi, x> <= ||phi||_* ||x||
    dual_cross_check: float = 1e-8 # closed form vs direct maximisation
    feasibility: float = 1e-9      # witness constraints
    unit_input: float = 1e-9       # "x must be a unit vector" preconditions
    norming: float = 1e-8          # norming functional residuals
    duality_gap: float = 5e-3      # sampled sup vs dual norm
    sc_gap: float = 1e-9           # ||x + y|| >= 2 - sc_gap means "not SC"
    positivity: float = 1e-9       # modulus > positivity means "positive"
    day_separation: float = 1e-6   # ||f - g|| <= 2 eps + day_separation
    day_modulus: float = 1e-6      # delta_Y(2 eps (1 + 0.01)) >= tau - day_modulus
    day_slack: float = 1e-6        # relative slack in the tau selection
    trace: float = 1e-9            # proof-trace inequality margins
    reduction: float = 1e-12

    def as_dict(self) -> dict:
        return asdict(self)


DEFAULT_TOL = Tolerances()
