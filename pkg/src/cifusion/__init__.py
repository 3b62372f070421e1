"""Conservative fusion of unbiased partial state estimates.

Fuses two estimates of projections of a common state into one full-state
estimate whose reported covariance stays conservative for every admissible
error cross covariance, with provably optimal weight selection for the
determinant and trace costs, plus numerical certification machinery and a
distributed-fusion simulator.
"""

from .errors import CiFusionError
from .known_cross import (
    JointCovariance,
    KnownCrossResult,
    bar_shalom_campo,
    optimal_fusion_known_cross,
)
from .ellipsoids import (
    Ellipsoid,
    Membership,
    contains,
    covering_cross_cov,
    kahan_interpose,
    membership,
)
from .linalg import (
    LoewnerRelation,
    PsdMatrix,
    SymMatrix,
    adjugate,
    block_psd_check,
    cross_factor,
    loewner_compare,
    psd_certify,
    sqrt_psd,
)
from .optimizer import (
    Cost,
    FusionResult,
    SigmaPair,
    delta_poly_coeffs,
    delta_value,
    ku_rule,
    lower_bound_witness,
    sigma_alpha,
    solve_ci,
    solve_ci_det,
    solve_ci_trace,
)
from .problem import FusionProblem, PartialEstimate
from .simulator import NoiseSpec, Schedule, init_network, make_schedule, run_schedule
from .verifier import (
    ConservativenessCertificate,
    adversarial_x_search,
    alpha_uniqueness_check,
    lmi_certificate,
    monte_carlo_joint,
    petersen_certificate,
)

__version__ = "0.1.0"

__all__ = [
    "CiFusionError",
    "ConservativenessCertificate",
    "Cost",
    "Ellipsoid",
    "FusionProblem",
    "FusionResult",
    "JointCovariance",
    "KnownCrossResult",
    "LoewnerRelation",
    "Membership",
    "NoiseSpec",
    "PartialEstimate",
    "PsdMatrix",
    "Schedule",
    "SigmaPair",
    "SymMatrix",
    "adjugate",
    "adversarial_x_search",
    "alpha_uniqueness_check",
    "bar_shalom_campo",
    "block_psd_check",
    "contains",
    "covering_cross_cov",
    "cross_factor",
    "delta_poly_coeffs",
    "delta_value",
    "init_network",
    "kahan_interpose",
    "ku_rule",
    "lmi_certificate",
    "loewner_compare",
    "lower_bound_witness",
    "make_schedule",
    "membership",
    "monte_carlo_joint",
    "optimal_fusion_known_cross",
    "petersen_certificate",
    "psd_certify",
    "run_schedule",
    "sigma_alpha",
    "sqrt_psd",
    "solve_ci",
    "solve_ci_det",
    "solve_ci_trace",
]
