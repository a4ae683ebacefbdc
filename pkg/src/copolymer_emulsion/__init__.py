"""Phase diagram of a directed copolymer in a random oil-water emulsion."""

from .entropy import (
    DomainError,
    ResourceError,
    count_block_paths,
    count_interface_paths,
    entropy_G,
    hat_kappa,
    kappa_block,
    kappa_diag,
    kappa_diag_derivatives,
)
from .interface import EstimatorConfig, InteractionPoint, in_annealed_region, phi_I
from .frequencies import FrequencyConfig, FrequencyTriple, rho_star_estimate
from .solver import solve_f_D1, solve_f_D2, solve_f_full, solve_f_L1
from .phases import alpha_star, beta_c1, beta_c2, classify, lower_bound_curve

__all__ = [
    "DomainError", "ResourceError", "count_block_paths", "count_interface_paths", "entropy_G",
    "hat_kappa", "kappa_block", "kappa_diag", "kappa_diag_derivatives", "EstimatorConfig",
    "InteractionPoint", "in_annealed_region", "phi_I", "FrequencyConfig", "FrequencyTriple",
    "rho_star_estimate", "solve_f_D1", "solve_f_D2", "solve_f_full", "solve_f_L1",
    "alpha_star", "beta_c1", "beta_c2", "classify", "lower_bound_curve",
]
