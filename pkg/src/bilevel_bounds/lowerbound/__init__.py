"""Hard-instance generators, chain functions and lower-bound predictions."""
from .chains import chain_matrix, convex_chain, convex_chain_matrix, nc_chain, prog
from .coefficients import ab_coefficients, b_first_row, subchain_matrix
from .instances import (
    ChainLayout,
    LowerBoundPrediction,
    NcscHardInstance,
    build_csc,
    build_ncsc,
    build_scsc,
    ell_bar_1,
    hyperobjective_ncsc,
    ncsc_parameters_for_layout,
    scsc_ratio,
)
from .io import load_instance, save_instance
from .stochastic import (
    SpikeNoise,
    StochasticHardInstance,
    build_stochastic,
    phi,
    psi,
    spike_chain,
)
from .upsilon import UpsilonParams, ell_constant, upsilon, upsilon_deriv, upsilon_quad

__all__ = [
    "ChainLayout", "LowerBoundPrediction", "NcscHardInstance", "SpikeNoise", "StochasticHardInstance",
    "UpsilonParams", "ab_coefficients", "b_first_row", "build_csc", "build_ncsc", "build_scsc",
    "build_stochastic", "chain_matrix", "convex_chain", "convex_chain_matrix", "ell_bar_1", "ell_constant",
    "hyperobjective_ncsc", "load_instance", "nc_chain", "ncsc_parameters_for_layout", "phi", "prog", "psi",
    "save_instance", "scsc_ratio", "spike_chain", "subchain_matrix", "upsilon", "upsilon_deriv", "upsilon_quad",
]
