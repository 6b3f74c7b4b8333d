"""Coupling coefficients (a_K, b_K) that make the reduced coupling term a
scaled chain quadratic."""
from functools import lru_cache

import numpy as np
from scipy import linalg

from ..core import spd_factor
from ..errors import ContractError
from .chains import chain_matrix


def subchain_matrix(K):
    """I/K^2 + A_K, the Hessian of one lower-level sub-chain."""
    return np.eye(K) / K**2 + chain_matrix(K)


def b_first_row(K):
    """First row of B = (I/K^2 + A_K)^{-1}, from a dense SPD solve."""
    fac = spd_factor(subchain_matrix(K))
    e1 = np.zeros(K)
    e1[0] = 1.0
    return linalg.cho_solve(fac, e1)


@lru_cache(maxsize=None)
def ab_coefficients(K, allow_small=False):
    """(a_K, b_K) with a_K = (1 - B_11/B_1K)/K and b_K = K/B_1K."""
    K = int(K)
    if K < 10 and not allow_small:
        raise ContractError("ab_coefficients needs K >= 10")
    if K < 2:
        raise ContractError("K must be >= 2")
    row = b_first_row(K)
    return float((1.0 - row[0] / row[-1]) / K), float(K / row[-1])
