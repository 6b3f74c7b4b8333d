"""Single-level zero-chains: the nonconvex chain with the Upsilon regularizer
and its convex (quadratic) counterpart."""
import numpy as np

from .. import kernels
from ..errors import ContractError


def nc_chain(x, nu=1.0, r=1.0, n_reg=None):
    """Value and gradient of the nonconvex chain

        sqrt(nu)/2 (x_1 - 1)^2 + 1/2 sum_{i>=2} (x_i - x_{i-1})^2 + nu sum_{i<=n_reg} Upsilon_r(x_i)

    ``n_reg`` defaults to T - 1 (the last coordinate carries no regularizer).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ContractError("nc_chain needs a vector of dimension >= 2")
    if r < 1 or not (0 < nu <= 1):
        raise ContractError("need r >= 1 and nu in (0, 1]")
    T = x.size
    n_reg = T - 1 if n_reg is None else int(n_reg)
    val, grad = kernels.nc_chain(np.ascontiguousarray(x), float(nu), float(r), n_reg)
    return float(val), np.asarray(grad)


def convex_chain(x):
    """Value and gradient of 1/2 (x_1 - 1)^2 + 1/2 sum_i (x_i - x_{i+1})^2."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ContractError("convex_chain needs a nonempty vector")
    d = np.diff(x)
    val = 0.5 * (x[0] - 1.0) ** 2 + 0.5 * float(d @ d)
    grad = np.zeros_like(x)
    grad[0] = x[0] - 1.0
    grad[:-1] -= d
    grad[1:] += d
    return val, grad


def convex_chain_matrix(T):
    """Hessian A_T + e_1 e_1^T of the convex chain."""
    A = chain_matrix(T)
    A[0, 0] += 1.0
    return A


def chain_matrix(K):
    """Path-graph Laplacian A_K (1 and 1 in the corners, 2 inside)."""
    if K < 1:
        raise ContractError("K must be >= 1")
    A = np.diag(np.full(K, 2.0)) - np.eye(K, k=1) - np.eye(K, k=-1)
    A[0, 0] = A[-1, -1] = 1.0
    if K == 1:
        A[0, 0] = 0.0
    return A


def prog(x, tol=0.0):
    """Largest 1-based index i with |x_i| > tol, 0 when there is none."""
    if tol < 0:
        raise ContractError("tol must be >= 0")
    nz = np.flatnonzero(np.abs(np.asarray(x, dtype=float)) > tol)
    return int(nz[-1]) + 1 if nz.size else 0
