"""The nonconvex scalar regularizer used by the nonconvex chains.

    Upsilon_r(x) = 120 int_1^x t^2 (t - 1) / (1 + (t/r)^2) dt

Values come from the partial-fraction antiderivative
t^2/2 - t - (r^2/2) log(t^2 + r^2) + r atan(t/r) (scaled by 120 r^2), with a
power series in (t/r)^2 where that form cancels badly.  Higher derivatives
are exact rational functions.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, optimize

from .. import kernels
from ..errors import ContractError


@dataclass(frozen=True)
class UpsilonParams:
    r: float = 1.0
    nu: float = 1.0

    def __post_init__(self):
        if self.r < 1:
            raise ContractError("r must be >= 1")
        if not (0 < self.nu <= 1):
            raise ContractError("nu must lie in (0, 1]")


def upsilon(x, r=1.0):
    """Regularizer value; scalar in, scalar out."""
    if r < 1:
        raise ContractError("r must be >= 1")
    out = kernels.upsilon(np.atleast_1d(np.asarray(x, dtype=float)), float(r))
    return float(out[0]) if np.ndim(x) == 0 else out.reshape(np.shape(x))


def upsilon_deriv(x, r=1.0, order=1):
    """Derivative of the regularizer of the given order (order 0 is the value)."""
    if order == 0:
        return upsilon(x, r)
    xa = np.asarray(x, dtype=float)
    if order == 1:
        out = kernels.upsilon_d1(np.atleast_1d(xa), float(r))
    elif order == 2:
        out = kernels.upsilon_d2(np.atleast_1d(xa), float(r))
    else:
        num, m = _rational_derivative(float(r), order)
        out = num(np.atleast_1d(xa)) / (np.atleast_1d(xa) ** 2 + r * r) ** m
    return float(out[0]) if xa.ndim == 0 else out.reshape(xa.shape)


@lru_cache(maxsize=None)
def _rational_derivative(r, order):
    """(N, m) with Upsilon^(order) = N(x) / (x^2 + r^2)^m."""
    q = Polynomial([r * r, 0.0, 1.0])
    dq = q.deriv()
    num = Polynomial([0.0, 0.0, -120.0 * r * r, 120.0 * r * r])
    m = 1
    for _ in range(order - 1):
        num = num.deriv() * q - m * num * dq
        m += 1
    return num, m


def upsilon_quad(x, r=1.0):
    """Adaptive-quadrature value, used only to cross-check the closed form."""
    val, _ = integrate.quad(lambda t: t * t * (t - 1.0) / (1.0 + (t / r) ** 2), 1.0, x,
                            epsabs=1e-13, epsrel=1e-13, limit=200)
    return 120.0 * val


def _sup_abs(fn, lo=-40.0, hi=40.0, n=400_001):
    xs = np.linspace(lo, hi, n)
    v = np.abs(fn(xs))
    i = int(np.argmax(v))
    a, b = xs[max(i - 1, 0)], xs[min(i + 1, n - 1)]
    res = optimize.minimize_scalar(lambda t: -abs(float(fn(np.array([t]))[0])), bounds=(a, b),
                                   method="bounded", options={"xatol": 1e-12})
    return max(float(v[i]), -float(res.fun))


@lru_cache(maxsize=None)
def ell_constant(q):
    """Smallest l_q with the q-th derivative of Upsilon_r being r^{3-q} l_q
    Lipschitz for every r >= 1.

    With s = x/r, Upsilon_r^{(q+1)}(x) / r^{3-q} = 120 [phi1^{(q)}(s) - phi2^{(q)}(s)/r]
    for phi1 = s^3/(1+s^2), phi2 = s^2/(1+s^2); being affine in 1/r, its sup
    over r >= 1 is attained at r = 1 or r -> infinity.
    """
    if q < 1:
        raise ContractError("q must be >= 1")
    at_one = _sup_abs(lambda x: upsilon_deriv(x, 1.0, q + 1))
    phi1 = Polynomial([0.0, 0.0, 0.0, 120.0])
    dq = Polynomial([0.0, 2.0])
    qq = Polynomial([1.0, 0.0, 1.0])
    num, m = phi1, 1
    for _ in range(q):
        num = num.deriv() * qq - m * num * dq
        m += 1
    at_inf = _sup_abs(lambda s: num(s) / (1.0 + s * s) ** m)
    # the q = 1 limits at |x| -> infinity are 120 r^2 and 120, both below the interior sup
    return max(at_one, at_inf)


@lru_cache(maxsize=None)
def upsilon_sup_d2(r):
    """sup_x |Upsilon_r''(x)| for this particular r."""
    return _sup_abs(lambda x: upsilon_deriv(x, r, 2), lo=-40.0 * r, hi=40.0 * r)
