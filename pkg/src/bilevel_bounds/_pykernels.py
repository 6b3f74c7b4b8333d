"""Pure-numpy reference implementation of the hot kernels.

Mirrors ``_ckernels.pyx`` function for function; ``kernels.py`` picks one at
import time.
"""
import numpy as np

# series expansion of the regularizer is used when (x/r)^2 and (1/r)^2 are
# both below this, where the closed form loses digits to cancellation
_SERIES_CUTOFF = 0.05
_SERIES_TERMS = 16


def _upsilon_series(x, s):
    # 120 * sum_k (-s)^k * int_1^x t^(2k+2) (t-1) dt
    out = np.zeros_like(x)
    coef = 1.0
    for k in range(_SERIES_TERMS):
        a = 2 * k + 4
        out += coef * ((x**a - 1.0) / a - (x ** (a - 1) - 1.0) / (a - 1))
        coef *= -s
    return 120.0 * out


def _upsilon_closed(x, r):
    r2 = r * r
    d = 0.5 * (x * x - 1.0) - (x - 1.0)
    d -= 0.5 * r2 * np.log1p((x * x - 1.0) / (1.0 + r2))
    d += r * (np.arctan(x / r) - np.arctan(1.0 / r))
    return 120.0 * r2 * d


def upsilon(x, r):
    """Elementwise regularizer value 120 int_1^x t^2(t-1)/(1+(t/r)^2) dt."""
    x = np.asarray(x, dtype=float)
    s = 1.0 / (r * r)
    use_series = s * np.maximum(x * x, 1.0) <= _SERIES_CUTOFF
    if not np.any(use_series):
        return _upsilon_closed(x, r)
    out = np.empty_like(x)
    out[use_series] = _upsilon_series(x[use_series], s)
    rest = ~use_series
    out[rest] = _upsilon_closed(x[rest], r)
    return out


def upsilon_d1(x, r):
    x = np.asarray(x, dtype=float)
    return 120.0 * x * x * (x - 1.0) / (1.0 + (x / r) ** 2)


def upsilon_d2(x, r):
    x = np.asarray(x, dtype=float)
    r2 = r * r
    q = x * x + r2
    return 120.0 * r2 * (x**4 + 3.0 * r2 * x * x - 2.0 * r2 * x) / (q * q)


def nc_chain(x, nu, r, n_reg):
    """Value and gradient of the nonconvex chain.

    sqrt(nu)/2 (x_1 - 1)^2 + 1/2 sum_{i>=2} (x_i - x_{i-1})^2
    + nu sum_{i <= n_reg} Upsilon_r(x_i)
    """
    x = np.asarray(x, dtype=float)
    snu = np.sqrt(nu)
    d = np.diff(x)
    val = 0.5 * snu * (x[0] - 1.0) ** 2 + 0.5 * float(d @ d)
    grad = np.zeros_like(x)
    grad[0] = snu * (x[0] - 1.0)
    grad[1:] += d
    grad[:-1] -= d
    if n_reg > 0:
        xr = x[:n_reg]
        val += nu * float(np.sum(upsilon(xr, r)))
        grad[:n_reg] += nu * upsilon_d1(xr, r)
    return val, grad


def agd_quadratic(A, c, z0, L, mu, K, zstar=None):
    """Nesterov AGD on h(z) = 1/2 z'Az - c'z with step 1/L.

    Returns (z_K, errs) where errs[k] = ||z_k - zstar||^2 for k = 0..K, or an
    empty array when zstar is None.
    """
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    z = np.array(z0, dtype=float)
    sk = np.sqrt(L / mu)
    mom = (sk - 1.0) / (sk + 1.0)
    zt = z.copy()
    track = zstar is not None
    errs = np.empty(K + 1 if track else 0)
    if track:
        e = z - zstar
        errs[0] = e @ e
    for k in range(K):
        zn = zt - (A @ zt - c) / L
        zt = zn + mom * (zn - z)
        z = zn
        if track:
            e = z - zstar
            errs[k + 1] = e @ e
    return z, errs


def gd_quadratic(A, c, z0, L, K, zstar=None):
    """Gradient descent with step 1/L on 1/2 z'Az - c'z."""
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    z = np.array(z0, dtype=float)
    track = zstar is not None
    errs = np.empty(K + 1 if track else 0)
    if track:
        e = z - zstar
        errs[0] = e @ e
    for k in range(K):
        z = z - (A @ z - c) / L
        if track:
            e = z - zstar
            errs[k + 1] = e @ e
    return z, errs
