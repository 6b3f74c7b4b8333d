"""Stochastic hard instance: a randomly rotated, softly projected
probability-spike chain in the upper level and a scaled identity lower level.

    fbar_s(v)  = -Psi(1) Phi(v_1) + sum_{i>=2} [Psi(-v_{i-1}) Phi(-v_i) - Psi(v_{i-1}) Phi(v_i)]
    fbar_rs(x) = fbar_s(U' rho(x)) + |x|^2 / 10,   rho(x) = x / sqrt(1 + |x|^2 / R^2)

The noisy gradient multiplies coordinate prog(v) + 1 of grad fbar_s by xi/p,
xi ~ Bernoulli(p).  The bilevel pair is f(x, z) = (L1 beta^2/155) fbar_rs(z/beta)
and g(x, z) = mu_y/2 |z|^2 - L1 <x, z>, so z*(x) = kappa x.
"""
import math

import numpy as np
from scipy import special

from ..core import BilevelProblem, FOResponse, QuadraticLowerLevel, SmoothnessProfile, as_vec
from ..errors import ContractError, RegimeError
from .chains import prog
from .instances import LowerBoundPrediction

_SQRT_E = math.sqrt(math.e)
_PHI_SCALE = math.sqrt(2.0 * math.pi * math.e)
LIPSCHITZ = 155.0
VARIANCE_CONST = 23.0


def psi(x):
    """exp(1 - 1/(2x-1)^2) for x > 1/2, else 0."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = x > 0.5
    out[m] = np.exp(1.0 - 1.0 / (2.0 * x[m] - 1.0) ** 2)
    return out if out.ndim else float(out)


def psi_d1(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    m = x > 0.5
    t = 2.0 * x[m] - 1.0
    out[m] = np.exp(1.0 - 1.0 / t**2) * 4.0 / t**3
    return out if out.ndim else float(out)


def phi(x):
    """sqrt(e) times the integral of exp(-t^2/2) up to x."""
    return _PHI_SCALE * 0.5 * special.erfc(-np.asarray(x, dtype=float) / math.sqrt(2.0))


def phi_d1(x):
    return _SQRT_E * np.exp(-0.5 * np.asarray(x, dtype=float) ** 2)


def _psi_pair(x):
    """psi and its derivative, sharing the exponential."""
    val, der = np.zeros_like(x), np.zeros_like(x)
    m = x > 0.5
    t = 2.0 * x[m] - 1.0
    e = np.exp(1.0 - 1.0 / t**2)
    val[m] = e
    der[m] = e * 4.0 / t**3
    return val, der


def spike_chain(v):
    """Value and exact gradient of fbar_s."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 1:
        raise ContractError("need a nonempty vector")
    prev, cur = v[:-1], v[1:]
    n = prev.size
    ps, pd = _psi_pair(np.concatenate([prev, -prev]))
    ph = phi(np.concatenate([v[:1], cur, -cur]))
    phd = phi_d1(v)  # even function, so phi_d1(-cur) = phi_d1(cur)
    ps_p, ps_m, pd_p, pd_m = ps[:n], ps[n:], pd[:n], pd[n:]
    ph_c, ph_m = ph[1:n + 1], ph[n + 1:]
    p1 = psi(1.0)
    val = -p1 * float(ph[0]) + float(np.sum(ps_m * ph_m - ps_p * ph_c))
    g = np.zeros_like(v)
    g[0] = -p1 * phd[0]
    g[1:] -= (ps_m + ps_p) * phd[1:]
    g[:-1] -= pd_m * ph_m + pd_p * ph_c
    return val, g


def spike_multiplier(v, p, rng, tol=0.0):
    """Per-coordinate multiplier 1 + 1{j = prog(v)+1}(xi/p - 1)."""
    m = np.ones(v.size)
    j = prog(v, tol)
    if j < v.size:
        xi = rng.random() < p
        m[j] = (1.0 if xi else 0.0) / p
    return m


class SoftProjection:
    """rho(x) = x / sqrt(1 + |x|^2 / R^2) and its (symmetric) Jacobian."""

    def __init__(self, R):
        self.R = float(R)

    def __call__(self, x):
        return x / math.sqrt(1.0 + float(x @ x) / self.R**2)

    def jacobian_apply(self, x, g):
        s = 1.0 + float(x @ x) / self.R**2
        return (g - x * float(x @ g) / (self.R**2 * s)) / math.sqrt(s)


class RotatedSpikeChain:
    """fbar_rs on R^d with rotation U in Orth(d, T)."""

    def __init__(self, T, d, U, prog_tol=0.0):
        self.T, self.d = int(T), int(d)
        self.U = U
        self.rho = SoftProjection(230.0 * math.sqrt(T))
        self.prog_tol = float(prog_tol)
        self._last = (None, None)

    def _chain_at(self, x):
        # exact and noisy responses of one oracle call share the point
        key = x.tobytes()
        if self._last[0] != key:
            v = self.U.T @ self.rho(x)
            self._last = (key, (v,) + spike_chain(v))
        return self._last[1]

    def value_grad(self, x):
        _, val, gv = self._chain_at(x)
        return val + 0.1 * float(x @ x), self.rho.jacobian_apply(x, self.U @ gv) + 0.2 * x

    def noisy_grad(self, x, p, rng):
        v, _, gv = self._chain_at(x)
        gv = gv * spike_multiplier(v, p, rng, self.prog_tol)
        return self.rho.jacobian_apply(x, self.U @ gv) + 0.2 * x


def random_orthonormal(d, T, rng):
    """Haar-distributed d x T matrix with orthonormal columns."""
    if d < T:
        raise ContractError("need d >= T")
    q, r = np.linalg.qr(rng.standard_normal((d, T)))
    return q * np.sign(np.diag(r))


class StochasticHardInstance(BilevelProblem):
    """Bilevel instance with x, z in R^d and an exact quadratic lower level."""

    def __init__(self, T, d, p, beta, L1, mu_y, seed=0, sigma=0.0, Delta=float("inf"), eps=None, prog_tol=0.0):
        if not (0 < p <= 1):
            raise ContractError("p must lie in (0, 1]")
        if d < T or T < 1:
            raise ContractError("need 1 <= T <= d")
        self.T, self.d, self.p = int(T), int(d), float(p)
        self.beta, self.L1, self.mu_y = float(beta), float(L1), float(mu_y)
        self.seed, self.sigma, self.eps, self.Delta = int(seed), float(sigma), eps, float(Delta)
        self.R = 230.0 * math.sqrt(T)
        self.U = random_orthonormal(self.d, self.T, np.random.default_rng(self.seed))
        self.chain = RotatedSpikeChain(self.T, self.d, self.U, prog_tol)
        self.scale = self.L1 * self.beta**2 / LIPSCHITZ
        self.kappa = self.L1 / self.mu_y
        self.d_x = self.d_y = self.d
        self.profile = SmoothnessProfile(L=(None, self.L1, None), mu_y=self.mu_y, p=1, Delta=self.Delta)
        self.lower = QuadraticLowerLevel(self.mu_y * np.eye(self.d), -self.L1 * np.eye(self.d), np.zeros(self.d))
        self.name = "stochastic-chain"

    def f(self, x, y):
        return self.scale * self.chain.value_grad(as_vec(y, self.d) / self.beta)[0]

    def grad_f(self, x, y):
        _, g = self.chain.value_grad(as_vec(y, self.d) / self.beta)
        return np.zeros(self.d), (self.L1 * self.beta / LIPSCHITZ) * g

    def noisy_grad_f(self, x, y, rng):
        g = self.chain.noisy_grad(as_vec(y, self.d) / self.beta, self.p, rng)
        return np.zeros(self.d), (self.L1 * self.beta / LIPSCHITZ) * g

    def g(self, x, y):
        return 0.5 * self.mu_y * float(y @ y) - self.L1 * float(x @ y)

    def grad_g(self, x, y):
        return -self.L1 * np.asarray(y, float), self.mu_y * np.asarray(y, float) - self.L1 * np.asarray(x, float)

    def hvp_g(self, x, y, v):
        v = as_vec(v, self.d)
        return -self.L1 * v, self.mu_y * v

    def hyperobjective(self, x):
        x = as_vec(x, self.d)
        val, g = self.chain.value_grad(self.kappa * x / self.beta)
        return self.scale * val, (self.scale * self.kappa / self.beta) * g

    def lower_constants(self, x):
        return self.mu_y, self.mu_y

    def upper_y_smoothness(self, x):
        return self.L1

    def params(self):
        return {"regime": "stochastic", "T": self.T, "d": self.d, "p": self.p, "beta": self.beta,
                "L1": self.L1, "mu_y": self.mu_y, "seed": self.seed, "sigma": self.sigma,
                "Delta": self.Delta, "eps": self.eps, "prog_tol": self.chain.prog_tol}


class SpikeNoise:
    """Noise model for StochasticOracle: replaces grad_y f by its spiked estimate."""

    def perturb(self, problem, x, y, exact, rng):
        gx, gy = problem.noisy_grad_f(x, y, rng)
        return FOResponse(gx, gy, exact.gx_g, exact.gy_g)


def build_stochastic(L1, mu_y, sigma, Delta, eps, seed=0, d=None, prog_tol=0.0):
    """Stochastic chain instance; noise enters only through the upper-level gradient."""
    if sigma < 0:
        raise ContractError("sigma must be nonnegative")
    if not (0 < mu_y <= L1) or Delta <= 0 or eps <= 0:
        raise ContractError("need 0 < mu_y <= L1, Delta > 0, eps > 0")
    kappa = L1 / mu_y
    beta = 310.0 * eps / (L1 * kappa)
    T = int(math.floor(155.0 * Delta / (12.0 * L1 * beta**2)))
    if T < 1:
        raise RegimeError("chain length T < 1: eps too large relative to Delta")
    p = 1.0 if sigma == 0 else min(1.0, (VARIANCE_CONST * L1 * beta / (155.0 * sigma)) ** 2)
    d = 2 * T if d is None else int(d)
    inst = StochasticHardInstance(T, d, p, beta, L1, mu_y, seed=seed, sigma=sigma, Delta=Delta, eps=eps,
                                  prog_tol=prog_tol)
    val = kappa**2 * L1 * Delta / eps**2 + kappa**4 * L1 * sigma**2 * Delta / eps**4
    # queries before the spike reaches the end of the chain with probability 1/2
    n_prime = max(0, int((T - math.log(4.0)) / (2.0 * p)))
    return inst, LowerBoundPrediction(val, "stochastic", n_prime, 0, T, {"beta": beta, "p": p, "d": d})
