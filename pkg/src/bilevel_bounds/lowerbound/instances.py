"""Deterministic hard bilevel instances built from chain functions.

The unscaled pair lives on u in R^T (upper variable) and w = (zeta, eta)
with zeta in R^T and eta = (eta^(1), ..., eta^(T-1)), eta^(i) in R^K:

    fbar(zeta, eta) = c (zeta_1/sqrt(K) - 1)^2 + nu sum_{i<=n_ups} Upsilon_r(zeta_i/sqrt(K)) + h(zeta, eta)
    h(zeta, eta)    = sum_i a/2 (zeta_i^2 + zeta_{i+1}^2) + b/2 (zeta_i eta^(i)_1 - zeta_{i+1} eta^(i)_K)
    gbar(u, zeta, eta) = |zeta|^2/(2K^2) - <u, zeta>
                         + sum_i [1/2 eta^(i)'(I/K^2 + A_K) eta^(i) - u_i eta^(i)_1 + u_{i+1} eta^(i)_K]

The lower solution is zeta* = K^2 u and, with the coefficients (a_K, b_K),
h(zeta*, eta*) = K^3/2 sum (u_i - u_{i+1})^2, so the hyper-objective is the
chain evaluated at K^{3/2} u.  The scaled instance is
f = s fbar(w/beta), g = s gbar(x/beta, w/beta) with s = L1 beta^2 / lbar1,
optionally composed with fixed orthogonal maps per block.

All evaluations are O(dimension); the dense lower-level quadratic is only
assembled on request (``lower``) for reference solves.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from ..core import BilevelProblem, QuadraticLowerLevel, SmoothnessProfile, as_vec, lower_level_solution
from ..errors import ContractError, RegimeError
from .chains import chain_matrix, convex_chain, nc_chain
from .coefficients import ab_coefficients
from .upsilon import UpsilonParams, ell_constant, upsilon, upsilon_deriv, upsilon_sup_d2

# g has 5-Lipschitz gradients before scaling, so lbar1 never drops below 5
G_SMOOTHNESS = 5.0


@dataclass(frozen=True)
class ChainLayout:
    """Index bookkeeping for the chain of T upper coordinates, each followed
    by a lower sub-chain of length K.

    Combined ordering (1-based): x_i and z_i sit at (i-1)(K+1)+1 and
    y^(i)_k at (i-1)(K+1)+1+k.
    """

    T: int
    K: int
    allow_small_k: bool = False

    def __post_init__(self):
        if self.T < 2:
            raise ContractError("chain length T must be >= 2")
        if self.K < (2 if self.allow_small_k else 10):
            raise ContractError("sub-chain length K must be >= 10")

    @property
    def n(self):
        return self.T * (self.K + 1) - self.K

    @property
    def n_prime(self):
        return (self.T - 1) * (self.K + 1) - self.K

    @property
    def d_x(self):
        return self.T

    @property
    def d_y(self):
        return self.K * (self.T - 1)

    @property
    def d_w(self):
        return self.T + self.d_y

    def x_position(self, i):
        return (i - 1) * (self.K + 1) + 1

    def y_position(self, i, k):
        return (i - 1) * (self.K + 1) + 1 + k

    def y_index(self, i, k):
        """0-based index of y^(i)_k inside the lower variable w = (z, y)."""
        return self.T + (i - 1) * self.K + (k - 1)

    @property
    def x_positions(self):
        return np.arange(self.T) * (self.K + 1) + 1

    @property
    def w_positions(self):
        """Combined position of every entry of w = (z, y)."""
        i = np.repeat(np.arange(1, self.T), self.K)
        k = np.tile(np.arange(1, self.K + 1), self.T - 1)
        return np.concatenate([self.x_positions, (i - 1) * (self.K + 1) + 1 + k])

    def progress(self, x=None, w=None, tol=0.0):
        """Largest combined position holding a nonzero entry (0 if none)."""
        best = 0
        if x is not None:
            nz = np.flatnonzero(np.abs(x) > tol)
            if nz.size:
                best = max(best, int(self.x_positions[nz[-1]]))
        if w is not None:
            nz = np.flatnonzero(np.abs(w) > tol)
            if nz.size:
                best = max(best, int(self.w_positions[nz].max()))
        return best


@dataclass(frozen=True)
class LowerBoundPrediction:
    """Formula value of an oracle-call lower bound plus the chain floor n'."""

    value: float
    regime: str
    n_prime: int
    K: int
    T: int
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.value > 0:
            raise ContractError("prediction must be positive")


def ell_bar_1(K, nu_r2=1.0, allow_small=False):
    """Gradient-Lipschitz bound of the unscaled upper level (never below 5)."""
    a, b = ab_coefficients(K, allow_small=allow_small)
    return max(1.0 + abs(a) + abs(b) + nu_r2 * ell_constant(1), G_SMOOTHNESS)


def _orth(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


class NcscHardInstance(BilevelProblem):
    """Scaled chain instance; ``regime`` is "nc", "csc" or "scsc".

    Upper variable x in R^T, lower variable w = (z, y) in R^{T + K(T-1)}.
    """

    def __init__(self, layout, ups, beta, L1, mu_y, regime="nc", mu_x=0.0, Delta=float("inf"),
                 ell_bar=None, p=1, L=None, n_ups=None, rotation_seed=None, eps=None):
        if regime not in ("nc", "csc", "scsc"):
            raise ContractError(f"unknown regime {regime!r}")
        if beta <= 0 or L1 <= 0 or mu_y <= 0:
            raise ContractError("beta, L1 and mu_y must be positive")
        self.layout = layout
        self.regime = regime
        T, K = layout.T, layout.K
        self.ups = ups if regime == "nc" else None
        self.nu = ups.nu if regime == "nc" else 0.0
        self.r = ups.r if regime == "nc" else 1.0
        self.anchor = math.sqrt(self.nu) / 2.0 if regime == "nc" else 0.5
        self.n_ups = T if n_ups is None else int(n_ups)
        self.a_K, self.b_K = ab_coefficients(K, allow_small=layout.allow_small_k)
        nu_r2 = self.nu * self.r**2
        self.ell_bar_1 = float(ell_bar) if ell_bar is not None else ell_bar_1(K, nu_r2, layout.allow_small_k)
        self.beta = float(beta)
        self.L1 = float(L1)
        self.mu_y = float(mu_y)
        self.mu_x = float(mu_x)
        self.Delta = float(Delta)
        self.eps = eps
        self.p = int(p)
        self.amplitude = self.L1 * self.beta**2 / self.ell_bar_1
        self.gscale = self.L1 / self.ell_bar_1
        self.d_x = layout.d_x
        self.d_y = layout.d_w
        Ls = [None, self.L1] + list(L[1:] if L is not None else []) + [None]
        Ls = (Ls + [None] * (self.p + 2))[: self.p + 2]
        self.profile = SmoothnessProfile(L=tuple(Ls), mu_y=self.mu_y, p=self.p, mu_x=self.mu_x,
                                         Delta=self.Delta)
        self.f_convex_in_y = regime != "nc"
        self.name = f"chain-{regime}"
        self.rotation_seed = rotation_seed
        if rotation_seed is None:
            self.Qx = self.Qz = self.Qy = None
        else:
            rng = np.random.default_rng(rotation_seed)
            self.Qx, self.Qz, self.Qy = _orth(rng, T), _orth(rng, T), _orth(rng, layout.d_y)
        self._A = chain_matrix(K)
        self._lower = None

    # ---- rotations -------------------------------------------------------
    def _x_in(self, x):
        return x if self.Qx is None else self.Qx.T @ x

    def _x_out(self, gx):
        return gx if self.Qx is None else self.Qx @ gx

    def _w_in(self, w):
        T = self.layout.T
        z, y = w[:T], w[T:]
        if self.Qz is not None:
            z, y = self.Qz.T @ z, self.Qy.T @ y
        return z, y

    def _w_out(self, gz, gy):
        if self.Qz is not None:
            gz, gy = self.Qz @ gz, self.Qy @ gy
        return np.concatenate([gz, gy])

    # ---- unscaled pieces ---------------------------------------------------
    def _h(self, zeta, eta):
        a, b = self.a_K, self.b_K
        Y = eta.reshape(self.layout.T - 1, self.layout.K)
        val = 0.5 * a * float(zeta[:-1] @ zeta[:-1] + zeta[1:] @ zeta[1:])
        val += 0.5 * b * float(zeta[:-1] @ Y[:, 0] - zeta[1:] @ Y[:, -1])
        gz = a * zeta * self._counts()
        gz[:-1] += 0.5 * b * Y[:, 0]
        gz[1:] -= 0.5 * b * Y[:, -1]
        gY = np.zeros_like(Y)
        gY[:, 0] = 0.5 * b * zeta[:-1]
        gY[:, -1] -= 0.5 * b * zeta[1:]
        return val, gz, gY.ravel()

    def _counts(self):
        c = np.full(self.layout.T, 2.0)
        c[0] = c[-1] = 1.0
        return c

    def h_value(self, z, y):
        """h at unscaled, unrotated coordinates (z, y)."""
        return self._h(np.asarray(z, float), np.asarray(y, float))[0]

    def _fbar(self, zeta, eta):
        K = self.layout.K
        sk = math.sqrt(K)
        val, gz, gy = self._h(zeta, eta)
        t1 = zeta[0] / sk - 1.0
        val += self.anchor * t1 * t1
        gz[0] += 2.0 * self.anchor * t1 / sk
        if self.nu > 0 and self.n_ups > 0:
            v = zeta[: self.n_ups] / sk
            val += self.nu * float(np.sum(upsilon(v, self.r)))
            gz[: self.n_ups] += self.nu * upsilon_deriv(v, self.r, 1) / sk
        return val, gz, gy

    def _gbar_grad(self, u, zeta, eta):
        T, K = self.layout.T, self.layout.K
        Y = eta.reshape(T - 1, K)
        gu = -zeta.copy()
        gu[:-1] -= Y[:, 0]
        gu[1:] += Y[:, -1]
        gz = zeta / K**2 - u
        gY = Y / K**2 + Y @ self._A
        gY[:, 0] -= u[:-1]
        gY[:, -1] += u[1:]
        return gu, gz, gY.ravel()

    def _gbar_value(self, u, zeta, eta):
        T, K = self.layout.T, self.layout.K
        Y = eta.reshape(T - 1, K)
        d = np.diff(Y, axis=1)
        val = float(zeta @ zeta) / (2 * K**2) - float(u @ zeta)
        val += 0.5 * float(np.sum(d * d)) + float(np.sum(Y * Y)) / (2 * K**2)
        val -= float(u[:-1] @ Y[:, 0]) - float(u[1:] @ Y[:, -1])
        return val

    # ---- scaled problem ----------------------------------------------------
    def f(self, x, y):
        zeta, eta = self._w_in(as_vec(y, self.d_y, "y"))
        val = self.amplitude * self._fbar(zeta / self.beta, eta / self.beta)[0]
        if self.mu_x:
            x = as_vec(x, self.d_x, "x")
            val += 0.5 * self.mu_x * float(x @ x)
        return val

    def grad_f(self, x, y):
        x = as_vec(x, self.d_x, "x")
        zeta, eta = self._w_in(as_vec(y, self.d_y, "y"))
        _, gz, gy = self._fbar(zeta / self.beta, eta / self.beta)
        c = self.amplitude / self.beta
        gx = self.mu_x * x if self.mu_x else np.zeros(self.d_x)
        return gx, c * self._w_out(gz, gy)

    def g(self, x, y):
        u = self._x_in(as_vec(x, self.d_x, "x"))
        zeta, eta = self._w_in(as_vec(y, self.d_y, "y"))
        # gbar is a homogeneous quadratic, so the beta scaling cancels
        return self.gscale * self._gbar_value(u, zeta, eta)

    def grad_g(self, x, y):
        u = self._x_in(as_vec(x, self.d_x, "x"))
        zeta, eta = self._w_in(as_vec(y, self.d_y, "y"))
        gu, gz, gy = self._gbar_grad(u, zeta, eta)
        return self.gscale * self._x_out(gu), self.gscale * self._w_out(gz, gy)

    def hvp_g(self, x, y, v):
        v = as_vec(v, self.d_y, "v")
        return self.grad_g(np.zeros(self.d_x), v)

    # ---- references --------------------------------------------------------
    def chain_value(self, v):
        """(value, gradient) of the one-dimensional chain the hyper-objective reduces to."""
        if self.regime == "nc":
            return nc_chain(v, self.nu, self.r, n_reg=self.n_ups)
        return convex_chain(v)

    def hyperobjective(self, x):
        x = as_vec(x, self.d_x, "x")
        K = self.layout.K
        k32 = K**1.5
        val, gv = self.chain_value(k32 * self._x_in(x) / self.beta)
        F = self.amplitude * val
        gF = (self.amplitude * k32 / self.beta) * self._x_out(gv)
        if self.mu_x:
            F += 0.5 * self.mu_x * float(x @ x)
            gF = gF + self.mu_x * x
        return F, gF

    def hyperobjective_smoothness(self):
        """Upper bound on the gradient-Lipschitz constant of the hyper-objective."""
        curv = 4.0 + 2.0 * self.anchor
        if self.regime == "nc":
            curv += self.nu * upsilon_sup_d2(self.r)
        return self.L1 * self.layout.K**3 / self.ell_bar_1 * curv + self.mu_x

    def hyperobjective_hessian(self, x=None):
        """Dense Hessian of the hyper-objective (quadratic regimes, or NC at x)."""
        T, K = self.layout.T, self.layout.K
        k32 = K**1.5
        if self.regime == "nc":
            v = k32 * self._x_in(as_vec(x, self.d_x, "x")) / self.beta
            Hc = chain_matrix(T)
            Hc[0, 0] += 2 * self.anchor
            reg = np.zeros(T)
            reg[: self.n_ups] = self.nu * upsilon_deriv(v[: self.n_ups], self.r, 2)
            Hc += np.diag(reg)
        else:
            Hc = chain_matrix(T)
            Hc[0, 0] += 1.0
        H = self.L1 * K**3 / self.ell_bar_1 * Hc
        if self.Qx is not None:
            H = self.Qx @ H @ self.Qx.T
        return H + self.mu_x * np.eye(T)

    @property
    def minimizer(self):
        """Unconstrained minimizer of the hyper-objective (C-SC and NC)."""
        T, K = self.layout.T, self.layout.K
        if self.regime == "scsc":
            H = self.hyperobjective_hessian()
            rhs = self._x_out(np.eye(T)[0]) * self.amplitude * K**1.5 / self.beta
            return np.linalg.solve(H, rhs)
        return self._x_out(np.full(T, self.beta / K**1.5))

    @property
    def lower(self):
        """Dense quadratic lower level, built on first use."""
        if self._lower is None:
            T, K = self.layout.T, self.layout.K
            dw = self.layout.d_w
            H = np.zeros((dw, dw))
            H[:T, :T] = np.eye(T) / K**2
            blk = np.eye(K) / K**2 + self._A
            for i in range(T - 1):
                s = T + i * K
                H[s:s + K, s:s + K] = blk
            J = np.zeros((T, dw))
            J[:, :T] = -np.eye(T)
            for i in range(T - 1):
                J[i, self.layout.y_index(i + 1, 1)] -= 1.0
                J[i + 1, self.layout.y_index(i + 1, K)] += 1.0
            if self.Qx is not None:
                Qw = np.zeros((dw, dw))
                Qw[:T, :T] = self.Qz
                Qw[T:, T:] = self.Qy
                H = Qw @ H @ Qw.T
                J = self.Qx @ J @ Qw.T
            self._lower = QuadraticLowerLevel(self.gscale * H, self.gscale * J, np.zeros(dw))
        return self._lower

    def lower_solution(self, x):
        """(z*, y*) by a dense solve of the lower level."""
        w = lower_level_solution(self.lower, x)
        return w[: self.layout.T], w[self.layout.T:]

    def lower_constants(self, x):
        K = self.layout.K
        mu = self.gscale / K**2
        return self.gscale * (1.0 / K**2 + 2.0 + 2.0 * math.cos(math.pi / K)), mu

    def upper_y_smoothness(self, x):
        K = self.layout.K
        reg = self.nu * upsilon_sup_d2(self.r) / K if self.nu > 0 else 0.0
        return self.gscale * (2 * self.anchor / K + reg + 2 * abs(self.a_K) + abs(self.b_K))

    def gradient_floor(self):
        """Hypergradient-norm floor that holds before x_{T-1} is reached (NC)."""
        return self.L1 * self.beta * self.layout.K**1.5 * self.nu**0.75 / (4.0 * self.ell_bar_1)

    def params(self):
        """Scalar parameters that determine the instance."""
        return {
            "regime": self.regime, "T": self.layout.T, "K": self.layout.K,
            "allow_small_k": self.layout.allow_small_k, "nu": self.nu, "r": self.r,
            "beta": self.beta, "L1": self.L1, "mu_y": self.mu_y, "mu_x": self.mu_x,
            "Delta": self.Delta, "eps": self.eps, "p": self.p,
            "L": [None if v is None else v for v in self.profile.L],
            "ell_bar_1": self.ell_bar_1, "a_K": self.a_K, "b_K": self.b_K,
            "n_ups": self.n_ups, "rotation_seed": self.rotation_seed,
        }


def hyperobjective_ncsc(inst, x):
    """Closed-form (F(x), grad F(x)) of a chain instance, no lower-level solve."""
    return inst.hyperobjective(x)


# ---- parameter selection ---------------------------------------------------

def _choose_K(L1, mu_y, nu_r2, allow_small_k=False):
    """Largest K with K^2 <= L1/(lbar1(K) mu_y), found by fixed-point iteration."""
    K = max(2, int(math.floor(math.sqrt(L1 / (ell_bar_1(10, nu_r2) * mu_y)))))
    for _ in range(100):
        K_new = max(2, int(math.floor(math.sqrt(L1 / (ell_bar_1(K, nu_r2, True) * mu_y)))))
        if K_new == K:
            break
        K = K_new
    while K > 2 and L1 / (ell_bar_1(K, nu_r2, True) * K**2) < mu_y:
        K -= 1
    if K < 10 and not allow_small_k:
        raise RegimeError(f"sub-chain length K = {K} < 10: need mu_y <= L1/(100 lbar1), i.e. smaller mu_y")
    return K


def _T_from_budget(Delta, L1, beta, ell_bar, nu):
    return int(math.floor((ell_bar * Delta / (L1 * beta**2) - math.sqrt(nu) / 2.0) / (10.0 * nu))) + 1


def _L_list(L, p):
    if np.isscalar(L):
        L = [float(L)]
    L = [float(v) for v in L]
    if len(L) < p:
        raise ContractError(f"need constants L_1..L_{p}, got {len(L)}")
    if any(v <= 0 for v in L[:p]):
        raise ContractError("smoothness constants must be positive")
    return L[:p]


def build_ncsc(p, L, mu_y, Delta, eps, rotation_seed=None, allow_small_k=False, n_ups=None):
    """Nonconvex chain instance for p-th order smoothness.

    ``L`` holds (L_1, ..., L_p) (a scalar is L_1).  Returns the instance and
    the predicted oracle lower bound.
    """
    p = int(p)
    if p < 1:
        raise ContractError("p must be >= 1")
    Ls = _L_list(L, p)
    L1 = Ls[0]
    if not (0 < mu_y <= L1) or Delta <= 0 or eps <= 0:
        raise ContractError("need 0 < mu_y <= L1, Delta > 0, eps > 0")
    K = _choose_K(L1, mu_y, 1.0, allow_small_k)
    lbar = ell_bar_1(K, 1.0, True)
    c = 4.0 * lbar * eps / (K**1.5 * L1)
    details = {}
    if p == 1:
        nu, r = 1.0, 1.0
    elif p == 2:
        ell2 = ell_constant(2)
        nu = (4 * eps / K**1.5) ** (4 / 7) * (lbar / L1) ** (8 / 7) * (Ls[1] / ell2) ** (4 / 7)
        r = 1.0
    else:
        L_star = min((lbar * Ls[q - 1] / (L1 * ell_constant(q))) ** (2.0 / (q - 1)) for q in range(2, p + 1))
        beta = L_star ** (-0.3) * c ** 0.4
        nu = beta**2 * L_star
        r = 1.0 / math.sqrt(nu) if nu > 0 else float("inf")
        details["L_star_scaled"] = L_star
    if nu > 1:
        raise RegimeError(f"nu = {nu:.4g} > 1: eps too large for order {p}")
    beta = c / nu**0.75
    T = _T_from_budget(Delta, L1, beta, lbar, nu)
    if T < 2:
        raise RegimeError(f"chain length T = {T} < 2: eps too large relative to Delta")
    layout = ChainLayout(T, K, allow_small_k=allow_small_k)
    inst = NcscHardInstance(layout, UpsilonParams(r=max(r, 1.0), nu=nu), beta, L1, mu_y, "nc",
                            Delta=Delta, ell_bar=lbar, p=p, L=Ls, n_ups=n_ups,
                            rotation_seed=rotation_seed, eps=eps)
    kappa = L1 / mu_y
    if p == 1:
        val = kappa**2 * L1 * Delta / eps**2
    elif p == 2:
        val = kappa ** (25 / 14) * L1 ** (3 / 7) * Ls[1] ** (2 / 7) * Delta * eps ** (-12 / 7)
    else:
        L_star_thm = min((Ls[q - 1] / L1) ** (2.0 / (q - 1)) for q in range(2, p + 1))
        val = kappa**1.7 * L1**0.6 * L_star_thm**0.2 * Delta * eps**-1.6
        details["L_star"] = L_star_thm
    details.update(nu=nu, r=r, beta=beta, ell_bar_1=lbar)
    tag = {1: "p=1", 2: "p=2"}.get(p, "p>=3")
    return inst, LowerBoundPrediction(val, tag, layout.n_prime, K, T, details)


def ncsc_parameters_for_layout(K, T, eps, L1=1.0):
    """(mu_y, Delta) for which ``build_ncsc(1, L1, mu_y, Delta, eps)`` picks exactly (K, T)."""
    if K < 2 or T < 2:
        raise ContractError("need K >= 2 and T >= 2")
    lbar = ell_bar_1(K, 1.0, True)
    mu_y = L1 / (lbar * (K + 0.5) ** 2)
    if L1 / (lbar * K**2) < mu_y:
        raise RegimeError("no mu_y realizes this K")
    beta = 4.0 * lbar * eps / (K**1.5 * L1)
    Delta = (10.0 * (T - 0.5) + 0.5) * L1 * beta**2 / lbar
    return mu_y, Delta


def build_csc(L1, mu_y, D, eps, rotation_seed=None, allow_small_k=False):
    """Convex-hyper-objective chain instance with minimizer norm at most D."""
    if not (0 < mu_y <= L1) or D <= 0 or eps <= 0:
        raise ContractError("need 0 < mu_y <= L1, D > 0, eps > 0")
    K = _choose_K(L1, mu_y, 0.0, allow_small_k)
    lbar = ell_bar_1(K, 0.0, True)
    T = int(math.floor(math.sqrt(K**3 * L1 * D / (lbar * eps))))
    if T < 2:
        raise RegimeError(f"chain length T = {T} < 2: eps too large")
    beta = K**1.5 * D / math.sqrt(T)
    layout = ChainLayout(T, K, allow_small_k=allow_small_k)
    inst = NcscHardInstance(layout, None, beta, L1, mu_y, "csc", ell_bar=lbar,
                            rotation_seed=rotation_seed, eps=eps)
    inst.D = D
    kappa = L1 / mu_y
    val = kappa**1.25 * math.sqrt(L1 * D / eps)
    floor = K**3 * L1 * D / (lbar * T**2)
    return inst, LowerBoundPrediction(val, "C-SC", layout.n, K, T,
                                      {"beta": beta, "ell_bar_1": lbar, "gradient_floor": floor})


def scsc_ratio(alpha):
    """Smaller root q of q^2 - (2 + alpha) q + 1 = 0."""
    return (2.0 + alpha - math.sqrt(alpha * alpha + 4.0 * alpha)) / 2.0


def build_scsc(L1, mu_x, mu_y, D, eps, rotation_seed=None, allow_small_k=False):
    """Strongly convex hyper-objective chain instance (adds mu_x |x|^2 / 2)."""
    if not (0 < mu_y <= L1) or not (0 < mu_x <= L1) or D <= 0 or eps <= 0:
        raise ContractError("need 0 < mu_x, mu_y <= L1, D > 0, eps > 0")
    K = _choose_K(L1, mu_y, 0.0, allow_small_k)
    lbar = ell_bar_1(K, 0.0, True)
    alpha = lbar * mu_x / (L1 * K**3)
    if alpha > 0.5:
        raise RegimeError(f"alpha = {alpha:.4g} > 1/2")
    q = scsc_ratio(alpha)
    if mu_x * D / (8 * eps) <= 1:
        raise RegimeError("eps too large: need eps < mu_x D / 8")
    T = int(math.floor(2.0 * math.log(mu_x * D / (8.0 * eps)) / math.log(1.0 / q)))
    T_min = 2.0 * math.log(4.0 * (1.0 + (1.0 - q) / (alpha * K**1.5))) / math.log(1.0 / q)
    if T < 4 or T < T_min:
        raise RegimeError(f"chain length T = {T} below the required max(4, {T_min:.2f})")
    beta = K**1.5 * (1.0 - q) * D / (2.0 * q)
    layout = ChainLayout(T, K, allow_small_k=allow_small_k)
    inst = NcscHardInstance(layout, None, beta, L1, mu_y, "scsc", mu_x=mu_x, ell_bar=lbar,
                            rotation_seed=rotation_seed, eps=eps)
    inst.D = D
    inst.alpha, inst.q = alpha, q
    val = (L1 / mu_y) ** 1.25 * math.sqrt(L1 / mu_x) * math.log(mu_x * D**2 / eps)
    n_prime = (T // 2) * (K + 1) - K
    return inst, LowerBoundPrediction(max(val, 1e-300), "SC-SC", n_prime, K, T,
                                      {"beta": beta, "alpha": alpha, "q": q, "ell_bar_1": lbar})
