"""Problem abstractions, oracle call accounting and exact references for
quadratic lower levels.

A bilevel problem minimizes F(x) = f(x, y*(x)) where y*(x) minimizes the
strongly convex lower level g(x, .).  Oracles wrap a problem, count calls
and optionally record every query for later auditing.
"""
from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import BudgetExhausted, CapabilityError, ConditioningError, ContractError, DivergenceError

FOResponse = namedtuple("FOResponse", ["gx_f", "gy_f", "gx_g", "gy_g"])
HVPResponse = namedtuple("HVPResponse", ["gx_f", "gy_f", "jxy_v", "hyy_v"])

# smallest Cholesky pivot relative to the largest diagonal entry
PIVOT_TOL = 1e-14


def as_vec(v, dim=None, name="vector"):
    """Return ``v`` as a finite 1-D float array, checking its length."""
    a = np.asarray(v, dtype=float)
    if a.ndim != 1:
        raise ContractError(f"{name} must be 1-D, got shape {a.shape}")
    if dim is not None and a.shape[0] != dim:
        raise ContractError(f"{name} has dim {a.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(a)):
        raise DivergenceError(f"{name} has nonfinite entries")
    return a


@dataclass(frozen=True)
class SmoothnessProfile:
    """Smoothness and conditioning constants of a bilevel problem.

    ``L`` lists L_0..L_{p+1}; an entry may be None when the constant is
    unbounded or not tracked (for example L_0 of a quadratic upper level).
    """

    L: tuple
    mu_y: float
    p: int = 1
    mu_x: float = 0.0
    Delta: float = float("inf")

    def __post_init__(self):
        L = tuple(None if v is None else float(v) for v in self.L)
        object.__setattr__(self, "L", L)
        if self.p < 1:
            raise ContractError("order p must be a positive integer")
        if len(L) != self.p + 2:
            raise ContractError(f"expected {self.p + 2} constants L_0..L_{self.p + 1}, got {len(L)}")
        if L[1] is None:
            raise ContractError("L_1 is required")
        if any(v is not None and v < 0 for v in L):
            raise ContractError("smoothness constants must be nonnegative")
        if not (0 < self.mu_y <= L[1] * (1 + 1e-12)):
            raise ContractError(f"need 0 < mu_y <= L_1, got mu_y={self.mu_y}, L_1={L[1]}")
        if self.mu_x < 0 or self.Delta < 0:
            raise ContractError("mu_x and Delta must be nonnegative")

    @classmethod
    def simple(cls, L1, mu_y, L0=None, L2=0.0, mu_x=0.0, Delta=float("inf")):
        return cls(L=(L0, L1, L2), mu_y=mu_y, p=1, mu_x=mu_x, Delta=Delta)

    @property
    def L1(self):
        return self.L[1]

    @property
    def kappa_y(self):
        return self.L[1] / self.mu_y

    @property
    def kappa_bar(self):
        return max(v for v in self.L if v is not None) / self.mu_y


@dataclass
class QuadraticLowerLevel:
    """g(x, y) = 1/2 y'Hy + x'Jy + b'y with H symmetric positive definite."""

    H: np.ndarray
    J: np.ndarray
    b: np.ndarray
    _chol: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=float)
        self.J = np.asarray(self.J, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        d_y = self.H.shape[0]
        if self.H.shape != (d_y, d_y):
            raise ContractError("H must be square")
        if self.J.ndim != 2 or self.J.shape[1] != d_y:
            raise ContractError(f"J must be d_x x {d_y}")
        if self.b.shape != (d_y,):
            raise ContractError(f"b must have length {d_y}")
        scale = max(1.0, float(np.max(np.abs(self.H))))
        if not np.allclose(self.H, self.H.T, atol=1e-12 * scale, rtol=0):
            raise ContractError("H must be symmetric")

    @property
    def d_x(self):
        return self.J.shape[0]

    @property
    def d_y(self):
        return self.H.shape[0]

    def eigen_bounds(self):
        w = linalg.eigvalsh(self.H)
        return float(w[0]), float(w[-1])

    def check(self, mu_y, L1, rtol=1e-10):
        """Raise if mu_y I <= H <= L1 I or ||J|| <= L1 fails."""
        lo, hi = self.eigen_bounds()
        if lo < mu_y * (1 - rtol) or hi > L1 * (1 + rtol):
            raise ContractError(f"spectrum of H is [{lo:.6g}, {hi:.6g}], outside [{mu_y}, {L1}]")
        jn = float(np.linalg.norm(self.J, 2)) if self.J.size else 0.0
        if jn > L1 * (1 + rtol):
            raise ContractError(f"||J|| = {jn:.6g} exceeds L1 = {L1}")

    def factor(self):
        if self._chol is None:
            self._chol = spd_factor(self.H)
        return self._chol

    def solve(self, rhs):
        """H^{-1} rhs for a vector or a matrix of right-hand sides."""
        return linalg.cho_solve(self.factor(), rhs, check_finite=False)

    def value(self, x, y):
        return float(0.5 * y @ (self.H @ y) + x @ (self.J @ y) + self.b @ y)

    def grad(self, x, y):
        return self.J @ y, self.H @ y + self.J.T @ x + self.b


def spd_factor(H):
    """Cholesky factor of an SPD matrix with a pivot-size singularity test."""
    H = np.asarray(H, dtype=float)
    try:
        c, lower = linalg.cho_factor(H, lower=True, check_finite=True)
    except linalg.LinAlgError as exc:
        raise ConditioningError(f"matrix is not positive definite: {exc}") from None
    pivots = np.diag(c) ** 2
    if pivots.min() < PIVOT_TOL * np.max(np.diag(H)):
        raise ConditioningError(
            f"smallest pivot {pivots.min():.3e} below {PIVOT_TOL:g} x largest diagonal {np.max(np.diag(H)):.3e}"
        )
    return c, lower


def spd_solve(H, rhs):
    return linalg.cho_solve(spd_factor(H), rhs, check_finite=False)


def lower_level_solution(q, x):
    """y*(x) solving H y + J'x + b = 0."""
    x = as_vec(x, q.d_x, "x")
    return -q.solve(q.J.T @ x + q.b)


class BilevelProblem:
    """Evaluation contract for min_x f(x, y*(x)), y*(x) = argmin_y g(x, y).

    Subclasses implement ``f``, ``grad_f``, ``g`` and ``grad_g``; gradients
    are returned as ``(grad_x, grad_y)`` pairs.  ``hvp_g`` returns
    ``(d2g/dxdy v, d2g/dy2 v)`` when second-order products are available.
    """

    d_x = 0
    d_y = 0
    profile = None
    lower = None
    # True when y -> f(x, y) is convex, which tightens the penalty constants
    f_convex_in_y = False
    name = "problem"

    def f(self, x, y):
        raise NotImplementedError

    def grad_f(self, x, y):
        raise NotImplementedError

    def g(self, x, y):
        raise NotImplementedError

    def grad_g(self, x, y):
        raise NotImplementedError

    def hvp_g(self, x, y, v):
        raise CapabilityError(f"{self.name} does not expose Hessian-vector products of g")

    @property
    def has_hvp(self):
        return type(self).hvp_g is not BilevelProblem.hvp_g

    def hyperobjective(self, x):
        """Closed-form (F(x), grad F(x)); raises NotImplementedError if absent."""
        raise NotImplementedError

    @property
    def has_closed_form(self):
        return type(self).hyperobjective is not BilevelProblem.hyperobjective

    def reference(self, x):
        """(F(x), grad F(x)) from a closed form or an exact quadratic solve.

        Returns None when neither is available.  Never touches oracle tallies.
        """
        if self.has_closed_form:
            return self.hyperobjective(x)
        if self.lower is not None:
            y = lower_level_solution(self.lower, x)
            return self.f(x, y), exact_hypergradient(self, x, y_star=y)
        return None

    def lower_constants(self, x):
        """(L, mu) for y -> g(x, y)."""
        if self.lower is not None:
            lo, hi = self._lower_eigs()
            return hi, lo
        return self.profile.L1, self.profile.mu_y

    def _lower_eigs(self):
        if getattr(self, "_eigs_cache", None) is None:
            self._eigs_cache = self.lower.eigen_bounds()
        return self._eigs_cache

    def upper_y_smoothness(self, x):
        """Lipschitz constant of y -> grad_y f(x, y)."""
        return self.profile.L1

    def penalty_constants(self, x, lam):
        """(L, mu) for y -> f(x, y) + lam g(x, y)."""
        Lg, mug = self.lower_constants(x)
        Lf = self.upper_y_smoothness(x)
        mu = lam * mug if self.f_convex_in_y else lam * mug - Lf
        if mu <= 0:
            raise ContractError(f"penalty {lam} too small for strong convexity (need lam > {Lf / mug:.4g})")
        return Lf + lam * Lg, mu


class CallableProblem(BilevelProblem):
    """Bilevel problem assembled from plain callables.

    When ``lower`` is given and ``g``/``grad_g`` are omitted the lower level
    is the quadratic form, with Hessian-vector products available.
    """

    def __init__(self, d_x, d_y, f, grad_f, g=None, grad_g=None, hvp=None, lower=None,
                 profile=None, hyper=None, f_convex_in_y=False, name="callable"):
        self.d_x, self.d_y = int(d_x), int(d_y)
        self._f, self._grad_f = f, grad_f
        self.lower = lower
        if lower is not None:
            if (lower.d_x, lower.d_y) != (self.d_x, self.d_y):
                raise ContractError("lower-level dims do not match problem dims")
            g = g or lower.value
            grad_g = grad_g or lower.grad
            if hvp is None:
                hvp = lambda x, y, v: (lower.J @ v, lower.H @ v)  # noqa: E731
        if g is None or grad_g is None:
            raise ContractError("g and grad_g are required without a quadratic lower level")
        self._g, self._grad_g, self._hvp, self._hyper = g, grad_g, hvp, hyper
        self.profile = profile
        self.f_convex_in_y = f_convex_in_y
        self.name = name

    def f(self, x, y):
        return float(self._f(x, y))

    def grad_f(self, x, y):
        return self._grad_f(x, y)

    def g(self, x, y):
        return float(self._g(x, y))

    def grad_g(self, x, y):
        return self._grad_g(x, y)

    def hvp_g(self, x, y, v):
        if self._hvp is None:
            return super().hvp_g(x, y, v)
        return self._hvp(x, y, v)

    @property
    def has_hvp(self):
        return self._hvp is not None

    def hyperobjective(self, x):
        if self._hyper is None:
            raise NotImplementedError
        return self._hyper(x)

    @property
    def has_closed_form(self):
        return self._hyper is not None


def exact_hypergradient(problem, x, y_star=None):
    """grad F(x) = grad_x f - J H^{-1} grad_y f at y*(x); no oracle calls."""
    q = problem.lower
    if q is None:
        raise CapabilityError("exact hypergradient needs a quadratic lower level")
    x = as_vec(x, problem.d_x, "x")
    y = lower_level_solution(q, x) if y_star is None else y_star
    gx, gy = problem.grad_f(x, y)
    return gx - q.J @ q.solve(gy)


def hyperobjective_value(problem, x):
    q = problem.lower
    if q is None:
        raise CapabilityError("needs a quadratic lower level")
    return problem.f(x, lower_level_solution(q, x))


@dataclass
class OracleTally:
    fo_count: int = 0
    hvp_count: int = 0
    sfo_count: int = 0

    @property
    def total(self):
        return self.fo_count + self.hvp_count + self.sfo_count

    def copy(self):
        return OracleTally(self.fo_count, self.hvp_count, self.sfo_count)


@dataclass(frozen=True)
class TraceRecord:
    """One oracle call: query blocks and the supports of the response blocks."""

    seq: int
    kind: str
    x: np.ndarray
    y: np.ndarray
    v: np.ndarray | None
    supports: tuple


class QueryTrace:
    """Append-only ordered record of oracle calls."""

    def __init__(self):
        self._records = []

    def append(self, record):
        if self._records and record.seq <= self._records[-1].seq:
            raise ContractError("trace sequence numbers must increase")
        self._records.append(record)

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, i):
        return self._records[i]

    def counts_by_kind(self):
        out = {}
        for r in self._records:
            out[r.kind] = out.get(r.kind, 0) + 1
        return out


def _support(a):
    return np.flatnonzero(a)


class Oracle:
    """Counting (and optionally recording) wrapper around a BilevelProblem.

    ``budget`` caps the total number of calls; the call that would exceed it
    raises BudgetExhausted instead of being served.
    """

    def __init__(self, problem, record=False, budget=None):
        self.problem = problem
        self.tally = OracleTally()
        self.trace = QueryTrace() if record else None
        self.budget = budget
        self._seq = 0

    def _check(self, x, y, v=None):
        p = self.problem
        x = as_vec(x, p.d_x, "x")
        y = as_vec(y, p.d_y, "y")
        if v is not None:
            v = as_vec(v, p.d_y, "v")
        if self.budget is not None and self.tally.total >= self.budget:
            raise BudgetExhausted(f"oracle budget {self.budget} exhausted")
        return x, y, v

    def _record(self, kind, x, y, v, resp):
        if self.trace is not None:
            self.trace.append(TraceRecord(self._seq, kind, x.copy(), y.copy(),
                                          None if v is None else v.copy(),
                                          tuple(_support(r) for r in resp)))
        self._seq += 1

    def fo(self, x, y):
        """The four partial gradients of f and g at (x, y); one call."""
        x, y, _ = self._check(x, y)
        gx_f, gy_f = self.problem.grad_f(x, y)
        gx_g, gy_g = self.problem.grad_g(x, y)
        resp = FOResponse(gx_f, gy_f, gx_g, gy_g)
        self.tally.fo_count += 1
        self._record("fo", x, y, None, resp)
        return resp

    def hvp(self, x, y, v):
        """grad f at (x, y) plus second-order products of g applied to v."""
        if not self.problem.has_hvp:
            raise CapabilityError(f"{self.problem.name} has no Hessian-vector products")
        x, y, v = self._check(x, y, v)
        gx_f, gy_f = self.problem.grad_f(x, y)
        jv, hv = self.problem.hvp_g(x, y, v)
        resp = HVPResponse(gx_f, gy_f, jv, hv)
        self.tally.hvp_count += 1
        self._record("hvp", x, y, v, resp)
        return resp


def fo_oracle(oracle, x, y):
    return oracle.fo(x, y)


def hvp_oracle(oracle, x, y, v):
    return oracle.hvp(x, y, v)


def keyed_generator(seed, index):
    """Generator for logical call ``index`` under key ``seed``.

    The call index occupies the top word of the Philox counter, so the
    streams of different calls never overlap.
    """
    key = int(seed) % (1 << 128)
    return np.random.Generator(np.random.Philox(key=key, counter=int(index) << 192))


class ZeroNoise:
    sigma = 0.0

    def perturb(self, problem, x, y, exact, rng):
        return exact


class GaussianNoise:
    """Isotropic Gaussian noise with total variance sigma^2 on each of the
    gradient of f and the gradient of g."""

    def __init__(self, sigma):
        if sigma < 0:
            raise ContractError("sigma must be nonnegative")
        self.sigma = float(sigma)

    def perturb(self, problem, x, y, exact, rng):
        if self.sigma == 0:
            return exact
        s = self.sigma / np.sqrt(problem.d_x + problem.d_y)
        return FOResponse(*(a + s * rng.standard_normal(a.shape) for a in exact))


class StochasticOracle(Oracle):
    """Stochastic first-order oracle; response i depends only on (seed, i, query)."""

    def __init__(self, problem, noise, seed, record=False, budget=None):
        super().__init__(problem, record=record, budget=budget)
        self.noise = noise
        self.seed = int(seed)

    def sfo(self, x, y):
        x, y, _ = self._check(x, y)
        gx_f, gy_f = self.problem.grad_f(x, y)
        gx_g, gy_g = self.problem.grad_g(x, y)
        exact = FOResponse(gx_f, gy_f, gx_g, gy_g)
        rng = keyed_generator(self.seed, self.tally.sfo_count)
        resp = self.noise.perturb(self.problem, x, y, exact, rng)
        self.tally.sfo_count += 1
        self._record("sfo", x, y, None, resp)
        return resp

    # solvers written against ``fo`` run unchanged on the stochastic oracle
    fo = sfo


def make_sfo(problem, noise_model, seed, record=False):
    return StochasticOracle(problem, noise_model, seed, record=record)
