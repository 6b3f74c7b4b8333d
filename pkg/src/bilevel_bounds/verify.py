"""Independent checks: finite differences, sampled Lipschitz constants,
stochastic-oracle statistics, a zero-chain trajectory auditor and the named
invariant suites run by the command line."""
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .errors import ContractError, DivergenceError

MAX_HESSIAN_DIM = 512


# ---- finite differences ------------------------------------------------------

def _call(fn, x):
    v = float(fn(x))
    if not math.isfinite(v):
        raise DivergenceError(f"function value {v} at finite-difference point")
    return v


def fd_gradient(fn, x, h=None):
    """Central-difference gradient; default step 1e-5 (1 + |x|)."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-5 * (1.0 + float(np.linalg.norm(x)))
    if h <= 0:
        raise ContractError("h must be positive")
    g = np.empty_like(x)
    e = np.zeros_like(x)
    for i in range(x.size):
        e[i] = h
        g[i] = (_call(fn, x + e) - _call(fn, x - e)) / (2.0 * h)
        e[i] = 0.0
    return g


def dense_hessian(fn, x, h=None):
    """Symmetric central-difference Hessian; default step 1e-4 (1 + |x|)."""
    x = np.asarray(x, dtype=float)
    d = x.size
    if d > MAX_HESSIAN_DIM:
        raise ContractError(f"dimension {d} exceeds {MAX_HESSIAN_DIM}")
    if h is None:
        h = 1e-4 * (1.0 + float(np.linalg.norm(x)))
    if h <= 0:
        raise ContractError("h must be positive")
    H = np.empty((d, d))
    I = np.eye(d) * h
    f0 = _call(fn, x)
    for i in range(d):
        H[i, i] = (_call(fn, x + I[i]) - 2.0 * f0 + _call(fn, x - I[i])) / h**2
        for j in range(i + 1, d):
            v = (_call(fn, x + I[i] + I[j]) - _call(fn, x + I[i] - I[j])
                 - _call(fn, x - I[i] + I[j]) + _call(fn, x - I[i] - I[j])) / (4.0 * h**2)
            H[i, j] = H[j, i] = v
    return H


def hessian_from_gradient(grad_fn, x, h=None):
    """Central differences of an analytic gradient, symmetrized."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-5 * (1.0 + float(np.linalg.norm(x)))
    d = x.size
    H = np.empty((d, d))
    e = np.zeros(d)
    for i in range(d):
        e[i] = h
        H[:, i] = (np.asarray(grad_fn(x + e)) - np.asarray(grad_fn(x - e))) / (2.0 * h)
        e[i] = 0.0
    return 0.5 * (H + H.T)


def min_eigenvalue(M):
    M = np.asarray(M, dtype=float)
    return float(linalg.eigvalsh(0.5 * (M + M.T))[0])


# ---- Lipschitz sampling ------------------------------------------------------

def _flat(g):
    if isinstance(g, tuple):
        return np.concatenate([np.ravel(a) for a in g])
    return np.ravel(np.asarray(g, dtype=float))


def ball_sampler(dim, radius=10.0, points=None, local_scale=None):
    """Pair sampler: uniform pairs in the radius ball around 0 and, when
    ``points`` (e.g. a solver trajectory) are given, half of the pairs are a
    trajectory point and a nearby perturbation of it."""
    pts = None if points is None or len(points) == 0 else np.asarray(points, dtype=float)
    local = radius / 10.0 if local_scale is None else local_scale

    def ball(rng, r):
        u = rng.standard_normal(dim)
        return r * rng.random() ** (1.0 / dim) * u / np.linalg.norm(u)

    def sample(rng):
        if pts is not None and rng.random() < 0.5:
            p = pts[rng.integers(len(pts))]
            return p, p + ball(rng, local)
        return ball(rng, radius), ball(rng, radius)

    return sample


def lipschitz_estimate(grad_fn, sampler, n_pairs, seed=0):
    """max |grad(u) - grad(v)| / |u - v| over sampled pairs (a lower estimate)."""
    if n_pairs < 1:
        raise ContractError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(n_pairs):
        u, v = sampler(rng)
        du = float(np.linalg.norm(np.asarray(u) - np.asarray(v)))
        if du == 0:
            continue
        best = max(best, float(np.linalg.norm(_flat(grad_fn(u)) - _flat(grad_fn(v)))) / du)
    return best


def joint_sampler(d_x, d_y, radius=10.0):
    """Pairs of stacked (x, y) points for bivariate gradient maps."""
    base = ball_sampler(d_x + d_y, radius)
    return base


def split_grad(fn, d_x):
    """Wrap fn(x, y) -> (gx, gy) as a map on stacked vectors."""
    return lambda w: _flat(fn(w[:d_x], w[d_x:]))


# ---- stochastic oracles ------------------------------------------------------

@dataclass
class SfoStats:
    bias_norm: float
    variance: float
    stderr: float
    n_samples: int

    @property
    def bias_ok(self):
        """Bias within four standard errors of the sample mean."""
        return self.bias_norm <= 4.0 * self.stderr + 1e-300


def sfo_stats(oracle, x, y=None, n_samples=1000, block="gy_f"):
    """Empirical bias norm and variance E|g - grad|^2 of one response block."""
    if n_samples < 1000:
        raise ContractError("n_samples must be >= 1000")
    prob = oracle.problem
    x = np.asarray(x, dtype=float)
    y = np.zeros(prob.d_y) if y is None else np.asarray(y, dtype=float)
    exact = {"gx_f": prob.grad_f(x, y)[0], "gy_f": prob.grad_f(x, y)[1],
             "gx_g": prob.grad_g(x, y)[0], "gy_g": prob.grad_g(x, y)[1]}[block]
    s1 = np.zeros_like(exact)
    s2 = 0.0
    for _ in range(n_samples):
        dev = getattr(oracle.sfo(x, y), block) - exact
        s1 += dev
        s2 += float(dev @ dev)
    mean_dev = s1 / n_samples
    var = s2 / n_samples
    return SfoStats(float(np.linalg.norm(mean_dev)), var, math.sqrt(var / n_samples), n_samples)


# ---- zero-chain audit --------------------------------------------------------

@dataclass
class AuditReport:
    """Per-call progress of a trajectory on a chain instance.

    ``progress[t]`` is the combined frontier after call t and
    ``increments[t]`` its change during that call.
    """

    increments: list = field(default_factory=list)
    progress: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    first_violation: int | None = None
    completion_index: int | None = None
    floor_violations: list = field(default_factory=list)
    floor_checked: int = 0

    @property
    def n_violations(self):
        return len(self.violations)

    def to_text(self):
        d = asdict(self)
        d["n_calls"] = len(self.increments)
        d["n_violations"] = self.n_violations
        return json.dumps(d, sort_keys=True)


class ChainAuditor:
    """Streaming zero-chain auditor; usable directly as an oracle's trace.

    A call violates the zero-chain law when the frontier (the largest
    combined position touched by any query or response so far) grows by more
    than one.  With ``instance`` given (NC regime), every call made while the
    frontier is below n' also has its query x checked against the
    hypergradient floor.
    """

    def __init__(self, layout, instance=None, tol=1e-12):
        self.layout, self.tol = layout, float(tol)
        self.instance = instance
        self.floor = None
        if instance is not None:
            if getattr(instance, "layout", None) != layout:
                raise ContractError("instance layout differs from the audit layout")
            if instance.regime == "nc":
                self.floor = instance.gradient_floor()
        self.xpos, self.wpos = layout.x_positions, layout.w_positions
        self.frontier = 0
        self.report = AuditReport()
        self._n = 0

    def __len__(self):
        return self._n

    def append(self, rec):
        lay, rep, t = self.layout, self.report, self._n
        if rec.x.size != lay.d_x or rec.y.size != lay.d_w:
            raise ContractError(f"call {t}: dims ({rec.x.size}, {rec.y.size}) do not match the layout")
        before = self.frontier
        q = lay.progress(rec.x, rec.y, self.tol)
        if rec.v is not None:
            q = max(q, lay.progress(None, rec.v, self.tol))
        # response blocks alternate x-shaped and w-shaped supports
        for k, sup in enumerate(rec.supports):
            if sup.size:
                pos = self.xpos if k % 2 == 0 else self.wpos
                q = max(q, int(pos[sup].max()))
        self.frontier = max(before, q)
        inc = self.frontier - before
        rep.increments.append(inc)
        rep.progress.append(self.frontier)
        if inc > 1:
            rep.violations.append(t)
            if rep.first_violation is None:
                rep.first_violation = t
        nz = np.flatnonzero(np.abs(rec.x) > self.tol)
        if rep.completion_index is None and nz.size and nz[-1] + 1 >= lay.T - 1:
            rep.completion_index = t
        if self.floor is not None and before < lay.n_prime:
            rep.floor_checked += 1
            if float(np.linalg.norm(self.instance.hyperobjective(rec.x)[1])) <= self.floor:
                rep.floor_violations.append(t)
        self._n += 1


def zero_chain_audit(trace, layout, instance=None, tol=1e-12):
    """Audit a recorded trajectory against the interleaved chain ordering."""
    aud = ChainAuditor(layout, instance, tol)
    for rec in trace or ():
        aud.append(rec)
    return aud.report


# ---- invariant suites ----------------------------------------------------------

SUITES = ("chains", "coefficients", "hypergradients", "smoothness", "stochastic", "applications")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""

    def __post_init__(self):
        self.passed = bool(self.passed)


def _suite_chains(rng):
    from .lowerbound import ChainLayout, convex_chain, nc_chain, prog
    from .solvers import gd_penalty
    from .lowerbound import build_ncsc, ncsc_parameters_for_layout

    out = []
    worst = math.inf
    for nu in (1.0, 0.5, 0.1):
        for _ in range(100):
            T = int(rng.integers(3, 30))
            x = rng.standard_normal(T) * rng.choice([0.1, 1.0, 3.0])
            x[-2:] = 0.0
            worst = min(worst, float(np.linalg.norm(nc_chain(x, nu, 1.0)[1])) / nu**0.75)
    out.append(CheckResult("nc_chain gradient floor |grad| > nu^(3/4)/4", worst > 0.25, f"min ratio {worst:.4f}"))
    worst = math.inf
    for T in (8, 32, 128):
        for _ in range(100):
            x = rng.standard_normal(T)
            x[-1] = 0.0
            worst = min(worst, float(np.linalg.norm(convex_chain(x)[1])) * T**1.5)
    out.append(CheckResult("convex chain floor |grad| > T^(-3/2)", worst > 1.0, f"min ratio {worst:.4f}"))
    ok = True
    for _ in range(200):
        T = int(rng.integers(2, 20))
        t = int(rng.integers(1, T + 1))
        x = np.zeros(T)
        x[: t - 1] = rng.standard_normal(t - 1)
        ok &= prog(nc_chain(x, 1.0, 1.0)[1]) <= t
    out.append(CheckResult("nc_chain zero-chain support law", bool(ok)))
    mu, D = ncsc_parameters_for_layout(10, 8, 1e-2)
    inst, _ = build_ncsc(1, 1.0, mu, D, 1e-2)
    rep = gd_penalty(inst, 1.0, 20.0 * inst.layout.K**2 * inst.ell_bar_1, 60, np.zeros(inst.d_x), record=True,
                     monitor=False)
    audit = zero_chain_audit(rep.trace, inst.layout, inst)
    out.append(CheckResult("bilevel chain audit: no frontier jumps", audit.n_violations == 0,
                           f"{len(audit.increments)} calls"))
    out.append(CheckResult("bilevel chain audit: gradient floor", not audit.floor_violations,
                           f"{audit.floor_checked} calls checked"))
    return out


def _suite_coefficients(rng):
    from .lowerbound import ab_coefficients, b_first_row

    out = []
    bad = []
    for K in range(10, 201, 10):
        a, b = ab_coefficients(K)
        row = b_first_row(K)
        if not (abs(a) <= 20 and abs(b) <= 10 and row.min() >= 0.1 * K and row.max() <= 20 * K):
            bad.append(K)
    out.append(CheckResult("|a_K| <= 20, |b_K| <= 10, 0.1K <= B_1i <= 20K for K = 10..200", not bad,
                           f"failing K: {bad}"))
    return out


def _suite_hypergradients(rng):
    from .applications import random_quadratic_problem
    from .core import exact_hypergradient, lower_level_solution
    from .lowerbound import build_ncsc, ncsc_parameters_for_layout

    out = []
    worst = 0.0
    for K in (10, 20, 50, 100, 200):
        mu, D = ncsc_parameters_for_layout(K, 4, 1e-2)
        inst, _ = build_ncsc(1, 1.0, mu, D, 1e-2)
        for _ in range(20):
            x = rng.standard_normal(inst.d_x)
            z, y = inst.lower_solution(x)
            err = abs(inst.h_value(z, y) - 0.5 * K**3 * float(np.sum(np.diff(x) ** 2)))
            worst = max(worst, err / (1.0 + K**3 * float(x @ x)))
    out.append(CheckResult("coupling term reduces to the scaled chain quadratic", worst <= 1e-8, f"{worst:.2e}"))
    mu, D = ncsc_parameters_for_layout(10, 6, 1e-2)
    inst, _ = build_ncsc(1, 1.0, mu, D, 1e-2)
    worst = 0.0
    for _ in range(10):
        x = rng.standard_normal(inst.d_x) * 0.05
        w = lower_level_solution(inst.lower, x)
        F = inst.hyperobjective(x)[0]
        worst = max(worst, abs(F - inst.f(x, w)) / max(1.0, abs(F)))
    out.append(CheckResult("closed-form hyper-objective equals f at the dense lower solution",
                           worst <= 1e-8, f"{worst:.2e}"))
    prob = random_quadratic_problem(10, 100.0, seed=1)
    x = rng.standard_normal(10)
    Fx = lambda u: prob.f(u, lower_level_solution(prob.lower, u))  # noqa: E731
    err = float(np.linalg.norm(fd_gradient(Fx, x) - exact_hypergradient(prob, x)))
    out.append(CheckResult("exact hypergradient vs finite differences", err <= 1e-5, f"{err:.2e}"))
    return out


def _suite_smoothness(rng):
    from .lowerbound import build_ncsc, ncsc_parameters_for_layout

    out = []
    mu, D = ncsc_parameters_for_layout(10, 8, 1e-2)
    inst, _ = build_ncsc(1, 1.0, mu, D, 1e-2)
    n = inst.d_x + inst.d_y
    samp = ball_sampler(n, radius=10.0 * inst.beta)
    Lg = lipschitz_estimate(split_grad(inst.grad_g, inst.d_x), samp, 300, seed=1)
    Lf = lipschitz_estimate(split_grad(inst.grad_f, inst.d_x), samp, 300, seed=2)
    out.append(CheckResult("sampled Lipschitz of grad g <= L1", Lg <= inst.L1 * (1 + 1e-6), f"{Lg:.4f}"))
    out.append(CheckResult("sampled Lipschitz of grad f <= L1", Lf <= inst.L1 * (1 + 1e-6), f"{Lf:.4f}"))
    H = inst.lower.H
    lo = float(linalg.eigvalsh(H)[0])
    out.append(CheckResult("lower level mu_y-strongly convex", lo >= inst.mu_y * (1 - 1e-8), f"{lo:.4g}"))
    return out


def _suite_stochastic(rng):
    from .core import StochasticOracle
    from .lowerbound import SpikeNoise, StochasticHardInstance
    from .lowerbound.stochastic import LIPSCHITZ, VARIANCE_CONST

    out = []
    for p in (0.1, 0.5):
        inst = StochasticHardInstance(8, 16, p, 1.0, LIPSCHITZ, 1.0, seed=3)
        orc = StochasticOracle(inst, SpikeNoise(), seed=11)
        st = sfo_stats(orc, np.zeros(16), np.zeros(16), 20_000)
        bound = VARIANCE_CONST**2 * (1 - p) / p
        out.append(CheckResult(f"spike oracle unbiased (p={p})", st.bias_ok, f"{st.bias_norm:.3g}"))
        out.append(CheckResult(f"spike oracle variance bound (p={p})", st.variance <= 1.1 * bound,
                               f"{st.variance:.3g} vs {bound:.3g}"))
    return out


def _suite_applications(rng):
    from .applications import (TaskCollection, graph_energy, meta_linreg, path_laplacian,
                               stackelberg_regression)
    from .core import exact_hypergradient

    out = []
    A = rng.standard_normal((8, 4))
    b = rng.standard_normal(8)
    probs = [meta_linreg(TaskCollection.random(3, 4, 6, 6, 0.8, seed=2)),
             stackelberg_regression(A, b, rng.uniform(0.5, 2.0, 8), 2.5),
             graph_energy(A, b, path_laplacian(8), 0.7)]
    for prob in probs:
        err = 0.0
        for _ in range(50):
            x = rng.standard_normal(prob.d_x)
            err = max(err, float(np.linalg.norm(exact_hypergradient(prob, x) - prob.hyperobjective(x)[1])))
        out.append(CheckResult(f"{prob.name}: exact vs closed-form hypergradient", err <= 1e-10, f"{err:.2e}"))
        lo = min_eigenvalue(prob.hessian)
        out.append(CheckResult(f"{prob.name}: hyper-objective Hessian PSD", lo >= -1e-12, f"{lo:.3g}"))
    return out


_SUITE_FUNCS = {
    "chains": _suite_chains, "coefficients": _suite_coefficients, "hypergradients": _suite_hypergradients,
    "smoothness": _suite_smoothness, "stochastic": _suite_stochastic, "applications": _suite_applications,
}


def run_suite(name, seed=0):
    """Run a named invariant suite; returns a list of CheckResult."""
    if name not in _SUITE_FUNCS:
        raise ContractError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    return _SUITE_FUNCS[name](np.random.default_rng(seed))
