"""First-order bilevel solvers with oracle accounting.

The penalty methods replace the implicit hypergradient by

    grad_x f(x, y) + lam * (grad_x g(x, y) - grad_x g(x, z)),

where z approximates argmin g(x, .) and y approximates
argmin f(x, .) + lam * g(x, .).  Both inner problems are solved by a fixed
number of warm-started AGD (or GD) steps.
"""
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import Oracle, OracleTally
from .errors import BudgetExhausted, ContractError, DivergenceError


@dataclass(frozen=True)
class AgdConfig:
    L: float
    mu: float
    K: int

    def __post_init__(self):
        if not (self.L >= self.mu > 0):
            raise ContractError(f"need L >= mu > 0, got L={self.L}, mu={self.mu}")
        if self.K < 0:
            raise ContractError("K must be nonnegative")

    @property
    def kappa(self):
        return self.L / self.mu

    @property
    def momentum(self):
        s = math.sqrt(self.kappa)
        return (s - 1.0) / (s + 1.0)


def _finite(z):
    if not np.all(np.isfinite(z)):
        raise DivergenceError("nonfinite iterate; check the L/mu bounds")


def agd(grad_h, cfg, z0, callback=None):
    """Nesterov's method for an L-smooth mu-strongly convex h.

    z_{k+1} = zt_k - grad_h(zt_k) / L
    zt_{k+1} = z_{k+1} + m (z_{k+1} - z_k),  m = (sqrt(kappa)-1)/(sqrt(kappa)+1)
    """
    z = np.array(z0, dtype=float)
    if cfg.K == 0:
        return z
    m = cfg.momentum
    zt = z.copy()
    for k in range(cfg.K):
        zn = zt - grad_h(zt) / cfg.L
        zt = zn + m * (zn - z)
        z = zn
        _finite(z)
        if callback is not None:
            callback(k + 1, z)
    return z


def gd(grad_h, L, K, z0, callback=None):
    """Gradient descent with step 1/L."""
    z = np.array(z0, dtype=float)
    for k in range(K):
        z = z - grad_h(z) / L
        _finite(z)
        if callback is not None:
            callback(k + 1, z)
    return z


def agd_quadratic(A, c, cfg, z0, zstar=None):
    """AGD on 1/2 z'Az - c'z through the compiled kernel when available.

    Returns (z_K, squared errors to zstar per iteration).
    """
    return kernels.agd_quadratic(A, c, z0, cfg.L, cfg.mu, cfg.K, zstar)


def gd_quadratic(A, c, L, K, z0, zstar=None):
    return kernels.gd_quadratic(A, c, z0, L, K, zstar)


def agd_contraction(kappa, K):
    """Bound (1 + kappa)(1 - 1/sqrt(kappa))^K on ||z_K - z*||^2 / ||z_0 - z*||^2."""
    return (1.0 + kappa) * (1.0 - 1.0 / math.sqrt(kappa)) ** K


def inner_iterations(gamma, kappa, method="agd"):
    """Smallest K whose contraction bound on squared distance is <= gamma."""
    if gamma >= 1 and method == "gd":
        return 0
    if kappa <= 1:
        return 1
    if method == "agd":
        k = math.log(gamma / (1 + kappa)) / math.log(1 - 1 / math.sqrt(kappa))
    elif method == "gd":
        k = math.log(gamma) / (2 * math.log(1 - 1 / kappa))
    else:
        raise ContractError(f"unknown inner method {method!r}")
    return max(0, math.ceil(k))


def default_gamma(eps, kappa_bar, L1, lam):
    """Inner accuracy min{1/2, eps^2/(kappa_bar^3 L1^3)} / (100 lam^2)."""
    return min(0.5, eps**2 / (kappa_bar**3 * L1**3)) / (100.0 * lam**2)


@dataclass(frozen=True)
class F2baConfig:
    """Penalty method settings; ``inner`` is 'agd' (accelerated) or 'gd'."""

    eta_x: float
    lam: float
    T: int
    K: int
    inner: str = "agd"

    def __post_init__(self):
        if self.eta_x <= 0 or self.lam <= 0:
            raise ContractError("eta_x and lam must be positive")
        if self.T < 1 or self.K < 1:
            raise ContractError("T and K must be positive")
        if self.inner not in ("agd", "gd"):
            raise ContractError(f"inner must be 'agd' or 'gd', got {self.inner!r}")

    def check_penalty(self, profile):
        need = 2 * profile.L1 / profile.mu_y
        if self.lam < need * (1 - 1e-12):
            raise ContractError(f"lam = {self.lam} below 2 L1 / mu_y = {need}")


def f2ba_config_from_theory(profile, eps, L_F, Delta=None, inner="agd", c_T=1.0, gamma=None):
    """Rate-level settings: lam = L1 kappa_bar^3 / eps, eta = 1/L_F,
    T = c_T L_F Delta / eps^2, K from the inner accuracy gamma."""
    L1, kb = profile.L1, profile.kappa_bar
    lam = max(L1 * kb**3 / eps, 2 * L1 / profile.mu_y)
    Delta = profile.Delta if Delta is None else Delta
    T = max(1, math.ceil(c_T * L_F * Delta / eps**2))
    gamma = default_gamma(eps, kb, L1, lam) if gamma is None else gamma
    kappa_pen = (L1 + lam * L1) / (lam * profile.mu_y - L1)
    K = max(1, inner_iterations(gamma, kappa_pen, inner))
    return F2baConfig(eta_x=1.0 / L_F, lam=lam, T=T, K=K, inner=inner)


@dataclass
class HistoryRow:
    iteration: int
    fo_count: int
    hvp_count: int
    sfo_count: int
    est_norm: float
    ref_grad_norm: float | None
    ref_value: float | None
    upper_value: float


@dataclass
class SolverReport:
    """Outcome of one run.  ``history`` holds one row per recorded outer
    iterate x_0, x_1, ...; without thinning its length is iterations + 1."""

    solver: str
    x_out: np.ndarray
    x_last: np.ndarray
    history: list
    tally: OracleTally
    iterations: int
    wall_clock: float
    termination: str
    trace: object = None
    message: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def est_norms(self):
        return np.array([r.est_norm for r in self.history], dtype=float)

    @property
    def ref_grad_norms(self):
        return np.array([np.nan if r.ref_grad_norm is None else r.ref_grad_norm for r in self.history])

    @property
    def best_ref_grad_norm(self):
        v = self.ref_grad_norms
        return None if v.size == 0 or np.all(np.isnan(v)) else float(np.nanmin(v))

    @property
    def final_ref_grad_norm(self):
        for r in reversed(self.history):
            if r.ref_grad_norm is not None:
                return r.ref_grad_norm
        return None


class _Recorder:
    """Collects history rows with geometric thinning past 1000 iterations,
    evaluates the reference monitor and enforces target/time limits."""

    def __init__(self, problem, oracle, monitor, target_eps, max_seconds, thin):
        self.problem, self.oracle = problem, oracle
        if monitor is True:
            monitor = problem.reference if (problem.has_closed_form or problem.lower is not None) else None
        self.monitor = monitor or None
        self.target_eps = target_eps
        self.max_seconds = max_seconds
        self.thin = thin
        self.rows = []
        self._next = 1000.0
        self.t0 = time.perf_counter()
        self.best = math.inf

    def _keep(self, t):
        if not self.thin or t <= 1000:
            return True
        if t >= self._next:
            self._next *= 1.1
            return True
        return False

    def row(self, t, x, y_lower, force=False):
        """Record iterate x_t; returns a stop reason or None."""
        ref_norm = ref_val = None
        if self.monitor is not None:
            val, grad = self.monitor(x)
            ref_norm, ref_val = float(np.linalg.norm(grad)), float(val)
            self.best = min(self.best, ref_norm)
        if force or self._keep(t):
            tl = self.oracle.tally
            self.rows.append(HistoryRow(t, tl.fo_count, tl.hvp_count, tl.sfo_count, math.nan,
                                        ref_norm, ref_val, float(self.problem.f(x, y_lower))))
            self._last_t = t
        if self.target_eps is not None and ref_norm is not None and ref_norm <= self.target_eps:
            return "target"
        if self.max_seconds is not None and time.perf_counter() - self.t0 > self.max_seconds:
            return "timeout"
        return None

    def set_est(self, t, est_norm):
        if self.rows and self.rows[-1].iteration == t:
            self.rows[-1].est_norm = float(est_norm)

    def elapsed(self):
        return time.perf_counter() - self.t0


def _make_oracle(problem, oracle, record, max_oracle_calls):
    if oracle is None:
        return Oracle(problem, record=record, budget=max_oracle_calls)
    if max_oracle_calls is not None:
        oracle.budget = max_oracle_calls
    return oracle


def _inner(method, grad, L, mu, K, z0):
    if method == "agd":
        return agd(grad, AgdConfig(L, mu, K), z0)
    return gd(grad, L, K, z0)


def penalty_hypergrad(oracle, x, y_hat, z_hat, lam):
    """Fully first-order estimator from one call at (x, y_hat) and one at (x, z_hat)."""
    ry = oracle.fo(x, y_hat)
    rz = oracle.fo(x, z_hat)
    return ry.gx_f + lam * (ry.gx_g - rz.gx_g)


def _inner_solves(problem, oracle, method, x, y, z, lam, K):
    Lg, mug = problem.lower_constants(x)
    Lp, mup = problem.penalty_constants(x, lam)
    z = _inner(method, lambda w: oracle.fo(x, w).gy_g, Lg, mug, K, z)

    def pen_grad(w):
        r = oracle.fo(x, w)
        return r.gy_f + lam * r.gy_g

    y = _inner(method, pen_grad, Lp, mup, K, y)
    return y, z


def _start(problem, x0, y0, z0):
    x = np.array(x0, dtype=float)
    y = np.zeros(problem.d_y) if y0 is None else np.array(y0, dtype=float)
    z = y.copy() if z0 is None else np.array(z0, dtype=float)
    return x, y, z


def f2ba_plus(problem, cfg, x0, y0=None, z0=None, *, oracle=None, monitor=True, target_eps=None,
              max_oracle_calls=None, max_seconds=None, record=False, thin=True):
    """Penalty-based fully first-order method with warm-started inner solves.

    Each outer step spends K calls on z, K calls on y and 2 on the estimator.
    ``x_out`` is the average of the iterates x_0..x_{t-1} that were stepped
    from.
    """
    if problem.profile is not None:
        cfg.check_penalty(problem.profile)
    oracle = _make_oracle(problem, oracle, record, max_oracle_calls)
    x, y, z = _start(problem, x0, y0, z0)
    rec = _Recorder(problem, oracle, monitor, target_eps, max_seconds, thin)
    xsum = np.zeros_like(x)
    steps = 0
    reason = rec.row(0, x, z)
    message = ""
    try:
        while reason is None and steps < cfg.T:
            y, z = _inner_solves(problem, oracle, cfg.inner, x, y, z, cfg.lam, cfg.K)
            est = penalty_hypergrad(oracle, x, y, z, cfg.lam)
            rec.set_est(steps, np.linalg.norm(est))
            xsum += x
            x = x - cfg.eta_x * est
            _finite(x)
            steps += 1
            reason = rec.row(steps, x, z, force=steps == cfg.T)
    except BudgetExhausted as exc:
        reason, message = "budget", str(exc)
    except DivergenceError as exc:
        reason, message = "diverged", str(exc)
    reason = reason or "completed"
    x_out = xsum / steps if steps else x.copy()
    return SolverReport(f"f2ba_plus[{cfg.inner}]", x_out, x, rec.rows, oracle.tally, steps, rec.elapsed(),
                        reason, oracle.trace, message, {"y": y, "z": z})


def gd_penalty(problem, eta_x, lam, T, x0, y0=None, z0=None, *, oracle=None, monitor=True, target_eps=None,
               max_oracle_calls=None, max_seconds=None, record=False, thin=True):
    """Single-loop gradient method on the penalty function.

    Per iteration: one call at (x, y), one at (x, z); y takes a 1/L step on
    f + lam g, z a 1/L step on g and x a step along the penalty estimator.
    """
    oracle = _make_oracle(problem, oracle, record, max_oracle_calls)
    x, y, z = _start(problem, x0, y0, z0)
    rec = _Recorder(problem, oracle, monitor, target_eps, max_seconds, thin)
    xsum = np.zeros_like(x)
    steps, message = 0, ""
    reason = rec.row(0, x, z)
    try:
        while reason is None and steps < T:
            Lg, _ = problem.lower_constants(x)
            Lp, _ = problem.penalty_constants(x, lam)
            ry = oracle.fo(x, y)
            rz = oracle.fo(x, z)
            est = ry.gx_f + lam * (ry.gx_g - rz.gx_g)
            rec.set_est(steps, np.linalg.norm(est))
            y = y - (ry.gy_f + lam * ry.gy_g) / Lp
            z = z - rz.gy_g / Lg
            xsum += x
            x = x - eta_x * est
            _finite(x)
            steps += 1
            reason = rec.row(steps, x, z, force=steps == T)
    except BudgetExhausted as exc:
        reason, message = "budget", str(exc)
    except DivergenceError as exc:
        reason, message = "diverged", str(exc)
    reason = reason or "completed"
    x_out = xsum / steps if steps else x.copy()
    return SolverReport("gd_penalty", x_out, x, rec.rows, oracle.tally, steps, rec.elapsed(), reason,
                        oracle.trace, message, {"y": y, "z": z})


@dataclass(frozen=True)
class AccConfig:
    """Restarted accelerated penalty method settings.

    ``K`` is an int or a sequence indexed by the global iteration (the last
    entry repeats).  ``max_iters`` bounds the total number of outer steps
    across restarts.  ``perturb_start`` applies the small-gradient
    perturbation test once at x0, as if a restart had just happened there.
    """

    eta_x: float
    lam: float
    theta: float
    B: float
    r: float
    T: int
    K: object
    chi: float = 1.0
    seed: int = 0
    max_iters: int = 100_000
    perturb_start: bool = True

    def __post_init__(self):
        if not (0 < self.theta < 1):
            raise ContractError("theta must lie in (0, 1)")
        if self.B <= 0 or self.r <= 0 or self.eta_x <= 0 or self.lam <= 0 or self.chi <= 0:
            raise ContractError("eta_x, lam, B, r, chi must be positive")
        if self.T < 1:
            raise ContractError("T must be positive")

    def inner_k(self, it):
        if isinstance(self.K, (int, np.integer)):
            return int(self.K)
        seq = list(self.K)
        return int(seq[min(it, len(seq) - 1)])


def acc_config_from_rates(L_F, rho_F, eps, lam, K, d, delta=0.1, seed=0, c=None, max_iters=100_000):
    """Settings with every rate relation taken with constant 1 unless ``c``
    supplies multipliers for keys 'eta', 'theta', 'B', 'r', 'T'.

    chi = log(d / (delta eps)), eta = 1/(4 L_F), theta = sqrt(eta) (rho eps)^{1/4},
    B = sqrt(eps / rho) / chi^2, r = eps, T = chi / theta.
    """
    c = dict(c or {})
    chi = max(1.0, math.log(d / (delta * eps)))
    eta = c.get("eta", 1.0) / (4.0 * L_F)
    theta = min(0.99, c.get("theta", 1.0) * math.sqrt(eta) * (rho_F * eps) ** 0.25)
    B = c.get("B", 1.0) * math.sqrt(eps / rho_F) / chi**2
    r = c.get("r", 1.0) * eps
    T = max(1, math.ceil(c.get("T", 1.0) * chi / theta))
    return AccConfig(eta_x=eta, lam=lam, theta=theta, B=B, r=r, T=T, K=K, chi=chi, seed=seed, max_iters=max_iters)


def _ball_sample(rng, dim, radius):
    u = rng.standard_normal(dim)
    u /= np.linalg.norm(u)
    return radius * rng.random() ** (1.0 / dim) * u


def acc_f2ba_plus(problem, cfg, x0, y0=None, z0=None, *, oracle=None, monitor=True, target_eps=None,
                  max_oracle_calls=None, max_seconds=None, record=False, thin=True):
    """Restarted accelerated penalty method with small-gradient perturbations.

    Momentum point xt = x_t + (1 - theta)(x_t - x_{t-1}); inner solves and the
    estimator are taken at xt and x_{t+1} = xt - eta * estimate.  An epoch
    restarts once t * sum_j ||x_{j+1} - x_j||^2 >= B^2; the restart point is
    perturbed by a uniform draw from the radius-r ball when the last estimate
    is at most B / (2 eta).  After an epoch of T steps without restart the
    output averages xt_0..xt_T0, T0 = argmin over the last half of
    ||x_{t+1} - x_t||.
    """
    if problem.profile is not None and cfg.lam < 2 * problem.profile.L1 / problem.profile.mu_y * (1 - 1e-12):
        raise ContractError("lam below 2 L1 / mu_y")
    oracle = _make_oracle(problem, oracle, record, max_oracle_calls)
    x, y, z = _start(problem, x0, y0, z0)
    rng = np.random.default_rng(cfg.seed)
    rec = _Recorder(problem, oracle, monitor, target_eps, max_seconds, thin)
    small = cfg.B / (2.0 * cfg.eta_x)
    it, restarts, perturbations, message = 0, 0, 0, ""
    x_out = None
    reason = rec.row(0, x, z)
    try:
        if reason is None and cfg.perturb_start:
            y, z = _inner_solves(problem, oracle, "agd", x, y, z, cfg.lam, cfg.inner_k(0))
            est = penalty_hypergrad(oracle, x, y, z, cfg.lam)
            if np.linalg.norm(est) <= small:
                x = x + _ball_sample(rng, x.size, cfg.r)
                perturbations += 1
        x_prev = x.copy()
        t, moved = 0, 0.0
        xt_list, step_list = [], []
        while reason is None:
            if it >= cfg.max_iters:
                reason = "budget"
                message = f"max_iters={cfg.max_iters} reached before an epoch completed"
                break
            xt = x + (1.0 - cfg.theta) * (x - x_prev)
            y, z = _inner_solves(problem, oracle, "agd", xt, y, z, cfg.lam, cfg.inner_k(it))
            est = penalty_hypergrad(oracle, xt, y, z, cfg.lam)
            rec.set_est(it, np.linalg.norm(est))
            x_new = xt - cfg.eta_x * est
            _finite(x_new)
            step = float(np.linalg.norm(x_new - x))
            xt_list.append(xt)
            step_list.append(step)
            moved += step * step
            x_prev, x = x, x_new
            t += 1
            it += 1
            reason = rec.row(it, x, z)
            if t * moved >= cfg.B**2:
                if np.linalg.norm(est) <= small:
                    x = x + _ball_sample(rng, x.size, cfg.r)
                    perturbations += 1
                x_prev = x.copy()
                t, moved = 0, 0.0
                xt_list, step_list = [], []
                restarts += 1
            elif t >= cfg.T:
                lo = cfg.T // 2
                t0 = lo + int(np.argmin(step_list[lo:cfg.T]))
                x_out = np.mean(xt_list[: t0 + 1], axis=0)
                reason = reason or "completed"
    except BudgetExhausted as exc:
        reason, message = "budget", str(exc)
    except DivergenceError as exc:
        reason, message = "diverged", str(exc)
    if x_out is None:
        x_out = x.copy()
    if rec.rows and rec.rows[-1].iteration != it:
        rec.row(it, x, z, force=True)
    return SolverReport("acc_f2ba_plus", x_out, x, rec.rows, oracle.tally, it, rec.elapsed(), reason,
                        oracle.trace, message,
                        {"restarts": restarts, "perturbations": perturbations, "y": y, "z": z})


def aid_hvp(problem, eta_x, T, K_y, K_v, x0, y0=None, v0=None, *, oracle=None, monitor=True, target_eps=None,
            max_oracle_calls=None, max_seconds=None, record=False, thin=True):
    """Implicit-differentiation baseline using Hessian-vector products.

    Per outer step: K_y AGD steps on g(x, .) for y, K_v AGD steps on the
    quadratic v -> 1/2 v'Hv + grad_y f'v (minimizer -H^{-1} grad_y f), then
    the step x <- x - eta (grad_x f + J v).
    """
    oracle = _make_oracle(problem, oracle, record, max_oracle_calls)
    x, y, _ = _start(problem, x0, y0, None)
    v = np.zeros(problem.d_y) if v0 is None else np.array(v0, dtype=float)
    rec = _Recorder(problem, oracle, monitor, target_eps, max_seconds, thin)
    xsum = np.zeros_like(x)
    steps, message = 0, ""
    reason = rec.row(0, x, y)
    try:
        while reason is None and steps < T:
            Lg, mug = problem.lower_constants(x)
            y = agd(lambda w: oracle.fo(x, w).gy_g, AgdConfig(Lg, mug, K_y), y)

            def vgrad(w):
                r = oracle.hvp(x, y, w)
                return r.hyy_v + r.gy_f

            v = agd(vgrad, AgdConfig(Lg, mug, K_v), v)
            r = oracle.hvp(x, y, v)
            hg = r.gx_f + r.jxy_v
            rec.set_est(steps, np.linalg.norm(hg))
            xsum += x
            x = x - eta_x * hg
            _finite(x)
            steps += 1
            reason = rec.row(steps, x, y, force=steps == T)
    except BudgetExhausted as exc:
        reason, message = "budget", str(exc)
    except DivergenceError as exc:
        reason, message = "diverged", str(exc)
    reason = reason or "completed"
    x_out = xsum / steps if steps else x.copy()
    return SolverReport("aid_hvp", x_out, x, rec.rows, oracle.tally, steps, rec.elapsed(), reason,
                        oracle.trace, message, {"y": y, "v": v})


def calibrate_acc(problem, base, x0, grid, **run_kw):
    """Run acc_f2ba_plus for each dict of field overrides in ``grid``.

    Returns (overrides, report) pairs sorted by final reference gradient
    norm (runs without a reference sort last).
    """
    from dataclasses import replace

    out = []
    for over in grid:
        rep = acc_f2ba_plus(problem, replace(base, **over), x0, **run_kw)
        out.append((over, rep))
    return sorted(out, key=lambda p: math.inf if p[1].final_ref_grad_norm is None else p[1].final_ref_grad_norm)
