"""Small synthetic bilevel problems with quadratic lower levels and exact
references, used for solver checks and estimator-bias measurements."""
import numpy as np

from ..core import CallableProblem, QuadraticLowerLevel, SmoothnessProfile
from ..errors import ContractError


def random_spd(d, lo, hi, rng):
    """Random symmetric matrix with spectrum spread over [lo, hi] (both attained)."""
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    w = np.sort(rng.uniform(lo, hi, size=d))
    w[0], w[-1] = lo, hi
    return (q * w) @ q.T


def random_quadratic_problem(d=10, kappa=10.0, seed=0, L1=1.0, d_x=None, n_waves=4, coupling="random"):
    """Nonconvex upper level over a quadratic lower level with cond(H) = kappa.

    f(x, y) = L1/(4 n) sum_k cos(<p_k, x> + <q_k, y>) + L1/4 |y - c|^2 with unit
    directions (p_k, q_k); g = 1/2 y'Hy + x'Jy + b'y with spec(H) in
    [L1/kappa, L1] and |J| <= L1/2.

    ``coupling="random"`` draws J at random, so the Jacobian of y*(x) has
    condition number up to kappa and F is badly conditioned.  ``"aligned"``
    takes J = M'H / 2 with M orthogonal (d_x = d), so y*(x) = -M x / 2 - H^{-1} b
    and F is well conditioned while the inner problems keep cond(H) = kappa.
    """
    if kappa < 1 or d < 1:
        raise ContractError("need kappa >= 1 and d >= 1")
    d_x = d if d_x is None else int(d_x)
    rng = np.random.default_rng(seed)
    mu = L1 / kappa
    H = random_spd(d, mu, L1, rng)
    if coupling == "random":
        J = rng.standard_normal((d_x, d))
        J *= 0.5 * L1 / np.linalg.norm(J, 2)
    elif coupling == "aligned":
        if d_x != d:
            raise ContractError("aligned coupling needs d_x = d")
        M, _ = np.linalg.qr(rng.standard_normal((d, d)))
        J = 0.5 * M.T @ H
    else:
        raise ContractError(f"unknown coupling {coupling!r}")
    b = rng.standard_normal(d)
    P = rng.standard_normal((n_waves, d_x + d))
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    Px, Py = P[:, :d_x], P[:, d_x:]
    c = rng.standard_normal(d)
    amp = L1 / (4.0 * n_waves)

    def f(x, y):
        return amp * float(np.sum(np.cos(Px @ x + Py @ y))) + 0.25 * L1 * float(np.sum((y - c) ** 2))

    def grad_f(x, y):
        s = -amp * np.sin(Px @ x + Py @ y)
        return Px.T @ s, Py.T @ s + 0.5 * L1 * (y - c)

    lower = QuadraticLowerLevel(H, J, b)
    # f: gradient Lipschitz <= L1/4 + L1/2, Hessian Lipschitz <= L1/4
    profile = SmoothnessProfile(L=(None, L1, L1 / 4.0), mu_y=mu, p=1)
    prob = CallableProblem(d_x, d, f, grad_f, lower=lower, profile=profile, name=f"quad-k{kappa:g}")
    prob.upper_y_smoothness = lambda x: 0.75 * L1
    return prob


def decoupled_problem(d=5, seed=0):
    """f(x, y) = 1/2|x - a|^2 + 1/2|y|^2, g = 1/2|y - x|^2: y*(x) = x,
    F(x) = 1/2|x - a|^2 + 1/2|x|^2."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(d)

    def f(x, y):
        return 0.5 * float(np.sum((x - a) ** 2)) + 0.5 * float(y @ y)

    def grad_f(x, y):
        return x - a, y.copy()

    def hyper(x):
        return 0.5 * float(np.sum((x - a) ** 2)) + 0.5 * float(x @ x), 2 * x - a

    lower = QuadraticLowerLevel(np.eye(d), -np.eye(d), np.zeros(d))
    prob = CallableProblem(d, d, f, grad_f, lower=lower, profile=SmoothnessProfile.simple(1.0, 1.0),
                           hyper=hyper, f_convex_in_y=True, name="decoupled")
    prob.minimizer = a / 2.0
    return prob


def saddle_problem(d=4, neg=-0.1, quartic=1.0, pos=1.0):
    """Hyper-objective with a strict saddle at the origin.

    f(x, y) = 1/2 y'Dy + quartic/4 y_1^4 with D = diag(neg, pos, ..., pos) and
    g(x, y) = 1/2|y|^2 - <x, y>, so y*(x) = x and
    F(x) = 1/2 x'Dx + quartic/4 x_1^4; minima at x_1 = +-sqrt(-neg/quartic).
    """
    if neg >= 0:
        raise ContractError("neg must be negative")
    Dg = np.full(d, float(pos))
    Dg[0] = neg

    def f(x, y):
        return 0.5 * float(y @ (Dg * y)) + 0.25 * quartic * float(y[0] ** 4)

    def grad_f(x, y):
        gy = Dg * y
        gy[0] += quartic * y[0] ** 3
        return np.zeros(d), gy

    def hyper(x):
        g = Dg * x
        g[0] += quartic * x[0] ** 3
        return f(x, x), g

    lower = QuadraticLowerLevel(np.eye(d), -np.eye(d), np.zeros(d))
    prob = CallableProblem(d, d, f, grad_f, lower=lower, profile=SmoothnessProfile.simple(1.0, 1.0),
                           hyper=hyper, name="saddle")
    # y-curvature of f over the ball |y_1| <= 1
    prob.upper_y_smoothness = lambda x: max(abs(neg) + 3.0 * quartic, pos)
    prob.hessian = lambda x: np.diag(Dg + np.eye(d)[0] * 3.0 * quartic * x[0] ** 2)
    prob.rho_F = 6.0 * quartic
    prob.minimum_x1 = float(np.sqrt(-neg / quartic))
    return prob
