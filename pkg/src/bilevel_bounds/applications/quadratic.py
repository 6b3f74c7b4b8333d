"""Quadratic bilevel problems whose hyper-objective is a convex quadratic
with an explicit Hessian: meta-learned linear regression, a robust-regression
leader/follower game and a graph-energy embedding model."""
from dataclasses import dataclass

import numpy as np

from ..core import CallableProblem, QuadraticLowerLevel, SmoothnessProfile, as_vec, spd_solve
from ..errors import ContractError, RegimeError

MAX_DIM = 512


class ClosedFormQuadratic(CallableProblem):
    """Callable problem with a known lower-level solution map and F-Hessian."""

    def __init__(self, *args, y_star=None, hessian=None, **kw):
        super().__init__(*args, **kw)
        self._y_star = y_star
        self.hessian = hessian

    def y_star(self, x):
        return self._y_star(as_vec(x, self.d_x, "x"))


def _check_dim(d):
    if d > MAX_DIM:
        raise ContractError(f"dimension {d} exceeds the dense-algebra cap {MAX_DIM}")


def _profile(lower, Lf, mu_x=0.0):
    lo, hi = lower.eigen_bounds()
    jn = float(np.linalg.norm(lower.J, 2)) if lower.J.size else 0.0
    L1 = max(hi, jn, Lf, lo)
    return SmoothnessProfile.simple(L1, lo, L2=0.0, mu_x=mu_x)


@dataclass
class TaskCollection:
    """Per-task (A_tr, b_tr, A_test, b_test) and a ridge weight lam > 0."""

    A_tr: list
    b_tr: list
    A_test: list
    b_test: list
    lam: float

    def __post_init__(self):
        n = len(self.A_tr)
        if n == 0 or not (len(self.b_tr) == len(self.A_test) == len(self.b_test) == n):
            raise ContractError("task lists must be nonempty and of equal length")
        if self.lam <= 0:
            raise ContractError("ridge weight lam must be positive")
        self.A_tr = [np.atleast_2d(np.asarray(a, float)) for a in self.A_tr]
        self.A_test = [np.atleast_2d(np.asarray(a, float)) for a in self.A_test]
        self.b_tr = [np.asarray(b, float) for b in self.b_tr]
        self.b_test = [np.asarray(b, float) for b in self.b_test]
        d = self.A_tr[0].shape[1]
        for i in range(n):
            if self.A_tr[i].shape[1] != d or self.A_test[i].shape[1] != d:
                raise ContractError(f"task {i}: feature dims disagree")
            if self.A_tr[i].shape[0] != self.b_tr[i].size or self.A_test[i].shape[0] != self.b_test[i].size:
                raise ContractError(f"task {i}: row counts disagree with labels")

    @property
    def n_tasks(self):
        return len(self.A_tr)

    @property
    def dim(self):
        return self.A_tr[0].shape[1]

    @classmethod
    def random(cls, n_tasks, dim, n_tr, n_test, lam, seed=0):
        rng = np.random.default_rng(seed)
        w = rng.standard_normal(dim)
        A_tr, b_tr, A_te, b_te = [], [], [], []
        for _ in range(n_tasks):
            wi = w + 0.3 * rng.standard_normal(dim)
            a, c = rng.standard_normal((n_tr, dim)), rng.standard_normal((n_test, dim))
            A_tr.append(a)
            b_tr.append(a @ wi + 0.1 * rng.standard_normal(n_tr))
            A_te.append(c)
            b_te.append(c @ wi + 0.1 * rng.standard_normal(n_test))
        return cls(A_tr, b_tr, A_te, b_te, lam)


def meta_linreg(tasks):
    """Shared prior x, per-task ridge fits y_i pulled toward x.

    f = (1/T) sum 1/2 |A_tr_i y_i - b_tr_i|^2,
    g = sum 1/2 |A_test_i y_i - b_test_i|^2 + lam/2 |y_i - x|^2.
    """
    d, T, lam = tasks.dim, tasks.n_tasks, float(tasks.lam)
    _check_dim(d * T)
    G_te = [a.T @ a for a in tasks.A_test]
    G_tr = [a.T @ a for a in tasks.A_tr]
    H = np.zeros((d * T, d * T))
    for i in range(T):
        H[i * d:(i + 1) * d, i * d:(i + 1) * d] = G_te[i] + lam * np.eye(d)
    J = -lam * np.tile(np.eye(d), (1, T))
    b = -np.concatenate([a.T @ bb for a, bb in zip(tasks.A_test, tasks.b_test)])
    lower = QuadraticLowerLevel(H, J, b)

    def blocks(y):
        return y.reshape(T, d)

    def f(x, y):
        Y = blocks(y)
        return sum(0.5 * float(np.sum((a @ Y[i] - bb) ** 2))
                   for i, (a, bb) in enumerate(zip(tasks.A_tr, tasks.b_tr))) / T

    def grad_f(x, y):
        Y = blocks(y)
        gy = np.concatenate([a.T @ (a @ Y[i] - bb) for i, (a, bb) in enumerate(zip(tasks.A_tr, tasks.b_tr))]) / T
        return np.zeros(d), gy

    def g(x, y):
        Y = blocks(y)
        val = 0.0
        for i, (a, bb) in enumerate(zip(tasks.A_test, tasks.b_test)):
            val += 0.5 * float(np.sum((a @ Y[i] - bb) ** 2)) + 0.5 * lam * float(np.sum((Y[i] - x) ** 2))
        return val

    def grad_g(x, y):
        Y = blocks(y)
        gx = -lam * np.sum(Y - x, axis=0)
        gy = np.concatenate([a.T @ (a @ Y[i] - bb) + lam * (Y[i] - x)
                             for i, (a, bb) in enumerate(zip(tasks.A_test, tasks.b_test))])
        return gx, gy

    def y_star(x):
        return np.concatenate([spd_solve(G_te[i] + lam * np.eye(d), lam * x + tasks.A_test[i].T @ tasks.b_test[i])
                               for i in range(T)])

    def hyper(x):
        x = as_vec(x, d, "x")
        Y = blocks(y_star(x))
        F, gF = 0.0, np.zeros(d)
        for i in range(T):
            r = tasks.A_tr[i] @ Y[i] - tasks.b_tr[i]
            F += 0.5 * float(r @ r)
            gF += lam * spd_solve(G_te[i] + lam * np.eye(d), tasks.A_tr[i].T @ r)
        return F / T, gF / T

    hess = np.zeros((d, d))
    for i in range(T):
        Minv = spd_solve(G_te[i] + lam * np.eye(d), np.eye(d))
        hess += lam**2 * Minv @ G_tr[i] @ Minv
    hess /= T
    Lf = max(float(np.linalg.eigvalsh(gt)[-1]) for gt in G_tr) / T
    return ClosedFormQuadratic(d, d * T, f, grad_f, g=g, grad_g=grad_g, lower=lower,
                               profile=_profile(lower, Lf), hyper=hyper, f_convex_in_y=True,
                               name="meta-linreg", y_star=y_star, hessian=hess)


def stackelberg_regression(A, b, weights, lam):
    """Learner x against a label-perturbing follower y.

    f = 1/2 |Ax - y|^2,  g = -1/2 |D(Ax - y)|^2 + lam/2 |D(y - b)|^2,  D = diag(weights).
    The follower's problem is strongly convex exactly when lam > 1 (and all
    weights are nonzero); then y*(x) = (lam b - Ax)/(lam - 1).
    """
    lam = float(lam)
    if lam <= 1:
        raise RegimeError(f"follower problem is not strongly convex for lam = {lam} <= 1")
    A = np.atleast_2d(np.asarray(A, float))
    b = np.asarray(b, float)
    w = np.asarray(weights, float)
    n, d = A.shape
    _check_dim(max(n, d))
    if b.shape != (n,) or w.shape != (n,):
        raise ContractError("b and weights must have one entry per row of A")
    if np.any(w == 0):
        raise RegimeError("zero weights make the follower problem degenerate")
    D2 = w**2
    lower = QuadraticLowerLevel(np.diag((lam - 1.0) * D2), A.T * D2, -lam * D2 * b)

    def f(x, y):
        r = A @ x - y
        return 0.5 * float(r @ r)

    def grad_f(x, y):
        r = A @ x - y
        return A.T @ r, -r

    def g(x, y):
        r, s = A @ x - y, y - b
        return -0.5 * float(np.sum(D2 * r * r)) + 0.5 * lam * float(np.sum(D2 * s * s))

    def grad_g(x, y):
        r = A @ x - y
        return -A.T @ (D2 * r), D2 * r + lam * D2 * (y - b)

    def y_star(x):
        return (lam * b - A @ x) / (lam - 1.0)

    c = lam / (lam - 1.0)

    def hyper(x):
        x = as_vec(x, d, "x")
        r = c * (A @ x - b)
        return 0.5 * float(r @ r), c * (A.T @ r)

    hess = c**2 * (A.T @ A)
    Lf = max(1.0, float(np.linalg.norm(A, 2)) ** 2)
    return ClosedFormQuadratic(d, n, f, grad_f, g=g, grad_g=grad_g, lower=lower, profile=_profile(lower, Lf),
                               hyper=hyper, f_convex_in_y=True, name="stackelberg", y_star=y_star, hessian=hess)


def path_laplacian(n):
    """Laplacian of the path graph on n nodes."""
    L = np.diag(np.r_[1.0, np.full(max(n - 2, 0), 2.0), 1.0][:n]) - np.eye(n, k=1) - np.eye(n, k=-1)
    if n == 1:
        L[0, 0] = 0.0
    return L


def graph_energy(A, b, L_graph, lam):
    """Node embeddings y smoothed over a graph from features Ax.

    f = 1/2 |y - b|^2,  g = 1/2 |Ax - y|^2 + lam/2 y'Ly,  y*(x) = (I + lam L)^{-1} Ax.
    """
    lam = float(lam)
    if lam <= 0:
        raise ContractError("lam must be positive")
    A = np.atleast_2d(np.asarray(A, float))
    b = np.asarray(b, float)
    Lg = np.asarray(L_graph, float)
    n, d = A.shape
    _check_dim(max(n, d))
    if Lg.shape != (n, n) or not np.allclose(Lg, Lg.T, atol=1e-12):
        raise ContractError("graph Laplacian must be symmetric n x n")
    if np.linalg.eigvalsh(Lg)[0] < -1e-10:
        raise ContractError("graph Laplacian must be positive semidefinite")
    M = np.eye(n) + lam * Lg
    lower = QuadraticLowerLevel(M, -A.T, np.zeros(n))

    def f(x, y):
        r = y - b
        return 0.5 * float(r @ r)

    def grad_f(x, y):
        return np.zeros(d), y - b

    def g(x, y):
        r = A @ x - y
        return 0.5 * float(r @ r) + 0.5 * lam * float(y @ (Lg @ y))

    def grad_g(x, y):
        r = A @ x - y
        return A.T @ r, -r + lam * (Lg @ y)

    def y_star(x):
        return spd_solve(M, A @ x)

    def hyper(x):
        x = as_vec(x, d, "x")
        r = y_star(x) - b
        return 0.5 * float(r @ r), A.T @ spd_solve(M, r)

    B = spd_solve(M, A)
    hess = B.T @ B
    return ClosedFormQuadratic(d, n, f, grad_f, g=g, grad_g=grad_g, lower=lower, profile=_profile(lower, 1.0),
                               hyper=hyper, f_convex_in_y=True, name="graph-energy", y_star=y_star, hessian=hess)
