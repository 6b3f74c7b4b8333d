"""Learning per-feature ridge weights for multinomial logistic regression.

    min_x  (1/m) sum_i loss_val_i(Y)
    s.t.   Y = argmin (1/n) sum_i loss_tr_i(Y) + sum_j exp(x_j) |Y_j,:|^2

Y is p x q (features x classes) and is flattened row-major into the lower
variable.  Datasets are stored one sample per line as
``label idx:val idx:val ...`` with 1-based feature indices.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg
from scipy.special import logsumexp

from ..core import BilevelProblem, SmoothnessProfile, as_vec
from ..errors import ContractError, DataError, ParseError


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (dense or CSR), labels and a split tag.

    Class labels are integers in 1..q.
    """

    features: object
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        X = self.features
        X = X.tocsr() if sparse.issparse(X) else np.atleast_2d(np.asarray(X, dtype=float))
        labels = np.asarray(self.labels)
        if X.shape[0] < 1:
            raise DataError("dataset has no samples")
        if labels.shape != (X.shape[0],):
            raise DataError(f"{labels.size} labels for {X.shape[0]} samples")
        data = X.data if sparse.issparse(X) else X
        if not np.all(np.isfinite(data)) or not np.all(np.isfinite(labels.astype(float))):
            raise DataError("nonfinite entries")
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def n_features(self):
        return self.features.shape[1]

    def class_indices(self, q):
        """0-based class indices, validating that labels are integers in 1..q."""
        lab = self.labels
        if not np.all(np.equal(np.mod(lab, 1), 0)):
            raise DataError("class labels must be integers")
        c = lab.astype(int) - 1
        if c.min() < 0 or c.max() >= q:
            raise DataError(f"class labels must lie in 1..{q}")
        return c


def load_dataset(path, n_features=None, split="train"):
    """Parse a ``label idx:val ...`` file; '#' starts a comment."""
    rows, cols, vals, labels = [], [], [], []
    max_idx = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            try:
                lab = float(parts[0])
            except ValueError:
                raise ParseError(f"bad label {parts[0]!r}", line=lineno) from None
            r = len(labels)
            labels.append(lab)
            for tok in parts[1:]:
                idx, sep, val = tok.partition(":")
                if not sep:
                    raise ParseError(f"expected idx:val, got {tok!r}", line=lineno)
                try:
                    j, v = int(idx), float(val)
                except ValueError:
                    raise ParseError(f"bad entry {tok!r}", line=lineno) from None
                if j < 1 or (n_features is not None and j > n_features):
                    raise DataError(f"line {lineno}: feature index {j} out of range")
                rows.append(r)
                cols.append(j - 1)
                vals.append(v)
                max_idx = max(max_idx, j)
    if not labels:
        raise DataError(f"{path}: no samples")
    d = n_features if n_features is not None else max_idx
    X = sparse.csr_matrix((vals, (rows, cols)), shape=(len(labels), d))
    lab = np.asarray(labels)
    if np.all(np.equal(np.mod(lab, 1), 0)):
        lab = lab.astype(int)
    return Dataset(X, lab, split)


def write_dataset(ds, path):
    X = ds.features if sparse.issparse(ds.features) else sparse.csr_matrix(ds.features)
    X = X.tocsr()
    X.sort_indices()
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(X.shape[0]):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            lab = ds.labels[i]
            toks = [str(int(lab)) if float(lab).is_integer() else repr(float(lab))]
            toks += [f"{j + 1}:{float(v)!r}" for j, v in zip(X.indices[lo:hi], X.data[lo:hi])]
            fh.write(" ".join(toks) + "\n")


def synth_textlike(seed, n, m, p, q, sparsity=0.05, n_informative=4, n_spurious=None, scale=3.0):
    """Sparse nonnegative bag-of-words style data.

    Each class owns ``n_informative`` features that fire often for it.  The
    remaining features are nuisance words firing with probability
    ``sparsity``; ``n_spurious`` of them are tied to the class in the training
    split only, so fitting them hurts validation loss and a learned
    per-feature penalty can suppress them.
    """
    if not (p >= q >= 2):
        raise ContractError("need p >= q >= 2")
    if q * n_informative > p:
        raise ContractError("not enough features for the informative blocks")
    rng = np.random.default_rng(seed)
    n_nuis = p - q * n_informative
    n_spurious = min(n_nuis, 2 * q if n_spurious is None else n_spurious)
    spurious = q * n_informative + np.arange(n_spurious)

    def draw(count, train):
        y = rng.integers(0, q, size=count)
        X = np.zeros((count, p))
        own = np.zeros((count, p), dtype=bool)
        for c in range(q):
            own[y == c, c * n_informative:(c + 1) * n_informative] = True
        inf_mask = np.zeros(p, dtype=bool)
        inf_mask[: q * n_informative] = True
        prob = np.where(own, 0.5, np.where(inf_mask, 0.08, sparsity))
        if train:
            tied = np.zeros((count, p), dtype=bool)
            tied[np.arange(count)[:, None], spurious[None, :]] = (spurious[None, :] % q) == y[:, None]
            prob = np.where(tied, 0.7, np.where(np.isin(np.arange(p), spurious), 0.02, prob))
        fire = rng.random((count, p)) < prob
        X[fire] = scale * rng.gamma(2.0, 0.5, size=int(fire.sum()))
        return Dataset(sparse.csr_matrix(X), y + 1, "train" if train else "val")

    return draw(n, True), draw(m, False)


def _onehot(c, q):
    O = np.zeros((c.size, q))
    O[np.arange(c.size), c] = 1.0
    return O


def _fast_matrix(X):
    """Dense array for fairly dense data (much faster products), CSR otherwise."""
    if not sparse.issparse(X):
        return np.ascontiguousarray(X)
    if X.nnz > 0.3 * X.shape[0] * X.shape[1]:
        return np.ascontiguousarray(X.toarray())
    return X.tocsr()


def _softmax(Z):
    # column loops: reductions along a short trailing axis are slow in numpy
    m = Z[:, 0].copy()
    for j in range(1, Z.shape[1]):
        np.maximum(m, Z[:, j], out=m)
    E = np.exp(Z - m[:, None])
    return E / (E @ np.ones(Z.shape[1]))[:, None]


def _spectral_norm_sq(X):
    if min(X.shape) <= 2:
        M = X.toarray() if sparse.issparse(X) else X
        return float(np.linalg.norm(M, 2)) ** 2
    s = splinalg.svds(sparse.csr_matrix(X), k=1, return_singular_vectors=False, random_state=0)
    return float(s[0]) ** 2


class Learn2Reg(BilevelProblem):
    """Per-feature regularization weights exp(x) for a p x q logistic model."""

    f_convex_in_y = True
    name = "learn2reg"

    def __init__(self, train, val, q=None):
        q = int(q if q is not None else max(int(np.max(train.labels)), int(np.max(val.labels))))
        if q < 2:
            raise ContractError("need at least two classes")
        if train.n_features != val.n_features:
            raise DataError("train and validation feature counts differ")
        self.q, self.p = q, train.n_features
        self.A_tr, self.A_val = _fast_matrix(train.features), _fast_matrix(val.features)
        self.A_trT, self.A_valT = _fast_matrix(self.A_tr.T), _fast_matrix(self.A_val.T)
        self.c_tr, self.c_val = train.class_indices(q), val.class_indices(q)
        missing = set(range(q)) - set(np.unique(self.c_tr).tolist())
        if missing:
            raise DataError(f"classes {sorted(c + 1 for c in missing)} absent from the training split")
        self.O_tr, self.O_val = _onehot(self.c_tr, q), _onehot(self.c_val, q)
        self.n, self.m = train.n, val.n
        self.d_x, self.d_y = self.p, self.p * q
        self.data_L_tr = _spectral_norm_sq(self.A_tr) / (2.0 * self.n)
        self.data_L_val = _spectral_norm_sq(self.A_val) / (2.0 * self.m)
        L0, mu0 = self.lower_constants(np.zeros(self.p))
        self.profile = SmoothnessProfile.simple(max(L0, self.data_L_val), mu0)

    def _Y(self, y):
        return as_vec(y, self.d_y, "y").reshape(self.p, self.q)

    @staticmethod
    def _ce(A, O, Y):
        Z = A @ Y
        return float(np.mean(logsumexp(Z, axis=1) - np.sum(Z * O, axis=1))), Z

    def f(self, x, y):
        return self._ce(self.A_val, self.O_val, self._Y(y))[0]

    def grad_f(self, x, y):
        Y = self._Y(y)
        S = _softmax(self.A_val @ Y)
        return np.zeros(self.p), np.asarray(self.A_valT @ (S - self.O_val)).ravel() / self.m

    def g(self, x, y):
        x = as_vec(x, self.p, "x")
        Y = self._Y(y)
        return self._ce(self.A_tr, self.O_tr, Y)[0] + float(np.exp(x) @ np.sum(Y * Y, axis=1))

    def grad_g(self, x, y):
        x = as_vec(x, self.p, "x")
        Y = self._Y(y)
        w = np.exp(x)
        S = _softmax(self.A_tr @ Y)
        gY = np.asarray(self.A_trT @ (S - self.O_tr)) / self.n + 2.0 * w[:, None] * Y
        return w * np.sum(Y * Y, axis=1), gY.ravel()

    def hvp_g(self, x, y, v):
        x = as_vec(x, self.p, "x")
        Y, V = self._Y(y), self._Y(v)
        w = np.exp(x)
        S = _softmax(self.A_tr @ Y)
        AV = self.A_tr @ V
        SAV = S * AV
        M = SAV - S * np.sum(SAV, axis=1, keepdims=True)
        HV = np.asarray(self.A_trT @ M) / self.n + 2.0 * w[:, None] * V
        return 2.0 * w * np.sum(Y * V, axis=1), HV.ravel()

    def lower_constants(self, x):
        w = np.exp(as_vec(x, self.p, "x"))
        return self.data_L_tr + 2.0 * float(w.max()), 2.0 * float(w.min())

    def upper_y_smoothness(self, x):
        return self.data_L_val

    def train_loss(self, y):
        return self._ce(self.A_tr, self.O_tr, self._Y(y))[0]

    def accuracy(self, y, split="val"):
        A, c = (self.A_val, self.c_val) if split == "val" else (self.A_tr, self.c_tr)
        return float(np.mean(np.argmax(A @ self._Y(y), axis=1) == c))


def learn2reg(train, val, q=None):
    return Learn2Reg(train, val, q)


def solve_lower(problem, x, y0=None, tol=1e-8, max_iter=100_000):
    """Tight AGD solve of the lower level; stops when |grad_y g| <= tol.

    Returns (y, final gradient norm).  Does not touch any oracle tally.
    """
    L, mu = problem.lower_constants(x)
    y = np.zeros(problem.d_y) if y0 is None else np.array(y0, dtype=float)
    m = (math.sqrt(L / mu) - 1.0) / (math.sqrt(L / mu) + 1.0)
    yt = y.copy()
    for k in range(max_iter):
        yn = yt - problem.grad_g(x, yt)[1] / L
        yt, y = yn + m * (yn - y), yn
        if k % 20 == 0 and float(np.linalg.norm(problem.grad_g(x, y)[1])) <= tol:
            break
    gn = float(np.linalg.norm(problem.grad_g(x, y)[1]))
    return y, gn


def validation_loss(problem, x, y0=None, tol=1e-8):
    """Hyper-objective value F(x) from a tight lower-level solve."""
    y, _ = solve_lower(problem, x, y0, tol)
    return problem.f(x, y), y


def penalty_direction(problem, x, lam, tol=1e-10, y0=None):
    """Penalty hypergradient estimate with both inner problems solved tightly."""
    z, _ = solve_lower(problem, x, y0, tol)

    class _Pen:
        d_y = problem.d_y

        def lower_constants(self, x_):
            L, mu = problem.lower_constants(x_)
            return problem.upper_y_smoothness(x_) + lam * L, lam * mu

        def grad_g(self, x_, w):
            return None, problem.grad_f(x_, w)[1] + lam * problem.grad_g(x_, w)[1]

    y, _ = solve_lower(_Pen(), x, z, tol * lam)
    gx_f = problem.grad_f(x, y)[0]
    return gx_f + lam * (problem.grad_g(x, y)[0] - problem.grad_g(x, z)[0])
