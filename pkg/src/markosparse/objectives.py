"""LIBSVM parsing, sharding, and the regularized logistic-regression objective.

The distributed objective is f(x) = (1/n) sum_i f_i(x) with per-shard

    f_i(w) = (1/|S_i|) sum_{s in S_i} log(1 + exp(-y_s <w, x_s>)) + lambda ||w||^2

(no 1/2 on the regularizer, so the strong-convexity constant is 2*lambda).
Also provides empirical estimators for the smoothness and similarity
constants and small synthetic problem generators used by tests and the
experiment harness.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from .errors import InvalidArgumentError, NumericalError, ParseError

_LABEL_MAPS = (
    # precedence order; the larger raw label maps to +1
    ({-1.0, 1.0}, {-1.0: -1.0, 1.0: 1.0}),
    ({0.0, 1.0}, {0.0: -1.0, 1.0: 1.0}),
    ({1.0, 2.0}, {1.0: -1.0, 2.0: 1.0}),
)


@dataclass(frozen=True)
class Dataset:
    """Sparse rows (CSR), labels in {-1,+1}, and the feature dimension."""
    X: sp.csr_matrix
    y: np.ndarray
    d: int

    @property
    def n_rows(self):
        return self.X.shape[0]

    def row_pairs(self, i):
        """(index, value) pairs of row i, 0-based, increasing index."""
        start, end = self.X.indptr[i], self.X.indptr[i + 1]
        return list(zip(self.X.indices[start:end].tolist(),
                        self.X.data[start:end].tolist()))


def parse_libsvm(source, dim=None):
    """Parses LIBSVM text: `<label> <idx>:<val> ...`, 1-based strictly
    increasing indices. Accepts a string or any iterable of lines.

    Raw labels {-1,+1}, {0,1} and {1,2} are accepted, mapped so the larger
    label becomes +1; the feature dimension is the largest index seen unless
    `dim` forces a larger one.
    """
    lines = source.splitlines() if isinstance(source, str) else source
    raw_labels = []
    rows_idx = []
    rows_val = []
    indptr = [0]
    seen = set()
    max_idx = 0
    for line_no, line in enumerate(lines, start=1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            label = float(tokens[0])
        except ValueError:
            raise ParseError(line_no, f"bad label token {tokens[0]!r}") from None
        seen.add(label)
        if not any(seen <= accepted for accepted, _ in _LABEL_MAPS):
            raise ParseError(line_no, f"label {tokens[0]!r} does not fit any accepted encoding")
        prev = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(line_no, f"expected idx:val, got {tok!r}")
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(line_no, f"bad feature token {tok!r}") from None
            if idx < 1:
                raise ParseError(line_no, f"index {idx} must be >= 1")
            if idx <= prev:
                raise ParseError(line_no, f"indices not strictly increasing at {tok!r}")
            prev = idx
            rows_idx.append(idx - 1)
            rows_val.append(val)
        max_idx = max(max_idx, prev)
        raw_labels.append(label)
        indptr.append(len(rows_idx))
    d = max_idx if dim is None else dim
    if dim is not None and dim < max_idx:
        raise InvalidArgumentError(f"dim={dim} smaller than max feature index {max_idx}")
    for accepted, mapping in _LABEL_MAPS:
        if seen <= accepted:
            y = np.array([mapping[v] for v in raw_labels])
            break
    else:  # empty input
        y = np.zeros(0)
    X = sp.csr_matrix(
        (np.array(rows_val), np.array(rows_idx, dtype=np.int32), np.array(indptr, dtype=np.int32)),
        shape=(len(raw_labels), d),
    )
    return Dataset(X, y, d)


def load_libsvm(path, dim=None):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_libsvm(fh, dim=dim)


def serialize_libsvm(dataset):
    """Canonical text form: labels 1/-1, 1-based indices, repr() values."""
    out = []
    for i in range(dataset.n_rows):
        parts = ["1" if dataset.y[i] > 0 else "-1"]
        parts += [f"{idx + 1}:{val!r}" for idx, val in dataset.row_pairs(i)]
        out.append(" ".join(parts))
    return "\n".join(out) + ("\n" if out else "")


def merge_datasets(datasets):
    X = sp.vstack([ds.X for ds in datasets], format="csr")
    y = np.concatenate([ds.y for ds in datasets])
    return Dataset(X, y, datasets[0].d)


@dataclass(frozen=True)
class ShardedProblem:
    """n per-worker shards plus the shared L2 coefficient; smoothness and
    similarity constants are None until estimated."""
    shards: tuple
    lam: float
    L_i: tuple = None
    L_global: float = None
    L_sq: float = None
    mu: float = None
    delta_sq: float = None
    sigma_sq: float = None

    @property
    def n(self):
        return len(self.shards)

    @property
    def d(self):
        return self.shards[0].d

    def shard_loss_grad(self, w, i):
        return loss_and_gradient(w, self.shards[i], self.lam)

    def full_loss_grad(self, w):
        loss = 0.0
        grad = np.zeros(self.d)
        for shard in self.shards:
            l, g = loss_and_gradient(w, shard, self.lam)
            loss += l
            grad += g
        return loss / self.n, grad / self.n


def partition(dataset, n, rng, lam=0.0):
    """Shuffles rows with the given seed, splits into n contiguous shards
    whose sizes differ by at most one."""
    if n < 1:
        raise InvalidArgumentError("need n >= 1 workers")
    if n > dataset.n_rows:
        raise InvalidArgumentError(f"cannot split {dataset.n_rows} rows across {n} workers")
    if lam < 0:
        raise InvalidArgumentError("lambda must be non-negative")
    rng = np.random.default_rng(rng)
    order = rng.permutation(dataset.n_rows)
    base, extra = divmod(dataset.n_rows, n)
    shards = []
    start = 0
    for i in range(n):
        size = base + (1 if i < extra else 0)
        take = order[start:start + size]
        shards.append(Dataset(dataset.X[take], dataset.y[take], dataset.d))
        start += size
    return ShardedProblem(tuple(shards), lam)


def loss_and_gradient(w, dataset, lam):
    """Value and exact gradient of one shard objective at w."""
    w = np.asarray(w, dtype=np.float64)
    z = dataset.X @ w
    t = -dataset.y * z
    rows = dataset.n_rows
    loss = float(np.logaddexp(0.0, t).sum() / rows + lam * (w @ w))
    coeff = -dataset.y * expit(t) / rows
    grad = dataset.X.T @ coeff + 2.0 * lam * w
    return loss, np.asarray(grad)


def estimate_smoothness(dataset, lam, tol=1e-8, max_iter=10_000):
    """L_i = lambda_max(X^T X)/(4 |shard|) + 2 lambda, largest eigenvalue by
    power iteration to relative tolerance tol."""
    if dataset.n_rows == 0:
        raise InvalidArgumentError("empty shard")
    d = dataset.d
    # deterministic non-uniform start so no single eigenvector is missed
    v = 1.0 + np.arange(d) / max(d, 1)
    v /= np.linalg.norm(v)
    eig = 0.0
    for _ in range(max_iter):
        u = dataset.X @ v
        new = dataset.X.T @ u
        norm = np.linalg.norm(new)
        if norm == 0.0:
            return 2.0 * lam
        new_eig = float(v @ new)
        v = np.asarray(new) / norm
        if abs(new_eig - eig) <= tol * max(abs(new_eig), 1e-30):
            return new_eig / (4.0 * dataset.n_rows) + 2.0 * lam
        eig = new_eig
    raise NumericalError(f"power iteration did not converge within {max_iter} iterations")


def strong_convexity_constant(lam):
    """mu = 2*lambda from the ||w||^2 regularizer; logistic part is convex."""
    if lam <= 0:
        raise InvalidArgumentError("objective is strongly convex only for lambda > 0")
    return 2.0 * lam


def estimate_similarity(problem, probes):
    """Conservative (delta^2, sigma^2) envelope for the gradient-similarity
    inequality ||grad f_i - grad f||^2 <= delta^2 ||grad f||^2 + sigma^2.

    Over all (shard, probe) pairs let a = ||grad f||^2, b = ||grad f_i -
    grad f||^2. sigma^2 is the max b among pairs with a below the median;
    delta^2 is the max of (b - sigma^2)/a over the rest, clamped at 0. This
    is an empirical estimate, not a certificate.
    """
    probes = list(probes)
    if len(probes) < 2:
        raise InvalidArgumentError("need at least 2 probe points")
    a_vals = []
    b_vals = []
    for x in probes:
        _, g_full = problem.full_loss_grad(x)
        a = float(g_full @ g_full)
        for i in range(problem.n):
            _, g_i = problem.shard_loss_grad(x, i)
            diff = g_i - g_full
            a_vals.append(a)
            b_vals.append(float(diff @ diff))
    a_vals = np.array(a_vals)
    b_vals = np.array(b_vals)
    med = float(np.median(a_vals))
    # zero-gradient probes cannot inform delta, so they feed the sigma pool
    low = (a_vals < med) | (a_vals == 0.0)
    sigma_sq = float(b_vals[low].max()) if low.any() else 0.0
    rest = ~low
    if rest.any():
        delta_sq = float(np.max((b_vals[rest] - sigma_sq) / a_vals[rest]))
        delta_sq = max(delta_sq, 0.0)
    else:
        delta_sq = 0.0
    return delta_sq, sigma_sq


def default_probes(problem, n_probes=8, seed=0, scale=1.0, trajectory=()):
    """Gaussian perturbations of w=0, optionally extended by iterates from a
    training trajectory."""
    rng = np.random.default_rng(seed)
    probes = [np.zeros(problem.d)]
    probes += [scale * rng.standard_normal(problem.d) for _ in range(n_probes - 1)]
    probes += [np.asarray(x) for x in trajectory]
    return probes


def estimate_constants(problem, probes=None, tol=1e-8):
    """Returns a copy of the problem with L_i, L_global, L_sq, mu and the
    similarity constants filled in."""
    L_i = tuple(estimate_smoothness(s, problem.lam, tol=tol) for s in problem.shards)
    L_global = float(np.mean(L_i))
    L_sq = float(np.mean(np.square(L_i)))
    mu = strong_convexity_constant(problem.lam) if problem.lam > 0 else None
    if probes is None:
        probes = default_probes(problem)
    delta_sq, sigma_sq = estimate_similarity(problem, probes)
    return replace(problem, L_i=L_i, L_global=L_global, L_sq=L_sq, mu=mu,
                   delta_sq=delta_sq, sigma_sq=sigma_sq)


class QuadraticProblem:
    """f_i(x) = 0.5 ||x - a_i||^2; the shard-gradient shifts relative to the
    mean objective sum to zero by construction. Used for exactness tests."""

    def __init__(self, centers):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        self.lam = 0.0

    @property
    def n(self):
        return self.centers.shape[0]

    @property
    def d(self):
        return self.centers.shape[1]

    def shard_loss_grad(self, w, i):
        diff = w - self.centers[i]
        return 0.5 * float(diff @ diff), diff

    def full_loss_grad(self, w):
        diffs = w - self.centers
        return 0.5 * float(np.mean(np.sum(diffs * diffs, axis=1))), diffs.mean(axis=0)


def synthetic_binary_dataset(n_rows, d, nnz_per_row, seed, label_noise=0.5):
    """Sparse 0/1-feature dataset with labels from a planted linear rule plus
    Gaussian noise. Deterministic in seed."""
    if not 1 <= nnz_per_row <= d:
        raise InvalidArgumentError("need 1 <= nnz_per_row <= d")
    rng = np.random.default_rng(seed)
    w_true = rng.standard_normal(d)
    indices = np.empty(n_rows * nnz_per_row, dtype=np.int32)
    for r in range(n_rows):
        cols = np.sort(rng.choice(d, size=nnz_per_row, replace=False))
        indices[r * nnz_per_row:(r + 1) * nnz_per_row] = cols
    data = np.ones(n_rows * nnz_per_row)
    indptr = np.arange(0, (n_rows + 1) * nnz_per_row, nnz_per_row, dtype=np.int32)
    X = sp.csr_matrix((data, indices, indptr), shape=(n_rows, d))
    margin = X @ w_true / math.sqrt(nnz_per_row) + label_noise * rng.standard_normal(n_rows)
    y = np.where(margin >= 0, 1.0, -1.0)
    return Dataset(X, y, d)


def separable_binary_dataset(n_rows, d, nnz_per_row, seed):
    """Sparse 0/1-feature dataset where each class draws its active columns
    from its own half of the feature space, mimicking categorical datasets
    with class-exclusive indicator features. Linearly separable, so worker
    gradients nearly agree at the regularized optimum. Deterministic in seed."""
    half = d // 2
    if not 1 <= nnz_per_row <= half:
        raise InvalidArgumentError("need 1 <= nnz_per_row <= d // 2")
    rng = np.random.default_rng(seed)
    indices = np.empty(n_rows * nnz_per_row, dtype=np.int32)
    y = np.empty(n_rows)
    for r in range(n_rows):
        pos = rng.random() < 0.5
        cols = (0 if pos else half) + rng.choice(half, size=nnz_per_row, replace=False)
        cols.sort()
        indices[r * nnz_per_row:(r + 1) * nnz_per_row] = cols
        y[r] = 1.0 if pos else -1.0
    data = np.ones(n_rows * nnz_per_row)
    indptr = np.arange(0, (n_rows + 1) * nnz_per_row, nnz_per_row, dtype=np.int32)
    X = sp.csr_matrix((data, indices, indptr), shape=(n_rows, d))
    return Dataset(X, y, d)


def heterogeneous_problem(n, d, rows_per_shard, shift, lam, seed):
    """n shards of dense Gaussian rows whose feature means are shifted per
    shard, so worker gradients disagree at the optimum (sigma^2 > 0)."""
    rng = np.random.default_rng(seed)
    w_true = rng.standard_normal(d) / math.sqrt(d)
    shards = []
    for i in range(n):
        center = shift * rng.standard_normal(d)
        rows = center + rng.standard_normal((rows_per_shard, d))
        margin = rows @ w_true + 0.5 * rng.standard_normal(rows_per_shard)
        y = np.where(margin >= 0, 1.0, -1.0)
        shards.append(Dataset(sp.csr_matrix(rows), y, d))
    return ShardedProblem(tuple(shards), lam)
