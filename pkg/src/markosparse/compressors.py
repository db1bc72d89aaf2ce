"""Sparsifying compressors with Markovian coordinate-selection laws.

The sparsification operator keeps m of d coordinates and rescales by d/m so
the compressed vector is conditionally unbiased given the mask distribution:

    Q(x) = (d/m) * x * 1(mask)

Mask laws:
  * rand      - uniform over coordinates, no memory.
  * banlast   - coordinates sent during the last K steps get probability 0,
                the remaining mass is uniform (K*m coordinates banned once
                the history buffer is full).
  * kawasaki  - every past selection within the window divides a coordinate's
                base weight 1/d by the forgetting rate b (twice selected ->
                divided by b^2); an activation then maps the penalized weight
                vector onto the probability simplex.
  * permk     - fresh uniform permutation each step, split into one block per
                worker; workers sharing a seed draw the same permutation.
  * natural   - per-coordinate random rounding to a signed power of two,
                unbiased; costs 9 bits/coordinate instead of 32.
  * identity  - passthrough.

Masks are mutually exclusive draws: for m > 1 the mask is built by sequential
weighted draws without replacement, renormalizing after each draw. Randomness
comes from numpy's PCG64 generator; every compressor owns its seeded stream,
so runs are reproducible from the seed alone.
"""

import numpy as np

from . import kernels
from .errors import InfeasibleSampleError, InvalidArgumentError

RAND = "rand"
BANLAST = "banlast"
KAWASAKI = "kawasaki"
PERMK = "permk"
NATURAL = "natural"
IDENTITY = "identity"

SPARSIFYING_KINDS = (RAND, BANLAST, KAWASAKI)
ALL_KINDS = SPARSIFYING_KINDS + (PERMK, NATURAL, IDENTITY)

ACTIVATIONS = ("normalize", "softmax", "project")

_KIND_IDS = {RAND: kernels.KIND_RAND, BANLAST: kernels.KIND_BANLAST, KAWASAKI: kernels.KIND_KAWASAKI}


def _as_prob_vector(p):
    p = np.asarray(p, dtype=np.float64)
    total = p.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise InvalidArgumentError("weights must be finite with positive sum")
    return p / total


def activation_normalize(w):
    """|w_j| / ||w||_1. Errors on the all-zero vector."""
    w = np.abs(np.asarray(w, dtype=np.float64))
    return _as_prob_vector(w)


def activation_softmax(w):
    w = np.asarray(w, dtype=np.float64)
    e = np.exp(w - w.max())
    return e / e.sum()


def activation_simplex_project(w):
    """Euclidean projection onto the probability simplex (sort + threshold)."""
    w = np.asarray(w, dtype=np.float64)
    u = np.sort(w)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, len(w) + 1)
    cond = u - (css - 1.0) / ks > 0.0
    rho = np.nonzero(cond)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1)
    p = np.maximum(w - theta, 0.0)
    return p / p.sum()


_ACTIVATION_FUNCS = {
    "normalize": activation_normalize,
    "softmax": activation_softmax,
    "project": activation_simplex_project,
}


def apply_activation(w, activation):
    try:
        return _ACTIVATION_FUNCS[activation](w)
    except KeyError:
        raise InvalidArgumentError(f"unknown activation '{activation}'") from None


def _history_counts(history, d):
    counts = np.zeros(d, dtype=np.int64)
    for mask in history:
        for j in mask:
            if not 0 <= j < d:
                raise InvalidArgumentError(f"history index {j} outside [0, {d})")
            counts[j] += 1
    return counts


def banlast_probabilities(history, d, m):
    """Uniform law over coordinates absent from every stored mask.

    With h masks stored the allowed mass is 1/(d - h*m) per coordinate; a
    partially filled buffer (h < K warm-up) simply bans fewer coordinates.
    """
    counts = _history_counts(history, d)
    p = (counts == 0).astype(np.float64)
    n_allowed = int(p.sum())
    if n_allowed < m:
        raise InfeasibleSampleError(
            f"banlast leaves {n_allowed} coordinates for a mask of size {m}"
        )
    return p / n_allowed


def kawasaki_probabilities(history, d, m, b, activation="normalize"):
    """Penalized law: weight (1/d)/b^c_j where c_j counts occurrences of j
    across the stored masks (multiplicity counted), mapped through the
    activation."""
    if b <= 1:
        raise InvalidArgumentError("forgetting rate b must exceed 1")
    counts = _history_counts(history, d)
    w = np.empty(d, dtype=np.float64)
    for j in range(d):
        w[j] = kernels.python_impl(kernels._penalized_weight)(d, float(b), int(counts[j]))
    return apply_activation(w, activation)


def sample_mask(p, m, rng):
    """m distinct indices by sequential weighted draws without replacement."""
    p = np.asarray(p, dtype=np.float64)
    if np.count_nonzero(p > 0) < m:
        raise InfeasibleSampleError(
            f"{int(np.count_nonzero(p > 0))} positive-probability coordinates, need {m}"
        )
    work = p.copy()
    mask = np.empty(m, dtype=np.int64)
    kernels.python_impl(kernels._sample_without_replacement)(rng, work, m, mask)
    return mask


def sparsify(x, mask, d, m):
    """(d/m) * x on the mask, zero elsewhere."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) != d:
        raise InvalidArgumentError(f"vector has length {len(x)}, expected {d}")
    out = np.zeros_like(x)
    out[mask] = x[mask] * (d / m)
    return out


def natural_compress(x, rng):
    """Random rounding of each entry to a signed power of two.

    |x_j| in [2^k, 2^(k+1)) goes up with probability (|x_j| - 2^k)/2^k and
    down otherwise, which makes the rounding unbiased; exact powers of two
    and zeros are fixed points. One uniform draw per coordinate.
    """
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for j in range(len(x)):
        v = x[j]
        if v == 0.0 or not np.isfinite(v):
            out[j] = v
            continue
        a = abs(v)
        lo = 2.0 ** np.floor(np.log2(a))
        if lo > a:  # float log2 can round up at the bin edge
            lo /= 2.0
        u = rng.random()
        if a == lo:  # power of two: keep, but burn the draw for stream stability
            out[j] = v
            continue
        frac = (a - lo) / lo
        mag = 2.0 * lo if u < frac else lo
        out[j] = np.copysign(mag, v)
    return out


def perm_k_masks(d, n, rng, pad=True):
    """Fresh uniform permutation of range(d) split into n blocks.

    With n not dividing d the first d % n workers receive one extra
    coordinate (pad convention); pass pad=False to reject that case.
    """
    if n < 1 or d < n:
        raise InvalidArgumentError(f"need 1 <= n <= d, got n={n}, d={d}")
    if d % n != 0 and not pad:
        raise InvalidArgumentError(f"d={d} not divisible by n={n} and padding disabled")
    perm = rng.permutation(d)
    base = d // n
    extra = d % n
    masks = []
    start = 0
    for i in range(n):
        size = base + (1 if i < extra else 0)
        masks.append(np.sort(perm[start:start + size]).astype(np.int64))
        start += size
    return masks


class Compressor:
    """Single-owner per-worker compressor state.

    Holds the mask history ring buffer, the seeded PCG64 stream, and per-kind
    parameters. `compress` mutates the state (advances rng, pushes masks);
    never share one instance across workers.
    """

    def __init__(self, kind, d, m=None, K=0, b=50.0, activation="normalize",
                 seed=0, worker=0, n_workers=1, allow_nonergodic=False):
        if kind not in ALL_KINDS:
            raise InvalidArgumentError(f"unknown compressor kind '{kind}'")
        if d < 1:
            raise InvalidArgumentError("d must be positive")
        if kind in (IDENTITY, NATURAL, PERMK):
            m = d if m is None else m
        if m is None or not 1 <= m <= d:
            raise InvalidArgumentError(f"mask size m={m} outside [1, {d}]")
        if K < 0:
            raise InvalidArgumentError("history size K must be non-negative")
        if kind == BANLAST and not allow_nonergodic and d <= (K + 1) * m:
            raise InvalidArgumentError(
                f"banlast needs d > (K+1)*m for an ergodic chain; got d={d}, K={K}, m={m}"
            )
        if kind == BANLAST and d < (K + 1) * m:
            # even with the ergodicity check waived the ban must stay feasible
            raise InfeasibleSampleError(
                f"banlast with d={d} < (K+1)*m = {(K + 1) * m} cannot fill a mask"
            )
        if kind == KAWASAKI and b <= 1:
            raise InvalidArgumentError("forgetting rate b must exceed 1")
        if activation not in ACTIVATIONS:
            raise InvalidArgumentError(f"unknown activation '{activation}'")

        self.kind = kind
        self.d = int(d)
        self.m = int(m)
        self.K = int(K) if kind in (BANLAST, KAWASAKI) else 0
        self.b = float(b)
        self.activation = activation
        self.seed = seed
        self.worker = worker
        self.n_workers = n_workers
        # PermK coordination: all workers of a team draw from the same stream
        # and therefore see the same permutation every step; other kinds get
        # an independent per-worker stream.
        if kind == PERMK:
            ss = np.random.SeedSequence([int(seed), 0x7065726D])
        else:
            ss = np.random.SeedSequence([int(seed), int(worker)])
        self.rng = np.random.Generator(np.random.PCG64(ss))

        self._hist = np.zeros((max(self.K, 1), self.m), dtype=np.int64)
        self._counts = np.zeros(self.d, dtype=np.int64)
        self._fill = 0
        self._pos = 0
        self._p_buf = np.empty(self.d, dtype=np.float64)
        self._mask_buf = np.empty(self.m, dtype=np.int64)

        # communication accounting: coordinates sent per step and bits per
        # coordinate (the budget layer multiplies by bits/32)
        self.bits_per_coord = 9 if kind == NATURAL else 32

    def history(self):
        """Stored masks, oldest first."""
        out = []
        for i in range(self._fill):
            row = (self._pos - self._fill + i) % max(self.K, 1)
            out.append(self._hist[row].copy())
        return out

    def probabilities(self):
        """Law of the next mask's sequential draws, given current history."""
        if self.kind == BANLAST:
            return banlast_probabilities(self.history(), self.d, self.m)
        if self.kind == KAWASAKI:
            return kawasaki_probabilities(self.history(), self.d, self.m, self.b, self.activation)
        if self.kind == RAND:
            return np.full(self.d, 1.0 / self.d)
        raise InvalidArgumentError(f"'{self.kind}' has no coordinate law")

    def compress(self, x):
        """One step: returns (compressed vector, coords_sent)."""
        x = np.asarray(x, dtype=np.float64)
        if len(x) != self.d:
            raise InvalidArgumentError(f"vector has length {len(x)}, expected {self.d}")
        if self.kind == IDENTITY:
            return x.copy(), self.d
        if self.kind == NATURAL:
            return natural_compress(x, self.rng), self.d
        if self.kind == PERMK:
            masks = perm_k_masks(self.d, self.n_workers, self.rng)
            mask = masks[self.worker]
            return sparsify(x, mask, self.d, len(mask)), len(mask)
        self._fill, self._pos = kernels.step_mask(
            self.rng, _KIND_IDS[self.kind], kernels.ACTIVATION_IDS[self.activation],
            self.d, self.m, self.K, self.b,
            self._hist, self._counts, self._fill, self._pos,
            self._p_buf, self._mask_buf,
        )
        return sparsify(x, self._mask_buf, self.d, self.m), self.m

    def last_mask(self):
        return self._mask_buf.copy()


def compress_step(state, x):
    """Functional alias for Compressor.compress."""
    return state.compress(x)


def make_compressor(kind, d, **kwargs):
    return Compressor(kind, d, **kwargs)
