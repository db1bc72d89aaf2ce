"""Hot loops: mask sampling, history updates, chain simulation.

Every kernel is written as a plain scalar loop over numpy arrays and draws
randomness exclusively through ``rng.random()`` on a ``numpy.random.Generator``.
When numba is available the kernels are compiled with ``@njit``; otherwise (or
when the ``MARKOSPARSE_DISABLE_NUMBA`` environment variable is set to 1/true)
the same functions run interpreted. Numba operates on the very same PCG64
bit-generator state as numpy, so the two backends consume the stream
identically and produce bit-identical mask sequences. ``bench.py`` compares
their speed.
"""

import os

import numpy as np

DISABLE_ENV = "MARKOSPARSE_DISABLE_NUMBA"

# compressor kinds handled by the kernels (baselines live in compressors.py)
KIND_RAND = 0
KIND_BANLAST = 1
KIND_KAWASAKI = 2

ACT_NORMALIZE = 0
ACT_SOFTMAX = 1
ACT_PROJECT = 2

ACTIVATION_IDS = {"normalize": ACT_NORMALIZE, "softmax": ACT_SOFTMAX, "project": ACT_PROJECT}


def _numba_disabled_by_env():
    return os.environ.get(DISABLE_ENV, "").strip().lower() in ("1", "true", "yes")


NUMBA_ENABLED = False
if not _numba_disabled_by_env():
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass

if NUMBA_ENABLED:
    def _maybe_njit(func):
        # fastmath stays off: the interpreted path must see the same float ops
        return _njit(cache=True)(func)
else:
    def _maybe_njit(func):
        return func


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"


def python_impl(kernel):
    """The interpreted counterpart of a kernel (itself when numba is off)."""
    return getattr(kernel, "py_func", kernel)


@_maybe_njit
def _penalized_weight(d, b, count):
    # (1/d) / b**count, evaluated by repeated division so that the compiled
    # and interpreted paths round identically
    w = 1.0 / d
    for _ in range(count):
        w /= b
    return w


@_maybe_njit
def _apply_activation(p, act):
    d = p.shape[0]
    if act == ACT_SOFTMAX:
        hi = p[0]
        for j in range(1, d):
            if p[j] > hi:
                hi = p[j]
        total = 0.0
        for j in range(d):
            p[j] = np.exp(p[j] - hi)
            total += p[j]
        for j in range(d):
            p[j] /= total
    elif act == ACT_PROJECT:
        # Euclidean projection onto the simplex, sort-and-threshold form
        u = np.sort(p)[::-1]
        css = 0.0
        theta = 0.0
        for i in range(d):
            css += u[i]
            t = (css - 1.0) / (i + 1)
            if u[i] - t > 0.0:
                theta = t
        for j in range(d):
            v = p[j] - theta
            p[j] = v if v > 0.0 else 0.0
        total = 0.0
        for j in range(d):
            total += p[j]
        for j in range(d):
            p[j] /= total
    else:
        total = 0.0
        for j in range(d):
            total += p[j]
        for j in range(d):
            p[j] /= total


@_maybe_njit
def _fill_probabilities(kind, act, d, b, counts, p):
    if kind == KIND_BANLAST:
        for j in range(d):
            p[j] = 0.0 if counts[j] > 0 else 1.0
        _apply_activation(p, ACT_NORMALIZE)
    elif kind == KIND_KAWASAKI:
        for j in range(d):
            p[j] = _penalized_weight(d, b, counts[j])
        _apply_activation(p, act)
    else:
        for j in range(d):
            p[j] = 1.0
        _apply_activation(p, ACT_NORMALIZE)


@_maybe_njit
def _sample_without_replacement(rng, p, m, mask):
    # sequential weighted draws; p is consumed in place
    d = p.shape[0]
    for k in range(m):
        total = 0.0
        for j in range(d):
            total += p[j]
        u = rng.random() * total
        acc = 0.0
        idx = -1
        for j in range(d):
            if p[j] > 0.0:
                acc += p[j]
                idx = j
                if u < acc:
                    break
        mask[k] = idx
        p[idx] = 0.0
    # insertion sort: masks are kept as ordered index sets
    for a in range(1, m):
        key = mask[a]
        t = a - 1
        while t >= 0 and mask[t] > key:
            mask[t + 1] = mask[t]
            t -= 1
        mask[t + 1] = key


@_maybe_njit
def _push_history(hist, counts, fill, pos, mask, K):
    m = mask.shape[0]
    if K == 0:
        return 0, 0
    if fill == K:
        for t in range(m):
            counts[hist[pos, t]] -= 1
    else:
        fill += 1
    for t in range(m):
        hist[pos, t] = mask[t]
        counts[mask[t]] += 1
    pos = (pos + 1) % K
    return fill, pos


@_maybe_njit
def step_mask(rng, kind, act, d, m, K, b, hist, counts, fill, pos, p_buf, mask_out):
    """One compressor step: law from history counts, sample, push mask."""
    _fill_probabilities(kind, act, d, b, counts, p_buf)
    _sample_without_replacement(rng, p_buf, m, mask_out)
    return _push_history(hist, counts, fill, pos, mask_out, K)


@_maybe_njit
def simulate_masks(rng, kind, act, d, m, K, b, steps):
    """Mask sequence of a fresh compressor run; (steps, m) int64 array."""
    hist = np.zeros((max(K, 1), m), np.int64)
    counts = np.zeros(d, np.int64)
    p = np.empty(d, np.float64)
    masks = np.empty((steps, m), np.int64)
    fill = 0
    pos = 0
    for t in range(steps):
        fill, pos = step_mask(rng, kind, act, d, m, K, b, hist, counts, fill, pos, p, masks[t])
    return masks


@_maybe_njit
def simulate_selection_counts(rng, kind, act, d, m, K, b, steps):
    """Per-coordinate selection counts over a fresh run; (d,) int64 array."""
    hist = np.zeros((max(K, 1), m), np.int64)
    counts = np.zeros(d, np.int64)
    p = np.empty(d, np.float64)
    mask = np.empty(m, np.int64)
    sel = np.zeros(d, np.int64)
    fill = 0
    pos = 0
    for _ in range(steps):
        fill, pos = step_mask(rng, kind, act, d, m, K, b, hist, counts, fill, pos, p, mask)
        for k in range(m):
            sel[mask[k]] += 1
    return sel


@_maybe_njit
def simulate_hitting_times(rng, kind, act, d, m, K, b, target, trials, cap):
    """Steps until `target` first appears in a mask, per fresh-start trial.

    Returns (times, n_capped); trials that never hit within `cap` steps are
    recorded as `cap` and counted in n_capped.
    """
    hist = np.zeros((max(K, 1), m), np.int64)
    counts = np.zeros(d, np.int64)
    p = np.empty(d, np.float64)
    mask = np.empty(m, np.int64)
    times = np.empty(trials, np.int64)
    n_capped = 0
    for r in range(trials):
        for j in range(d):
            counts[j] = 0
        fill = 0
        pos = 0
        steps = 0
        hit = False
        while steps < cap:
            fill, pos = step_mask(rng, kind, act, d, m, K, b, hist, counts, fill, pos, p, mask)
            steps += 1
            for k in range(m):
                if mask[k] == target:
                    hit = True
                    break
            if hit:
                break
        times[r] = steps
        if not hit:
            n_capped += 1
    return times, n_capped
