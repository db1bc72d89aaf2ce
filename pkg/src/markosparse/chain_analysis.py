"""Exact finite-state analysis of the compressor mask chains.

A chain state is the ordered tuple of the last K masks (oldest first); the
state space is all C(d,m)^K tuples. Transitions append the next mask drawn
from the same probability law the live compressor uses and drop the oldest.
For small spaces this module builds the dense transition matrix, finds the
recurrent class actually reachable from a fresh start, verifies ergodicity,
and computes stationary distributions, mixing times and geometric-ergodicity
bounds, plus the closed-form and simulated hitting times of a target
coordinate.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, permutations, product

import numpy as np

from . import kernels
from .compressors import (
    BANLAST,
    KAWASAKI,
    RAND,
    IDENTITY,
    banlast_probabilities,
    kawasaki_probabilities,
)
from .errors import (
    InvalidArgumentError,
    NonErgodicError,
    NumericalError,
    TooLargeError,
)

DEFAULT_STATE_CAP = 200_000
# dense |S| x |S| matrices stop being sensible well before the state cap
DEFAULT_MATRIX_CAP = 8_192

_JOINT_LAW_MAX_M = 6


def enumerate_masks(d, m):
    """All size-m coordinate masks in lexicographic order."""
    if not 1 <= m <= d:
        raise InvalidArgumentError(f"need 1 <= m <= d, got m={m}, d={d}")
    return list(combinations(range(d), m))


def enumerate_states(d, m, K, cap=DEFAULT_STATE_CAP):
    """All K-tuples of masks (oldest first), lexicographic; K=0 gives the
    single empty history."""
    n_masks = math.comb(d, m)
    size = n_masks ** K
    if size > cap:
        raise TooLargeError(size, cap)
    masks = enumerate_masks(d, m)
    return list(product(masks, repeat=K))


def sequential_mask_law(p, m):
    """Exact law of a size-m mask under sequential weighted draws without
    replacement from p. Returns {mask tuple: probability}."""
    if m > _JOINT_LAW_MAX_M:
        raise InvalidArgumentError(
            f"joint-law enumeration sums m! orderings; m={m} exceeds {_JOINT_LAW_MAX_M}"
        )
    p = np.asarray(p, dtype=np.float64)
    support = [j for j in range(len(p)) if p[j] > 0.0]
    law = {}
    for mask in combinations(support, m):
        total = 0.0
        for order in permutations(mask):
            pr = 1.0
            rem = 1.0
            for j in order:
                pr *= p[j] / rem
                rem -= p[j]
            total += pr
        law[mask] = total
    return law


def _coordinate_law(kind, history, d, m, b, activation):
    if kind == BANLAST:
        return banlast_probabilities(history, d, m)
    if kind == KAWASAKI:
        return kawasaki_probabilities(history, d, m, b, activation)
    if kind == RAND:
        return np.full(d, 1.0 / d)
    raise InvalidArgumentError(f"no Markov chain for compressor kind '{kind}'")


@dataclass
class ChainModel:
    kind: str
    d: int
    m: int
    K: int
    b: float
    activation: str
    masks: list
    states: list
    P: np.ndarray

    @property
    def n_states(self):
        return len(self.states)


@dataclass
class ErgodicityBound:
    rho: float
    C: float


@dataclass
class StationaryResult:
    pi: np.ndarray          # over all states; zero off the recurrent class
    recurrent: np.ndarray   # indices of the recurrent class
    n_unreachable: int
    iterations: int


def build_transition_matrix(kind, d, m=1, K=1, b=50.0, activation="normalize",
                            cap=DEFAULT_STATE_CAP, matrix_cap=DEFAULT_MATRIX_CAP,
                            joint_law=False):
    """Exact chain over K-tuples of masks for rand/banlast/kawasaki.

    For m > 1 the next-mask law is the sequential-draw joint law; for
    KAWASAKI that law is a modeling choice, so it must be requested
    explicitly via joint_law=True.
    """
    if kind == KAWASAKI and m > 1 and not joint_law:
        raise InvalidArgumentError(
            "kawasaki with m > 1: pass joint_law=True to adopt the sequential-draw joint law"
        )
    if kind == KAWASAKI and b <= 1:
        raise InvalidArgumentError("forgetting rate b must exceed 1")
    states = enumerate_states(d, m, K, cap=cap)
    if len(states) > matrix_cap:
        raise TooLargeError(len(states), matrix_cap)
    masks = enumerate_masks(d, m)
    mask_index = {mask: i for i, mask in enumerate(masks)}
    M = len(masks)
    n = len(states)
    P = np.zeros((n, n))
    if K == 0:
        P[0, 0] = 1.0
        return ChainModel(kind, d, m, K, float(b), activation, masks, states, P)
    # state index is the mixed-radix number of its mask indices, so the
    # successor index comes from a shift instead of a dict lookup
    radix = M ** (K - 1)
    for i, state in enumerate(states):
        p = _coordinate_law(kind, list(state), d, m, b, activation)
        law = sequential_mask_law(p, m)
        base = (i % radix) * M
        for mask, prob in law.items():
            P[i, base + mask_index[mask]] += prob
    return ChainModel(kind, d, m, K, float(b), activation, masks, states, P)


def _initial_states(chain):
    """Full histories reachable by warming up from an empty buffer."""
    if chain.K == 0:
        return {0}
    mask_index = {mask: i for i, mask in enumerate(chain.masks)}
    M = len(chain.masks)
    partial = [()]
    for _ in range(chain.K):
        nxt = set()
        for hist in partial:
            p = _coordinate_law(chain.kind, list(hist), chain.d, chain.m, chain.b,
                                chain.activation)
            for mask, prob in sequential_mask_law(p, chain.m).items():
                if prob > 0.0:
                    nxt.add(hist + (mask,))
        partial = list(nxt)
    out = set()
    for hist in partial:
        idx = 0
        for mask in hist:
            idx = idx * M + mask_index[mask]
        out.add(idx)
    return out


def _reachable_closure(P, start):
    seen = set(start)
    frontier = list(start)
    while frontier:
        s = frontier.pop()
        for t in np.nonzero(P[s] > 0.0)[0]:
            if t not in seen:
                seen.add(int(t))
                frontier.append(int(t))
    return sorted(seen)


def _strongly_connected_components(adj, nodes):
    """Kosaraju on the induced subgraph."""
    nodeset = set(nodes)
    order = []
    visited = set()
    for root in nodes:
        if root in visited:
            continue
        stack = [(root, iter(adj[root]))]
        visited.add(root)
        while stack:
            v, it = stack[-1]
            advanced = False
            for w in it:
                if w in nodeset and w not in visited:
                    visited.add(w)
                    stack.append((w, iter(adj[w])))
                    advanced = True
                    break
            if not advanced:
                order.append(v)
                stack.pop()
    radj = {v: [] for v in nodes}
    for v in nodes:
        for w in adj[v]:
            if w in nodeset:
                radj[w].append(v)
    comps = []
    assigned = set()
    for v in reversed(order):
        if v in assigned:
            continue
        comp = []
        stack = [v]
        assigned.add(v)
        while stack:
            u = stack.pop()
            comp.append(u)
            for w in radj[u]:
                if w not in assigned:
                    assigned.add(w)
                    stack.append(w)
        comps.append(sorted(comp))
    return comps


def _period(adj, nodes):
    """gcd of cycle-length residuals over a BFS tree; 1 means aperiodic."""
    root = nodes[0]
    dist = {root: 0}
    queue = [root]
    g = 0
    while queue:
        v = queue.pop(0)
        for w in adj[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
            else:
                g = math.gcd(g, dist[v] + 1 - dist[w])
    for v in nodes:
        for w in adj[v]:
            g = math.gcd(g, dist[v] + 1 - dist[w])
    return abs(g) if g != 0 else 0


def recurrent_class(chain):
    """Indices of the class reachable from a fresh start, after verifying the
    chain restricted to it is irreducible and aperiodic."""
    reach = _reachable_closure(chain.P, _initial_states(chain))
    adj = {v: [int(t) for t in np.nonzero(chain.P[v] > 0.0)[0]] for v in reach}
    comps = _strongly_connected_components(adj, reach)
    if len(comps) != 1:
        raise NonErgodicError(
            f"reducible: {len(comps)} communicating classes among {len(reach)} reachable states"
        )
    period = _period(adj, reach)
    if period != 1:
        raise NonErgodicError(f"periodic with period {period}")
    return np.array(reach, dtype=np.int64)


def stationary_distribution(chain, tol=1e-12, max_iter=10**6):
    """Power iteration on the recurrent class; residual ||piP - pi||_1 <= tol."""
    cls = recurrent_class(chain)
    sub = chain.P[np.ix_(cls, cls)]
    pi = np.full(len(cls), 1.0 / len(cls))
    for it in range(1, max_iter + 1):
        new = pi @ sub
        residual = np.abs(new - pi).sum()
        pi = new
        if residual <= tol:
            full = np.zeros(chain.n_states)
            full[cls] = pi / pi.sum()
            return StationaryResult(full, cls, chain.n_states - len(cls), it)
    raise NumericalError(f"power iteration residual > {tol} after {max_iter} iterations")


def newest_mask_marginal(chain, pi):
    """P(coordinate j in the newest mask) under pi, for every j."""
    marginal = np.zeros(chain.d)
    for i, state in enumerate(chain.states):
        if pi[i] == 0.0 or chain.K == 0:
            continue
        for j in state[-1]:
            marginal[j] += pi[i]
    if chain.K == 0:  # memoryless: the one-step law from the empty history
        p = _coordinate_law(chain.kind, [], chain.d, chain.m, chain.b, chain.activation)
        for mask, prob in sequential_mask_law(p, chain.m).items():
            for j in mask:
                marginal[j] += prob
    return marginal


def deviation_curve(chain, t_max, stationary=None):
    """max over start states and entries of |P^t - pi| on the recurrent
    class, for t = 0..t_max."""
    result = stationary or stationary_distribution(chain)
    cls = result.recurrent
    sub = chain.P[np.ix_(cls, cls)]
    pi = result.pi[cls]
    D = np.eye(len(cls))
    devs = np.empty(t_max + 1)
    for t in range(t_max + 1):
        if t > 0:
            D = D @ sub
        devs[t] = np.abs(D - pi[None, :]).max()
    return devs


def mixing_time(chain, eps, cap=10**6):
    """Smallest t with max-start deviation ||P^t(s0,.) - pi||_inf <= eps*pi_min."""
    if eps <= 0:
        raise InvalidArgumentError("eps must be positive")
    result = stationary_distribution(chain)
    cls = result.recurrent
    sub = chain.P[np.ix_(cls, cls)]
    pi = result.pi[cls]
    threshold = eps * pi.min()
    D = np.eye(len(cls))
    for t in range(1, cap + 1):
        D = D @ sub
        if np.abs(D - pi[None, :]).max() <= threshold:
            return t
    raise NumericalError(f"chain not mixed to eps*pi_min after {cap} steps")


def rho_bound_banlast(d, m, K):
    """Geometric ergodicity bound (rho, C=rho^-2) for the banlast chain;
    valid for d > (2K+1)m, K >= 1. Exact rational arithmetic."""
    if K < 1:
        raise InvalidArgumentError("bound needs K >= 1")
    if d <= (2 * K + 1) * m:
        raise InvalidArgumentError(
            f"out of regime: bound needs d > (2K+1)m = {(2 * K + 1) * m}, got d={d}"
        )
    ratio = Fraction(math.comb(d - 2 * K * m, m), math.comb(d - K * m, m) ** 2)
    rho = math.sqrt(1.0 - float(ratio ** K))
    return ErgodicityBound(rho, rho ** -2)


def rho_bound_kawasaki_normalize(d, m, K, b):
    """Geometric ergodicity bound (rho, C=rho^-1) for kawasaki with the
    normalize activation."""
    if b <= 1:
        raise InvalidArgumentError("forgetting rate b must exceed 1")
    if d < m or m < 1:
        raise InvalidArgumentError(f"need 1 <= m <= d, got m={m}, d={d}")
    if K < 1:
        raise InvalidArgumentError("bound needs K >= 1")
    base = d * b ** K - m * (b ** K - 1.0)
    rho = 1.0 - base ** (-m * K)
    return ErgodicityBound(rho, 1.0 / rho)


def expected_hitting_time_randm(alpha):
    """Mean steps for a fixed coordinate to enter a uniform size-m mask,
    alpha = d/m."""
    if alpha < 1:
        raise InvalidArgumentError("alpha = d/m must be >= 1")
    return float(alpha)


def expected_hitting_time_banlast(alpha, K):
    """Closed-form banlast hitting-time estimate, valid for alpha > K+1.

    Two-part sum: exact warm-up hazards for the first K steps plus a
    geometric tail at the full-ban rate. Note the tail discounts by
    (1-1/(alpha-K))^K rather than the warm-up survival, so this value is an
    optimistic estimate of the fresh-start process simulated by
    monte_carlo_hitting_time; see banlast_hitting_time_exact for the exact
    mean of that process.
    """
    if K < 0:
        raise InvalidArgumentError("K must be non-negative")
    if alpha <= K + 1:
        raise InvalidArgumentError(
            f"out of regime: need alpha > K+1, got alpha={alpha}, K={K}"
        )
    head = 0.0
    survival = 1.0
    for s in range(1, K + 1):
        head += s * survival / (alpha - (s - 1))
        survival *= 1.0 - 1.0 / (alpha - (s - 1))
    tail = alpha * (1.0 - 1.0 / (alpha - K)) ** K
    return head + tail


def banlast_hitting_time_exact(alpha, K):
    """Exact mean hitting time of the fresh-start ban process.

    Hazard at step s is 1/(alpha - min(s-1, K)): nothing is banned at the
    first step and the ban window then fills one mask per step. Summing the
    survival function gives
        E = (K+2) - (K+1)(K+2)/(2 alpha) + (alpha-K-1)^2 / alpha,
    which reduces to alpha at K=0 and matches simulation for all K.
    """
    if K < 0:
        raise InvalidArgumentError("K must be non-negative")
    if alpha <= K + 1:
        raise InvalidArgumentError(
            f"out of regime: need alpha > K+1, got alpha={alpha}, K={K}"
        )
    return (K + 2) - (K + 1) * (K + 2) / (2.0 * alpha) + (alpha - K - 1) ** 2 / alpha


def optimal_history_size(alpha, K_max=None):
    """argmin over feasible K of expected_hitting_time_banlast(alpha, K);
    ties break toward smaller K."""
    if alpha <= 2:
        raise InvalidArgumentError("need alpha > 2 for a non-trivial history")
    hi = math.ceil(alpha) - 2
    if K_max is not None:
        hi = min(hi, K_max)
    best_k = 0
    best_v = expected_hitting_time_banlast(alpha, 0)
    for K in range(1, hi + 1):
        v = expected_hitting_time_banlast(alpha, K)
        if v < best_v:
            best_k, best_v = K, v
    return best_k


def monte_carlo_hitting_time(kind, d, m=1, K=0, b=50.0, activation="normalize",
                             target=0, trials=10**5, rng=None, seed=0, cap=10**7):
    """Simulates fresh compressor runs from an empty history and counts steps
    until `target` appears in a mask. Returns (mean, stderr)."""
    if trials < 1:
        raise InvalidArgumentError("trials must be >= 1")
    if not 0 <= target < d:
        raise InvalidArgumentError(f"target {target} outside [0, {d})")
    if kind == IDENTITY:
        return 1.0, 0.0
    if kind not in _KERNEL_KINDS:
        raise InvalidArgumentError(f"no hitting-time simulation for kind '{kind}'")
    if rng is None:
        rng = np.random.Generator(np.random.PCG64(seed))
    times, n_capped = kernels.simulate_hitting_times(
        rng, _KERNEL_KINDS[kind], kernels.ACTIVATION_IDS[activation],
        d, m, K, float(b), target, trials, cap,
    )
    if n_capped:
        raise NumericalError(f"{n_capped} of {trials} trials hit the {cap}-step cap")
    mean = float(times.mean())
    stderr = float(times.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return mean, stderr


_KERNEL_KINDS = {
    RAND: kernels.KIND_RAND,
    BANLAST: kernels.KIND_BANLAST,
    KAWASAKI: kernels.KIND_KAWASAKI,
}
