"""Distributed training loops with compressed gradients.

Three server-side methods over n workers that each hold one shard and one
compressor state: plain compressed SGD, its momentum-accelerated variant
with the closed-form (beta, eta, theta) schedule, and a DIANA baseline with
per-worker shift vectors. Also the theoretical step-size calculators and a
high-accuracy full-gradient reference minimizer used for suboptimality
metrics.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .compressors import Compressor
from .errors import DivergenceError, InvalidArgumentError, NumericalError

MQSGD = "mqsgd"
AMQSGD = "amqsgd"
DIANA = "diana"
OPTIMIZERS = (MQSGD, AMQSGD, DIANA)


@dataclass(frozen=True)
class AmqsgdParams:
    """Closed-form momentum schedule: beta = sqrt(2 p^2 mu gamma / 3),
    eta = sqrt(3 / (2 mu gamma)), theta = (p/eta - 1) / (beta p/eta - 1)."""
    gamma: float
    p: float
    beta: float
    eta: float
    theta: float


def amqsgd_params(mu, gamma, p=1.0):
    if mu <= 0 or gamma <= 0:
        raise InvalidArgumentError("mu and gamma must be positive")
    if not 0 < p <= 1:
        raise InvalidArgumentError(f"p must lie in (0, 1], got {p}")
    beta = math.sqrt(2.0 * p * p * mu * gamma / 3.0)
    eta = math.sqrt(3.0 / (2.0 * mu * gamma))
    ratio = p / eta
    denom = beta * ratio - 1.0
    if abs(denom) < 1e-15 or ratio >= 1.0:
        raise InvalidArgumentError(
            f"parameter regime invalid: p/eta = {ratio} must be < 1 with beta*p/eta != 1"
        )
    theta = (ratio - 1.0) / denom
    if not 0.0 < theta < 1.0:
        raise InvalidArgumentError(f"theta = {theta} outside (0, 1); shrink gamma or p")
    return AmqsgdParams(gamma, p, beta, eta, theta)


@dataclass
class ServerState:
    x: np.ndarray
    t: int = 0


@dataclass
class AmqsgdServerState:
    x: np.ndarray
    x_f: np.ndarray
    t: int = 0
    x_g: np.ndarray = None  # recomputed every step; kept for identity checks


@dataclass
class Worker:
    index: int
    compressor: Compressor
    shift: np.ndarray = None  # DIANA h_i, zero-initialized


def _worker_gradient(problem, w, x, t):
    # overflow at a diverging iterate is detected, not warned about
    with np.errstate(over="ignore", invalid="ignore"):
        _, g = problem.shard_loss_grad(x, w.index)
    if not np.all(np.isfinite(g)):
        raise DivergenceError(t, message=f"non-finite gradient on worker {w.index} at t={t}")
    return g


def mqsgd_step(problem, server, workers, gamma):
    """x <- x - gamma * mean_i Q_i(grad f_i(x)); fixed worker order."""
    if gamma <= 0:
        raise InvalidArgumentError("gamma must be positive")
    agg = np.zeros_like(server.x)
    coords = 0
    for w in workers:
        g = _worker_gradient(problem, w, server.x, server.t)
        q, c = w.compressor.compress(g)
        agg += q
        coords += c
    agg /= len(workers)
    return ServerState(server.x - gamma * agg, server.t + 1), coords


def amqsgd_step(problem, server, workers, params):
    """One accelerated step; workers compress the gradient at the
    extrapolated point x_g."""
    x_g = params.theta * server.x_f + (1.0 - params.theta) * server.x
    agg = np.zeros_like(server.x)
    coords = 0
    for w in workers:
        g = _worker_gradient(problem, w, x_g, server.t)
        q, c = w.compressor.compress(g)
        agg += q
        coords += c
    agg /= len(workers)
    x_f_next = x_g - params.p * params.gamma * agg
    x_next = (params.eta * x_f_next
              + (params.p - params.eta) * server.x_f
              + (1.0 - params.p) * (1.0 - params.beta) * server.x
              + (1.0 - params.p) * params.beta * x_g)
    return AmqsgdServerState(x_next, x_f_next, server.t + 1, x_g), coords


def diana_step(problem, server, workers, gamma, alpha_shift):
    """Workers compress gradient differences against their running shifts;
    with alpha_shift = m/d the shifts converge and the noise floor vanishes."""
    if gamma <= 0:
        raise InvalidArgumentError("gamma must be positive")
    if not 0.0 <= alpha_shift <= 1.0:
        raise InvalidArgumentError(f"alpha_shift must lie in [0, 1], got {alpha_shift}")
    agg = np.zeros_like(server.x)
    coords = 0
    for w in workers:
        if w.shift is None:
            w.shift = np.zeros_like(server.x)
        g = _worker_gradient(problem, w, server.x, server.t)
        delta, c = w.compressor.compress(g - w.shift)
        agg += w.shift + delta
        w.shift = w.shift + alpha_shift * delta
        coords += c
    agg /= len(workers)
    return ServerState(server.x - gamma * agg, server.t + 1), coords


def theory_step_size(regime, L, mu=None, delta_sq=0.0, d=1, m=1, tau=1):
    """Right-hand sides of the theoretical step-size bounds with the
    suppressed constant taken as 1; reference values only, practical runs
    tune gamma."""
    if L <= 0 or d < 1 or m < 1 or tau < 1 or delta_sq < 0:
        raise InvalidArgumentError("constants must be positive (delta_sq >= 0)")
    if regime in ("nonconvex", "pl"):
        return m * m / (d * d * L * (delta_sq + 1.0) * tau)
    if regime == "strongly-convex-acc":
        if mu is None or mu <= 0:
            raise InvalidArgumentError("accelerated regime needs mu > 0")
        return mu ** (1.0 / 3.0) * math.sqrt(m) / (tau * L ** (4.0 / 3.0) * math.sqrt(d))
    raise InvalidArgumentError(f"unknown regime '{regime}'")


def theory_momentum_p(d, m, delta_sq, tau):
    """Default momentum probability min(1, m^2 / (13 d^2 (delta^2+1) tau^2))."""
    if d < 1 or m < 1 or tau < 1 or delta_sq < 0:
        raise InvalidArgumentError("constants must be positive (delta_sq >= 0)")
    return min(1.0, m * m / (13.0 * d * d * (delta_sq + 1.0) * tau * tau))


def reference_minimizer(problem, tol=1e-10, max_iter=500_000, x0=None):
    """Full-gradient descent with Armijo backtracking until the full
    gradient norm is at most tol. Assumes a unique minimizer (lambda > 0
    for the logistic objective).

    Near the optimum the f-gap falls below float resolution before the
    gradient does, so Armijo alone cannot certify descent there; the step is
    additionally capped at 1/L_est with L_est the largest curvature observed
    along the trajectory, which keeps every step a true descent step and
    lets the gradient contract all the way to tol."""
    x = np.zeros(problem.d) if x0 is None else np.array(x0, dtype=np.float64)
    f, g = problem.full_loss_grad(x)
    step = 1.0
    L_est = 0.0
    eps = float(np.finfo(np.float64).eps)
    for _ in range(max_iter):
        gnorm_sq = float(g @ g)
        if math.sqrt(gnorm_sq) <= tol:
            return x, f
        step *= 2.0  # let the line search grow back after conservative steps
        if L_est > 0.0:
            step = min(step, 1.0 / L_est)
        # the 4*eps*|f| allowance keeps one-ulp noise in f from rejecting
        # true descent steps once the gap is below float resolution
        f_tol = 4.0 * eps * max(abs(f), 1.0)
        while True:
            x_new = x - step * g
            f_new, g_new = problem.full_loss_grad(x_new)
            if f_new <= f - 1e-4 * step * gnorm_sq + f_tol:
                break
            step *= 0.5
            if step < 1e-300:
                raise NumericalError("line search collapsed; gradient may be inexact")
        move = float(np.linalg.norm(x_new - x))
        if move >= 1e-8 * (1.0 + float(np.linalg.norm(x))):
            L_est = max(L_est, float(np.linalg.norm(g_new - g)) / move)
        x, f, g = x_new, f_new, g_new
    raise NumericalError(
        f"reference minimizer stalled at ||grad|| = {float(np.linalg.norm(g)):.3e} > {tol}"
    )


@dataclass
class RunConfig:
    """Everything a training run needs besides the problem itself."""
    optimizer: str = MQSGD
    gamma: float = 0.1
    compressor: str = "rand"
    m: int = None
    K: int = 0
    b: float = 50.0
    activation: str = "normalize"
    T: int = None
    budget: int = None          # stop once cumulative coords reach this
    seed: int = 42
    p: float = 1.0              # AMQSGD momentum probability
    alpha_shift: float = None   # DIANA; defaults to m/d
    mu: float = None            # AMQSGD; defaults to 2*lambda of the problem


@dataclass
class TrainTrace:
    t: np.ndarray
    coords_sent_cum: np.ndarray
    f_value: np.ndarray
    fdist_ratio: np.ndarray     # NaN when no reference was supplied
    grad_norm_sq: np.ndarray
    dist_sq_to_opt: np.ndarray  # NaN when no reference was supplied
    wallclock: np.ndarray
    rows: int = field(init=False)

    def __post_init__(self):
        self.rows = len(self.t)


class _TraceBuilder:
    def __init__(self, problem, reference):
        self.problem = problem
        self.x_star, self.f_star = reference if reference else (None, None)
        self.cols = {k: [] for k in ("t", "coords", "f", "ratio", "gns", "dist", "wall")}
        self.f0_gap = None
        self.start = time.perf_counter()

    def record(self, t, coords, x):
        # overflow at a diverging iterate is detected, not warned about
        with np.errstate(over="ignore", invalid="ignore"):
            f, g = self.problem.full_loss_grad(x)
            gns = float(g @ g)
            if self.f_star is not None:
                gap = f - self.f_star
                if self.f0_gap is None:
                    self.f0_gap = gap if gap != 0.0 else 1.0
                ratio = gap / self.f0_gap
                diff = x - self.x_star
                dist = float(diff @ diff)
            else:
                ratio = math.nan
                dist = math.nan
        c = self.cols
        c["t"].append(t)
        c["coords"].append(coords)
        c["f"].append(f)
        c["ratio"].append(ratio)
        c["gns"].append(gns)
        c["dist"].append(dist)
        c["wall"].append(time.perf_counter() - self.start)
        if not (math.isfinite(f) and math.isfinite(gns)):
            raise DivergenceError(t, trace=self.build(),
                                  message=f"non-finite metrics at t={t}")

    def build(self):
        c = self.cols
        return TrainTrace(
            np.array(c["t"], dtype=np.int64),
            np.array(c["coords"], dtype=np.float64),
            np.array(c["f"]), np.array(c["ratio"]),
            np.array(c["gns"]), np.array(c["dist"]),
            np.array(c["wall"]),
        )


def make_workers(problem, cfg, with_shifts=False):
    m = cfg.m if cfg.m is not None else problem.d
    return [
        Worker(i,
               Compressor(cfg.compressor, problem.d, m=m, K=cfg.K, b=cfg.b,
                          activation=cfg.activation, seed=cfg.seed, worker=i,
                          n_workers=problem.n),
               np.zeros(problem.d) if with_shifts else None)
        for i in range(problem.n)
    ]


def run_training(problem, cfg, reference=None):
    """Runs the configured optimizer, recording metrics every iteration at
    the served point (x, or x_f for the accelerated method). Deterministic
    given cfg.seed. Raises a divergence error carrying the partial trace."""
    if cfg.optimizer not in OPTIMIZERS:
        raise InvalidArgumentError(f"unknown optimizer '{cfg.optimizer}'")
    if cfg.T is None and cfg.budget is None:
        raise InvalidArgumentError("need an iteration count T or a coordinate budget")
    workers = make_workers(problem, cfg, with_shifts=cfg.optimizer == DIANA)
    d = problem.d
    x0 = np.zeros(d)
    if cfg.optimizer == AMQSGD:
        mu = cfg.mu
        if mu is None:
            if getattr(problem, "lam", 0.0) <= 0:
                raise InvalidArgumentError("accelerated method needs mu (or lambda > 0)")
            mu = 2.0 * problem.lam
        params = amqsgd_params(mu, cfg.gamma, cfg.p)
        server = AmqsgdServerState(x0.copy(), x0.copy())
    else:
        server = ServerState(x0.copy())

    tracer = _TraceBuilder(problem, reference)
    coords_cum = 0
    tracer.record(0, 0, server.x_f if cfg.optimizer == AMQSGD else server.x)
    t = 0
    while True:
        if cfg.T is not None and t >= cfg.T:
            break
        if cfg.budget is not None and coords_cum >= cfg.budget:
            break
        try:
            if cfg.optimizer == MQSGD:
                server, coords = mqsgd_step(problem, server, workers, cfg.gamma)
            elif cfg.optimizer == AMQSGD:
                server, coords = amqsgd_step(problem, server, workers, params)
            else:
                alpha = cfg.alpha_shift
                if alpha is None:
                    alpha = (cfg.m if cfg.m is not None else d) / d
                server, coords = diana_step(problem, server, workers, cfg.gamma, alpha)
        except DivergenceError as err:
            if err.trace is None:
                err.trace = tracer.build()
            raise
        # communication is measured in 32-bit coordinate units, so the
        # 9-bit natural rounding counts for 9/32 of a coordinate
        coords_cum += coords * workers[0].compressor.bits_per_coord / 32.0
        t += 1
        tracer.record(t, coords_cum, server.x_f if cfg.optimizer == AMQSGD else server.x)
    return tracer.build()
