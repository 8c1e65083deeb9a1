"""Block Gibbs sampler over the flow ``x`` and the precisions ``lam``, ``delta``.

Each step draws ``x | lam, delta`` by a perturbed CG solve, then
``lam | x ~ Gamma(m/2 + a_lam, ||Ax - b||^2 / 2 + b_lam)`` and
``delta | x ~ Gamma(n/2 + a_delta, x^T L x / 2 + b_delta)`` (shape/rate).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import DomainError, InsufficientDataError
from .grid import FlowSystem
from .solver import CGConfig, sample_conditional_x

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HyperPriors:
    alpha_lambda: float = 1.0
    beta_lambda: float = 1e-4
    alpha_delta: float = 1.0
    beta_delta: float = 1e-4

    def __post_init__(self):
        for name in ("alpha_lambda", "beta_lambda", "alpha_delta", "beta_delta"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 5000
    burn_in: int = 1000
    seed: int = 0
    lambda0: float = 1.0
    delta0: float = 1.0
    thin: int = 1
    max_restarts: int = 3
    keep_samples: bool = False

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise DomainError(f"need 0 <= burn_in < iterations, got {self.burn_in}, {self.iterations}")
        if self.thin < 1:
            raise DomainError(f"thin must be >= 1, got {self.thin}")
        if self.max_restarts < 0:
            raise DomainError("max_restarts must be >= 0")
        if not (self.lambda0 > 0 and self.delta0 > 0):
            raise DomainError("initial lambda and delta must be positive")

    @property
    def kept(self) -> int:
        return -(-(self.iterations - self.burn_in) // self.thin)


@dataclass(frozen=True)
class ChainState:
    x: np.ndarray
    lam: float
    delta: float
    k: int = 0
    cg_iterations: int = 0


class ChainStepError(RuntimeError):
    """The CG solve inside a Gibbs step did not converge."""

    def __init__(self, k, iterations, residual):
        super().__init__(f"CG failed at Gibbs step {k}: {iterations} iterations, "
                         f"relative residual {residual:.3e}")
        self.k = k


def sample_gamma(shape: float, rate: float, rng: np.random.Generator) -> float:
    """Gamma(shape, rate) variate (mean ``shape / rate``).

    Marsaglia-Tsang squeeze/rejection for ``shape >= 1``; smaller shapes
    use ``Gamma(a) = Gamma(a + 1) * U**(1/a)``.
    """
    if not (shape > 0 and rate > 0):
        raise DomainError(f"gamma parameters must be positive, got shape={shape}, rate={rate}")
    boost = 1.0
    a = shape
    if a < 1.0:
        boost = rng.random() ** (1.0 / a)
        a += 1.0
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        z = rng.standard_normal()
        t = 1.0 + c * z
        if t <= 0.0:
            continue
        v = t * t * t
        u = rng.random()
        if u < 1.0 - 0.0331 * z ** 4 or math.log(u) < 0.5 * z * z + d * (1.0 - v + math.log(v)):
            return d * v * boost / rate


def lambda_conditional(sys: FlowSystem, x, priors: HyperPriors) -> tuple[float, float]:
    """Shape and rate of ``lam | x, b``."""
    r = sys.residual(x)
    return sys.m / 2 + priors.alpha_lambda, 0.5 * float(r @ r) + priors.beta_lambda


def delta_conditional(sys: FlowSystem, x, priors: HyperPriors) -> tuple[float, float]:
    """Shape and rate of ``delta | x, b``."""
    return sys.n / 2 + priors.alpha_delta, 0.5 * float(x @ (sys.L @ x)) + priors.beta_delta


def gibbs_step(state: ChainState, sys: FlowSystem, priors: HyperPriors, cg: CGConfig,
               rng: np.random.Generator) -> ChainState:
    """Draw ``x^k`` at ``(lam_k, delta_k)``, then ``lam_{k+1}`` and ``delta_{k+1}`` given ``x^k``."""
    sol = sample_conditional_x(sys, state.lam, state.delta, cg, rng)
    if not sol.converged:
        raise ChainStepError(state.k, sol.iterations, sol.residual)
    x = sol.x
    lam = sample_gamma(*lambda_conditional(sys, x, priors), rng)
    delta = sample_gamma(*delta_conditional(sys, x, priors), rng)
    return ChainState(x, lam, delta, state.k + 1, sol.iterations)


class PixelAccumulator:
    """Streaming mean of ``x`` and per-pixel 2x2 covariance of ``(u, v)`` (Welford)."""

    def __init__(self, m: int):
        self.m = m
        self.count = 0
        self.mean = np.zeros(2 * m)
        self.m_uu = np.zeros(m)
        self.m_vv = np.zeros(m)
        self.m_uv = np.zeros(m)

    def push(self, x):
        m = self.m
        self.count += 1
        d_old = x - self.mean
        self.mean += d_old / self.count
        d_new = x - self.mean
        self.m_uu += d_old[:m] * d_new[:m]
        self.m_vv += d_old[m:] * d_new[m:]
        self.m_uv += d_old[:m] * d_new[m:]

    def covariances(self) -> np.ndarray:
        """Unbiased covariances, shape ``(m, 2, 2)``."""
        if self.count < 2:
            raise InsufficientDataError(f"covariance needs >= 2 samples, have {self.count}")
        out = np.empty((self.m, 2, 2))
        out[:, 0, 0] = self.m_uu
        out[:, 1, 1] = self.m_vv
        out[:, 0, 1] = out[:, 1, 0] = self.m_uv
        return out / (self.count - 1)


@dataclass
class ChainResult:
    config: ChainConfig
    lambda_trace: np.ndarray
    delta_trace: np.ndarray
    accumulator: PixelAccumulator
    samples: np.ndarray | None = None
    cg_iterations: np.ndarray | None = None
    restart_count: int = 0
    converged: bool = True
    failure: str | None = None
    attempts: list = field(default_factory=list)

    @property
    def burn_in(self) -> int:
        return self.config.burn_in

    @property
    def kept(self) -> int:
        return self.accumulator.count

    @property
    def mean(self) -> np.ndarray:
        if self.accumulator.count == 0:
            raise InsufficientDataError("no post-burn-in samples were kept")
        return self.accumulator.mean


def check_stationarity(trace, burn_in: int) -> bool:
    """Half-split test on the post-burn-in part of ``trace``.

    True iff both halves have positive variance and their means differ by
    at most 0.1 pooled standard deviations.
    """
    trace = np.asarray(trace, dtype=float)
    if trace.size <= burn_in:
        raise InsufficientDataError(f"trace of length {trace.size} has nothing after burn-in {burn_in}")
    post = trace[burn_in:]
    h = post.size // 2
    if h < 2:
        return False
    first, second = post[:h], post[post.size - h:]
    v1, v2 = first.var(ddof=1), second.var(ddof=1)
    if not (v1 > 0 and v2 > 0):
        return False
    pooled = math.sqrt(0.5 * (v1 + v2))
    return abs(first.mean() - second.mean()) <= 0.1 * pooled


def effective_alpha_trace(result: ChainResult) -> np.ndarray:
    """Per-step ``delta / lam``; entries before ``result.burn_in`` are transient."""
    return result.delta_trace / result.lambda_trace


def _single_chain(sys: FlowSystem, priors: HyperPriors, cfg: ChainConfig, cg: CGConfig,
                  rng: np.random.Generator) -> ChainResult:
    n_it = cfg.iterations
    lam_tr = np.empty(n_it)
    del_tr = np.empty(n_it)
    cg_its = np.empty(n_it, dtype=np.int64)
    acc = PixelAccumulator(sys.m)
    samples = np.empty((cfg.kept, sys.n)) if cfg.keep_samples else None
    state = ChainState(np.zeros(sys.n), cfg.lambda0, cfg.delta0)
    for k in range(n_it):
        state = gibbs_step(state, sys, priors, cg, rng)
        lam_tr[k] = state.lam
        del_tr[k] = state.delta
        cg_its[k] = state.cg_iterations
        offset = k - cfg.burn_in
        if offset >= 0 and offset % cfg.thin == 0:
            if samples is not None:
                samples[acc.count] = state.x
            acc.push(state.x)
    return ChainResult(cfg, lam_tr, del_tr, acc, samples, cg_its)


def run_chain(sys: FlowSystem, priors: HyperPriors = HyperPriors(), cfg: ChainConfig = ChainConfig(),
              cg: CGConfig = CGConfig()) -> ChainResult:
    """Run the Gibbs sampler, restarting from a fresh seed when the chain misbehaves.

    A chain is rejected when a CG solve fails or its ``delta/lam`` trace fails
    :func:`check_stationarity`. Attempt ``r`` seeds its generator with
    ``(cfg.seed, r)``. After ``cfg.max_restarts`` restarts the last attempt
    is returned with ``converged=False``.
    """
    attempts = []
    result = None
    for attempt in range(cfg.max_restarts + 1):
        rng = np.random.default_rng([cfg.seed, attempt])
        try:
            result = _single_chain(sys, priors, cfg, cg, rng)
        except ChainStepError as exc:
            reason = str(exc)
            result = None
        else:
            if check_stationarity(effective_alpha_trace(result), cfg.burn_in):
                reason = None
            else:
                reason = "delta/lambda trace failed the stationarity check"
        attempts.append(reason or "ok")
        if reason is None:
            result.restart_count = attempt
            result.attempts = attempts
            return result
        log.warning("chain attempt %d (seed %d) rejected: %s", attempt, cfg.seed, reason)

    if result is None:
        result = ChainResult(cfg, np.full(cfg.iterations, np.nan), np.full(cfg.iterations, np.nan),
                             PixelAccumulator(sys.m))
    result.restart_count = cfg.max_restarts
    result.converged = False
    result.failure = attempts[-1]
    result.attempts = attempts
    log.warning("chain did not converge after %d restarts", cfg.max_restarts)
    return result
