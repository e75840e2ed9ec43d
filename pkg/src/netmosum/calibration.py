"""Critical values for the fusion statistics via Monte Carlo simulation.

The no-change limit of the weighted statistics is a functional of independent
Brownian motions: for each stream,

    Z(t) = | W(1/beta + t) - W(1/beta + t - 1) - beta * W(1/beta) |,

and alarms correspond to sup_t rho(t) * sqrt(sum_i Z_i(t)^2) (optionally with
the per-stream filter rho(t) * Z_i(t) > c_local) crossing the global
threshold.  Thresholds for a target false-alarm probability are upper
empirical quantiles of that supremum across replications.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import erfc

from .detection import MonitorConfig, ThresholdEvaluator, local_stat_components
from .errors import InsufficientReps, InvalidScenario
from .rng import SeedLike, seed_entropy, stream_generators
from .simulate import Scenario, generate
from .stats import LOG_WEIGHT, WeightFn

__all__ = [
    "LimitGrid",
    "SupSamples",
    "simulate_z_paths",
    "sup_samples",
    "quantile_upper",
    "critical_value_centralized",
    "critical_value_distributed",
    "critical_value_local",
    "critical_value_table",
    "expected_transmission_fraction",
    "empirical_null_thresholds",
]

DEFAULT_INCREMENTS = 10_000
DEFAULT_REPS = 5_000


@dataclass(frozen=True)
class LimitGrid:
    """Discretization of the limit process on t in [0, T~/beta].

    One Brownian path spans [0, (1 + T~)/beta] with ``burn_in_points``
    increments covering [0, 1/beta]; ``unit_offset`` grid steps approximate a
    unit of t.  Evaluation points are t_j = j * grid_step for
    j = 0 .. n_points - 1.
    """

    beta: float
    t_tilde: float
    grid_step: float
    n_points: int
    burn_in_points: int
    unit_offset: int

    def __post_init__(self):
        if not 0.0 < self.beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if not self.t_tilde > 0:
            raise ValueError("t_tilde must be > 0")
        if self.unit_offset < 1:
            raise ValueError("grid too coarse: fewer than one step per unit of t")
        if self.unit_offset > self.burn_in_points:
            raise ValueError("burn-in shorter than one unit of t")
        if self.n_points * self.grid_step < self.t_tilde / self.beta:
            raise ValueError("grid does not cover the monitoring horizon")

    @classmethod
    def make(
        cls, beta: float, t_tilde: float, n_increments: int = DEFAULT_INCREMENTS
    ) -> "LimitGrid":
        if not 0.0 < beta <= 1.0:
            raise ValueError("beta must lie in (0, 1]")
        if not t_tilde > 0:
            raise ValueError("t_tilde must be > 0")
        if n_increments < 2:
            raise ValueError("n_increments must be >= 2")
        span = (1.0 + t_tilde) / beta
        step = span / n_increments
        burn_in = round((1.0 / beta) / step)
        offset = round(1.0 / step)
        return cls(
            beta=beta,
            t_tilde=t_tilde,
            grid_step=step,
            n_points=n_increments - burn_in + 1,
            burn_in_points=burn_in,
            unit_offset=offset,
        )

    @property
    def n_increments(self) -> int:
        return self.burn_in_points + self.n_points - 1

    @property
    def t_values(self) -> np.ndarray:
        return np.arange(self.n_points) * self.grid_step


def _stream_z(grid: LimitGrid, gen: np.random.Generator) -> np.ndarray:
    """Z values on the grid for one stream's Brownian path."""
    n = grid.n_increments
    incr = gen.standard_normal(n)
    incr *= math.sqrt(grid.grid_step)
    w = np.empty(n + 1)
    w[0] = 0.0
    np.cumsum(incr, out=w[1:])
    b, o = grid.burn_in_points, grid.unit_offset
    z = w[b:] - w[b - o : n + 1 - o] - grid.beta * w[b]
    return np.abs(z)


def simulate_z_paths(d: int, grid: LimitGrid, seed: SeedLike) -> np.ndarray:
    """One replication of the d limit processes, as a (d, n_points) array."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return np.stack([_stream_z(grid, g) for g in stream_generators(seed, count=d)])


@dataclass(frozen=True)
class SupSamples:
    """Per-replication suprema of the weighted limit statistic.

    ``centralized[r]`` is sup_t rho(t) sqrt(sum_i Z_i^2); ``distributed[r, j]``
    applies the filter rho(t) Z_i(t) > c_locals[j].  Both use the same
    Brownian paths replication by replication.
    """

    centralized: np.ndarray
    c_locals: tuple[float, ...]
    distributed: np.ndarray


def _sup_chunk(args) -> tuple[int, np.ndarray, np.ndarray]:
    d, grid, entropy, rep_start, rep_stop, c_locals, wf = args
    rho = np.asarray(wf.rho(grid.t_values), dtype=float)
    n = grid.n_points
    nc = len(c_locals)
    cent = np.empty(rep_stop - rep_start)
    dist = np.empty((rep_stop - rep_start, nc))
    z2 = np.empty(n)
    rz = np.empty(n)
    tmp = np.empty(n)
    for r in range(rep_start, rep_stop):
        s2c = np.zeros(n)
        s2d = np.zeros((nc, n))
        for gen in stream_generators(entropy + [r], count=d):
            z = _stream_z(grid, gen)
            np.multiply(z, z, out=z2)
            s2c += z2
            if nc:
                np.multiply(rho, z, out=rz)
                for j, c in enumerate(c_locals):
                    np.multiply(z2, rz > c, out=tmp)
                    s2d[j] += tmp
        np.sqrt(s2c, out=s2c)
        s2c *= rho
        cent[r - rep_start] = s2c.max()
        for j in range(nc):
            row = s2d[j]
            np.sqrt(row, out=row)
            row *= rho
            dist[r - rep_start, j] = row.max()
    return rep_start, cent, dist


def sup_samples(
    d: int,
    grid: LimitGrid,
    reps: int,
    seed: SeedLike,
    *,
    c_locals: Sequence[float] = (),
    wf: WeightFn = LOG_WEIGHT,
    n_jobs: int | None = None,
) -> SupSamples:
    """Simulate ``reps`` independent suprema, centralized and filtered forms.

    Replication ``r`` uses per-stream substreams keyed by ``(seed, r, i)``;
    output is identical for any ``n_jobs``.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    entropy = seed_entropy(seed)
    c_locals = tuple(float(c) for c in c_locals)
    jobs = _effective_jobs(n_jobs)
    if jobs == 1:
        _, cent, dist = _sup_chunk((d, grid, entropy, 0, reps, c_locals, wf))
        return SupSamples(centralized=cent, c_locals=c_locals, distributed=dist)
    chunk = max(1, math.ceil(reps / (jobs * 4)))
    tasks = [
        (d, grid, entropy, start, min(start + chunk, reps), c_locals, wf)
        for start in range(0, reps, chunk)
    ]
    cent = np.empty(reps)
    dist = np.empty((reps, len(c_locals)))
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        for start, c_part, d_part in pool.map(_sup_chunk, tasks):
            cent[start : start + len(c_part)] = c_part
            dist[start : start + len(c_part)] = d_part
    return SupSamples(centralized=cent, c_locals=c_locals, distributed=dist)


def _effective_jobs(n_jobs: int | None) -> int:
    import os

    if n_jobs is None or n_jobs == 1:
        return 1
    if n_jobs <= -1:
        return os.cpu_count() or 1
    return n_jobs


def quantile_upper(samples: np.ndarray, alpha: float) -> float:
    """Upper empirical quantile: the ceil((1-alpha)*n)-th order statistic."""
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    s = np.sort(np.asarray(samples, dtype=float))
    n = s.size
    if n == 0:
        raise ValueError("no samples")
    # tiny slack so exact multiples of 1/n do not round up through float error
    idx = math.ceil((1.0 - alpha) * n - 1e-9)
    idx = min(max(idx, 1), n)
    return float(s[idx - 1])


def critical_value_centralized(
    d: int,
    alpha: float,
    grid: LimitGrid,
    reps: int = DEFAULT_REPS,
    seed: SeedLike = 0,
    *,
    wf: WeightFn = LOG_WEIGHT,
    n_jobs: int | None = None,
) -> float:
    """Global threshold with every sensor transmitting."""
    _check_reps(reps)
    samples = sup_samples(d, grid, reps, seed, wf=wf, n_jobs=n_jobs)
    return quantile_upper(samples.centralized, alpha)


def critical_value_distributed(
    d: int,
    alpha: float,
    c_local: float,
    grid: LimitGrid,
    reps: int = DEFAULT_REPS,
    seed: SeedLike = 0,
    *,
    wf: WeightFn = LOG_WEIGHT,
    n_jobs: int | None = None,
) -> float:
    """Global threshold when sensors filter at ``c_local``."""
    _check_reps(reps)
    if c_local < 0:
        raise ValueError("c_local must be >= 0")
    samples = sup_samples(d, grid, reps, seed, c_locals=(c_local,), wf=wf, n_jobs=n_jobs)
    return quantile_upper(samples.distributed[:, 0], alpha)


def critical_value_local(
    alpha: float,
    grid: LimitGrid,
    reps: int = DEFAULT_REPS,
    seed: SeedLike = 0,
    *,
    wf: WeightFn = LOG_WEIGHT,
    n_jobs: int | None = None,
) -> float:
    """Per-sensor threshold: quantile of sup_t rho(t) Z(t) for one stream."""
    _check_reps(reps)
    samples = sup_samples(1, grid, reps, seed, wf=wf, n_jobs=n_jobs)
    return quantile_upper(samples.centralized, alpha)


def _check_reps(reps: int) -> None:
    if reps < 100:
        raise ValueError("need at least 100 replications for a stable quantile")


def critical_value_table(
    alphas: Sequence[float],
    c_locals: Sequence[float],
    d: int,
    grid: LimitGrid,
    reps: int = DEFAULT_REPS,
    seed: SeedLike = 0,
    *,
    wf: WeightFn = LOG_WEIGHT,
    n_jobs: int | None = None,
) -> list[dict]:
    """Threshold table over ``alphas`` x ``c_locals`` sharing one path set.

    A ``c_local`` of 0 reproduces the centralized threshold exactly.
    """
    _check_reps(reps)
    samples = sup_samples(d, grid, reps, seed, c_locals=c_locals, wf=wf, n_jobs=n_jobs)
    seed_repr = seed if isinstance(seed, int) else tuple(seed_entropy(seed))
    rows = []
    for alpha in alphas:
        for j, c_local in enumerate(samples.c_locals):
            rows.append(
                {
                    "alpha": alpha,
                    "c_local": c_local,
                    "c_global": quantile_upper(samples.distributed[:, j], alpha),
                    "d": d,
                    "beta": grid.beta,
                    "T_tilde": grid.t_tilde,
                    "reps": reps,
                    "seed": seed_repr,
                }
            )
    return rows


def expected_transmission_fraction(
    c_local: float, t: float, d: int, wf: WeightFn = LOG_WEIGHT
):
    """Expected number of transmitting sensors per step under no change.

    Equals d * P(|Z| > c_local / rho(t)) for a standard normal Z.  Accepts a
    scalar or an array of monitoring times ``t``.
    """
    if np.any(np.asarray(c_local) < 0):
        raise ValueError("c_local must be >= 0")
    if d < 1:
        raise ValueError("d must be >= 1")
    rho = wf.rho(np.asarray(t, dtype=float))
    out = d * erfc((c_local / rho) / math.sqrt(2.0))
    return float(out) if np.ndim(t) == 0 else out


def empirical_null_thresholds(
    config: MonitorConfig,
    scenario: Scenario,
    alpha: float,
    reps: int,
    seed: SeedLike,
) -> tuple[float, float]:
    """Finite-sample recalibration of the global threshold under a null model.

    Runs the full pipeline (training + monitoring, with the configured local
    filter) on ``reps`` null replications and returns ``(c_local, c_global)``
    where ``c_global`` is the smallest threshold whose empirical false-alarm
    fraction is at most ``alpha``.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if reps * alpha < 10:
        raise InsufficientReps(
            f"reps * alpha = {reps * alpha:.3g} < 10; tail quantile would be unreliable"
        )
    if not scenario.is_null:
        raise InvalidScenario("threshold recalibration requires a null scenario")
    if scenario.total_length < config.m + config.horizon:
        raise InvalidScenario(
            f"scenario length {scenario.total_length} shorter than training + horizon "
            f"({config.m} + {config.horizon})"
        )
    entropy = seed_entropy(seed)
    c_local = None if config.regime == "centralized" else config.c_local
    maxes = np.empty(reps)
    for r in range(reps):
        data, _ = generate(scenario, entropy + [r], m=config.m)
        ev = ThresholdEvaluator(local_stat_components(config, data))
        maxes[r] = ev.run(c_local, math.inf, full_horizon=True).max_weighted
    out_local = 0.0 if config.regime == "centralized" else config.c_local
    return out_local, quantile_upper(maxes, alpha)
