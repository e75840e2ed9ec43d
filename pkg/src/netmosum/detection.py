"""Online monitoring protocol: per-sensor monitors, message passing, fusion.

Two engines produce the same outcomes:

* an online engine (:func:`run_monitor`, :func:`stream_monitor`) that walks
  time steps with per-stream :class:`SensorMonitor` state, suitable for true
  streaming with O(d*h) memory;
* a vectorized batch engine (:func:`run_monitor_batch`) used by the
  experiment harness, which evaluates the whole statistic matrix at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Literal, Sequence

import numpy as np

from .errors import DataFormatError, DegenerateTraining, SourceExhausted
from .stats import (
    LOG_WEIGHT,
    Baseline,
    Kernel,
    LocalWindow,
    WeightFn,
    estimate_baseline,
    estimate_lrv,
    local_statistic,
    weight,
)

__all__ = [
    "MonitorConfig",
    "SensorMonitor",
    "MessageBatch",
    "DetectionOutcome",
    "global_statistic",
    "step",
    "run_monitor",
    "stream_monitor",
    "run_monitor_batch",
    "iter_csv_rows",
    "LocalStats",
    "ThresholdEvaluator",
    "BatchRun",
]

REPORT_FIELDS = ("stopped_at_k", "alarm_time_abs", "total_transmissions", "steps_executed")


@dataclass(frozen=True)
class MonitorConfig:
    """All protocol parameters for one monitoring run.

    The monitoring horizon is ``floor(m * t_tilde)`` steps.  Under the
    ``"distributed"`` regime a sensor transmits at step ``k`` only when its
    weighted statistic strictly exceeds ``c_local``; ``"centralized"``
    transmits everything and behaves like ``c_local = 0``.
    """

    d: int
    m: int
    h: int
    t_tilde: float
    c_global: float
    regime: Literal["centralized", "distributed"] = "distributed"
    c_local: float = 0.0
    weight: WeightFn = LOG_WEIGHT
    variance: Literal["plain", "long_run"] = "plain"
    lrv_kernel: Kernel = Kernel.BARTLETT
    lrv_bandwidth: int | None = None
    lrv_fallback: bool = True
    record_trace: bool = False

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if not 1 <= self.h <= self.m:
            raise ValueError("window must satisfy 1 <= h <= m")
        if not self.t_tilde > 0:
            raise ValueError("t_tilde must be > 0")
        if self.c_global < 0 or math.isnan(self.c_global):
            raise ValueError("c_global must be >= 0")
        if self.c_local < 0 or math.isnan(self.c_local):
            raise ValueError("c_local must be >= 0")
        if self.regime not in ("centralized", "distributed"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.variance not in ("plain", "long_run"):
            raise ValueError(f"unknown variance {self.variance!r}")

    @property
    def horizon(self) -> int:
        return int(math.floor(self.m * self.t_tilde))


@dataclass(frozen=True)
class MessageBatch:
    """Messages arriving at the fusion centre at absolute time ``time``.

    ``entries`` maps stream index to the unweighted local statistic; absent
    streams sent nothing this step.
    """

    time: int
    entries: dict[int, float]

    @property
    def count(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class DetectionOutcome:
    """Result of one monitoring run.

    ``stopped_at`` is the monitoring time of the first alarm (None when the
    run reached the horizon without alarming).  ``transmissions_per_step``
    covers exactly the executed steps.
    """

    stopped_at: int | None
    alarm_time_abs: int | None
    transmissions_per_step: tuple[int, ...]
    global_stat_trace: tuple[float, ...] | None = None

    @property
    def steps_executed(self) -> int:
        return len(self.transmissions_per_step)

    @property
    def total_transmissions(self) -> int:
        return int(sum(self.transmissions_per_step))

    def to_report(self) -> dict:
        return {
            "stopped_at_k": self.stopped_at,
            "alarm_time_abs": self.alarm_time_abs,
            "total_transmissions": self.total_transmissions,
            "steps_executed": self.steps_executed,
        }


class SensorMonitor:
    """Per-stream state: a frozen baseline plus the sliding window.

    The window is pre-filled with the (centered) tail of the training data,
    so the statistic is defined from the very first monitoring step.
    """

    def __init__(self, baseline: Baseline, h: int):
        self.baseline = baseline
        self.window = LocalWindow(h)

    @classmethod
    def from_training(
        cls,
        history: Sequence[float],
        h: int,
        *,
        variance: str = "plain",
        kernel: Kernel = Kernel.BARTLETT,
        bandwidth: int | None = None,
        lrv_fallback: bool = True,
    ) -> "SensorMonitor":
        history = np.asarray(history, dtype=float)
        if variance == "long_run":
            baseline = estimate_lrv(
                history,
                kernel,
                bandwidth,
                on_nonpositive="plain" if lrv_fallback else "raise",
            )
        else:
            baseline = estimate_baseline(history)
        mon = cls(baseline, h)
        mon.window.extend(history[-h:] - baseline.mean)
        return mon

    def ingest(self, x: float) -> None:
        self.window.push(float(x) - self.baseline.mean)

    def statistic(self) -> float:
        return local_statistic(self.window, self.baseline)


def global_statistic(batch: MessageBatch) -> float:
    """Root-sum-square of the received statistics; absent entries count as 0."""
    return math.sqrt(math.fsum(v * v for v in batch.entries.values()))


def step(
    monitors: Sequence[SensorMonitor],
    config: MonitorConfig,
    observations: Sequence[float],
    k: int,
) -> tuple[MessageBatch, float, bool]:
    """Advance every monitor by one observation and fuse the messages.

    Returns the message batch, the weighted global statistic, and whether the
    alarm threshold was strictly crossed at this step.
    """
    w = weight(config.weight, k, config.h)
    entries: dict[int, float] = {}
    for i, (mon, x) in enumerate(zip(monitors, observations)):
        mon.ingest(x)
        t_i = mon.statistic()
        if config.regime == "centralized" or w * t_i > config.c_local:
            entries[i] = t_i
    batch = MessageBatch(time=config.m + k, entries=entries)
    weighted = w * global_statistic(batch)
    return batch, weighted, weighted > config.c_global


def _train_monitors(config: MonitorConfig, training: np.ndarray) -> list[SensorMonitor]:
    return [
        SensorMonitor.from_training(
            training[i],
            config.h,
            variance=config.variance,
            kernel=config.lrv_kernel,
            bandwidth=config.lrv_bandwidth,
            lrv_fallback=config.lrv_fallback,
        )
        for i in range(config.d)
    ]


def _monitor_rows(
    config: MonitorConfig,
    rows: Iterator[Sequence[float]],
    record_trace: bool,
) -> DetectionOutcome:
    training = []
    for idx, row in enumerate(rows, start=1):
        row = np.asarray(row, dtype=float)
        if row.shape != (config.d,):
            raise DataFormatError(idx, f"expected {config.d} columns, got {row.size}")
        training.append(row)
        if idx == config.m:
            break
    if len(training) < config.m:
        raise SourceExhausted(
            f"need {config.m} training rows, source ended after {len(training)}"
        )
    monitors = _train_monitors(config, np.asarray(training).T)
    del training

    counts: list[int] = []
    trace: list[float] = []
    stopped_at = None
    k = 0
    for idx, row in enumerate(rows, start=config.m + 1):
        k += 1
        row = np.asarray(row, dtype=float)
        if row.shape != (config.d,):
            raise DataFormatError(idx, f"expected {config.d} columns, got {row.size}")
        batch, weighted, alarmed = step(monitors, config, row, k)
        counts.append(batch.count)
        if record_trace:
            trace.append(weighted)
        if alarmed:
            stopped_at = k
            break
        if k == config.horizon:
            break
    return DetectionOutcome(
        stopped_at=stopped_at,
        alarm_time_abs=None if stopped_at is None else config.m + stopped_at,
        transmissions_per_step=tuple(counts),
        global_stat_trace=tuple(trace) if record_trace else None,
    )


def run_monitor(
    config: MonitorConfig, data: np.ndarray, *, record_trace: bool | None = None
) -> DetectionOutcome:
    """Train on the first ``m`` columns of ``data`` and monitor the rest.

    ``data`` is a streams x time matrix covering training plus (up to) the
    monitoring horizon.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] != config.d:
        raise ValueError(f"data must be a ({config.d} x time) matrix, got {data.shape}")
    record = config.record_trace if record_trace is None else record_trace
    return _monitor_rows(config, iter(data.T), record)


def stream_monitor(
    config: MonitorConfig,
    source: Iterable[Sequence[float]],
    *,
    record_trace: bool | None = None,
) -> DetectionOutcome:
    """Monitor a row-by-row source (one row per time step, ``d`` columns).

    Memory stays O(d*h) plus the baselines once training is consumed.
    """
    record = config.record_trace if record_trace is None else record_trace
    return _monitor_rows(config, iter(source), record)


def iter_csv_rows(
    path,
    *,
    delimiter: str = ",",
    has_header: bool | None = None,
) -> Iterator[list[float]]:
    """Yield numeric rows from a CSV file.

    ``has_header=None`` sniffs: a first row that does not parse as numbers is
    treated as a header.  Parse failures raise :class:`DataFormatError` with
    the 1-based file row index.
    """
    with open(path, newline="") as fh:
        first_data_row = True
        for idx, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if first_data_row and has_header is True:
                first_data_row = False
                continue
            parts = line.split(delimiter)
            try:
                values = [float(p) for p in parts]
            except ValueError:
                if first_data_row and has_header is None:
                    first_data_row = False
                    continue
                raise DataFormatError(idx, f"could not parse {line!r} as numbers")
            first_data_row = False
            yield values


# ---------------------------------------------------------------------------
# Vectorized batch engine
# ---------------------------------------------------------------------------


@dataclass
class LocalStats:
    """Window statistics for a full run, before any thresholding.

    ``abs_sums[i, k-1]`` is |sum of the window| for stream ``i`` at monitoring
    time ``k``; divide by a scale vector to get local statistics.  ``w`` holds
    the boundary weights w(k, h).
    """

    abs_sums: np.ndarray
    sigma: np.ndarray
    mu: np.ndarray
    w: np.ndarray
    sigma_plain: np.ndarray

    @property
    def steps(self) -> int:
        return self.abs_sums.shape[1]

    def statistics(self, sigma: np.ndarray | None = None) -> np.ndarray:
        scale = self.sigma if sigma is None else np.asarray(sigma, dtype=float)
        return self.abs_sums / scale[:, None]


def local_stat_components(config: MonitorConfig, data: np.ndarray) -> LocalStats:
    """Train baselines and compute every window sum in one vectorized pass."""
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] != config.d:
        raise ValueError(f"data must be a ({config.d} x time) matrix, got {data.shape}")
    m, h = config.m, config.h
    if data.shape[1] < m + 1:
        raise ValueError("data must extend past the training period")
    steps = min(config.horizon, data.shape[1] - m)

    train = data[:, :m]
    mu = train.mean(axis=1)
    xc = data - mu[:, None]
    sigma_plain = np.sqrt(np.mean(xc[:, :m] ** 2, axis=1))
    if np.any(sigma_plain <= 4.0 * np.finfo(float).eps * np.abs(train).max(initial=0.0)):
        bad = int(np.argmin(sigma_plain))
        raise DegenerateTraining(f"stream {bad} has constant training data")

    if config.variance == "long_run":
        sigma = np.empty(config.d)
        for i in range(config.d):
            b = estimate_lrv(
                train[i],
                config.lrv_kernel,
                config.lrv_bandwidth,
                on_nonpositive="plain" if config.lrv_fallback else "raise",
            )
            sigma[i] = b.scale
    else:
        sigma = sigma_plain

    c = np.concatenate([np.zeros((config.d, 1)), np.cumsum(xc, axis=1)], axis=1)
    sums = c[:, m + 1 : m + steps + 1] - c[:, m + 1 - h : m + steps + 1 - h]
    k = np.arange(1, steps + 1)
    w = np.asarray(config.weight.rho(k / h), dtype=float) / math.sqrt(h)
    return LocalStats(
        abs_sums=np.abs(sums), sigma=sigma, mu=mu, w=w, sigma_plain=sigma_plain
    )


@dataclass(frozen=True)
class BatchRun:
    """Reduced result of evaluating one threshold pair on a statistic matrix."""

    stopped_at: int | None
    counts: np.ndarray
    max_weighted: float
    trace: np.ndarray | None = None

    @property
    def steps_executed(self) -> int:
        return len(self.counts)

    @property
    def total_transmissions(self) -> int:
        return int(self.counts.sum())


class ThresholdEvaluator:
    """Evaluate many (c_local, c_global) pairs on one set of local statistics."""

    def __init__(self, stats: LocalStats, sigma: np.ndarray | None = None):
        self.w = stats.w
        t = stats.statistics(sigma)
        self._t2 = t * t
        self._wt = t * stats.w[None, :]
        self.d = t.shape[0]

    def run(
        self,
        c_local: float | None,
        c_global: float,
        *,
        record_trace: bool = False,
        full_horizon: bool = False,
    ) -> BatchRun:
        """One run: ``c_local=None`` means the centralized regime.

        ``full_horizon=True`` evaluates every step even past the first alarm
        (the alarm time is still reported), which is how maxima over the whole
        horizon are collected.
        """
        if c_local is None:
            s2 = self._t2.sum(axis=0)
            counts = np.full(len(self.w), self.d, dtype=np.int64)
        else:
            mask = self._wt > c_local
            s2 = (self._t2 * mask).sum(axis=0)
            counts = mask.sum(axis=0)
        wg = self.w * np.sqrt(s2)
        crossed = wg > c_global
        stopped_at = int(np.argmax(crossed)) + 1 if crossed.any() else None
        end = len(self.w) if (full_horizon or stopped_at is None) else stopped_at
        return BatchRun(
            stopped_at=stopped_at,
            counts=counts[:end],
            max_weighted=float(wg[:end].max()) if end else 0.0,
            trace=wg[:end].copy() if record_trace else None,
        )


def run_monitor_batch(
    config: MonitorConfig, data: np.ndarray, *, record_trace: bool | None = None
) -> DetectionOutcome:
    """Vectorized equivalent of :func:`run_monitor` (same outcomes)."""
    record = config.record_trace if record_trace is None else record_trace
    stats = local_stat_components(config, data)
    ev = ThresholdEvaluator(stats)
    c_local = None if config.regime == "centralized" else config.c_local
    res = ev.run(c_local, config.c_global, record_trace=record)
    return DetectionOutcome(
        stopped_at=res.stopped_at,
        alarm_time_abs=None if res.stopped_at is None else config.m + res.stopped_at,
        transmissions_per_step=tuple(int(c) for c in res.counts),
        global_stat_trace=tuple(float(v) for v in res.trace) if record else None,
    )
