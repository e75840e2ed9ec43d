"""Numerical kernel: baselines, variance estimators, weights, moving windows.

Everything here is per-stream and pure; the detection layer composes these
pieces into the multi-stream monitoring protocol.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .errors import DegenerateTraining, NonPositiveLRV, TooShort, WindowNotFull

__all__ = [
    "Kernel",
    "WeightFn",
    "LOG_WEIGHT",
    "Baseline",
    "LocalWindow",
    "estimate_baseline",
    "kernel_weight",
    "estimate_lrv",
    "default_bandwidth",
    "weight",
    "local_statistic",
]


class Kernel(str, enum.Enum):
    """Covariance-weighting kernels for long-run variance estimation.

    All three are symmetric with K(0) = 1 and vanish for |x| >= 1, so lags
    j >= l get zero weight:

    * ``TRUNCATED``: K(x) = 1 for |x| < 1, else 0.
    * ``BARTLETT``:  K(x) = 1 - |x| for |x| < 1, else 0.
    * ``PARZEN``:    K(x) = 1 - 6x^2 + 6|x|^3 for |x| <= 1/2,
      2(1 - |x|)^3 for 1/2 < |x| < 1, else 0.
    """

    TRUNCATED = "truncated"
    BARTLETT = "bartlett"
    PARZEN = "parzen"


def kernel_weight(kernel: Kernel, j: int, l: int) -> float:
    """Weight K(j/l) given to the lag-``j`` autocovariance at bandwidth ``l``."""
    if j < 0:
        raise ValueError("lag j must be >= 0")
    if l < 1:
        raise ValueError("bandwidth l must be >= 1")
    x = abs(j) / l
    if x >= 1.0:
        return 0.0
    if kernel == Kernel.TRUNCATED:
        return 1.0
    if kernel == Kernel.BARTLETT:
        return 1.0 - x
    if kernel == Kernel.PARZEN:
        if x <= 0.5:
            return 1.0 - 6.0 * x * x + 6.0 * x * x * x
        return 2.0 * (1.0 - x) ** 3
    raise ValueError(f"unknown kernel {kernel!r}")


def _log_rho(t):
    # rho(t) = max(1, log(1+t))^(-1/2); accepts scalars or arrays.
    return 1.0 / np.sqrt(np.maximum(1.0, np.log1p(t)))


@dataclass(frozen=True)
class WeightFn:
    """Boundary weight w(k, h) = rho(k/h) / sqrt(h).

    ``rho`` must be continuous, vectorized, and bounded away from zero on the
    monitoring horizon; the default logarithmic choice also satisfies
    rho(t) <= 1.
    """

    rho: Callable[[np.ndarray], np.ndarray] = field(repr=False, default=_log_rho)
    name: str = "log"


LOG_WEIGHT = WeightFn()


def weight(wf: WeightFn, k: int, h: int) -> float:
    """Evaluate w(k, h) for monitoring time ``k`` and window size ``h``."""
    if k < 1:
        raise ValueError("monitoring time k must be >= 1")
    if h < 1:
        raise ValueError("window size h must be >= 1")
    return float(wf.rho(k / h)) / math.sqrt(h)


@dataclass(frozen=True)
class Baseline:
    """Per-stream location/scale estimated from the training period.

    ``scale_kind`` records how the scale was obtained: ``"plain"`` for the
    training standard deviation, ``"long_run"`` for the kernel long-run
    variance (with ``kernel`` and ``bandwidth`` set).
    """

    mean: float
    scale: float
    scale_kind: Literal["plain", "long_run"] = "plain"
    kernel: Kernel | None = None
    bandwidth: int | None = None

    def __post_init__(self):
        if not math.isfinite(self.scale) or self.scale <= 0.0:
            raise DegenerateTraining(f"scale must be finite and > 0, got {self.scale!r}")
        if self.scale_kind == "long_run" and (self.kernel is None or self.bandwidth is None):
            raise ValueError("long_run baseline requires kernel and bandwidth")


def _validated_training(history) -> np.ndarray:
    x = np.asarray(history, dtype=float)
    if x.ndim != 1:
        raise ValueError("training history must be one-dimensional")
    if x.size < 2:
        raise TooShort(f"need at least 2 training observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("training history contains non-finite values")
    return x


def _mean_and_centered(x: np.ndarray) -> tuple[float, np.ndarray]:
    mu = math.fsum(x) / x.size
    return mu, x - mu


def estimate_baseline(history: Sequence[float]) -> Baseline:
    """Training mean and standard deviation (population divisor ``m``)."""
    x = _validated_training(history)
    mu, xc = _mean_and_centered(x)
    var = math.fsum(xc * xc) / x.size
    scale = math.sqrt(var)
    # A constant sample can yield a tiny nonzero variance through rounding of
    # the mean; treat anything at rounding magnitude as degenerate.
    tiny = 4.0 * np.finfo(float).eps * float(np.max(np.abs(x), initial=0.0))
    if scale <= tiny:
        raise DegenerateTraining("training history is constant (zero variance)")
    return Baseline(mean=mu, scale=scale, scale_kind="plain")


def default_bandwidth(m: int) -> int:
    """Default HAC bandwidth ceil(m^(1/3))."""
    return int(math.ceil(m ** (1.0 / 3.0)))


def estimate_lrv(
    history: Sequence[float],
    kernel: Kernel = Kernel.BARTLETT,
    bandwidth: int | None = None,
    *,
    on_nonpositive: Literal["raise", "plain"] = "raise",
) -> Baseline:
    """Long-run variance baseline via kernel-weighted autocovariances.

    scale^2 = gamma_0 + 2 * sum_j K(j/l) * gamma_j with
    gamma_j = (1/(m-j)) * sum_t (x_t - mu)(x_{t+j} - mu).

    The kernel sum can come out non-positive (strong negative
    autocorrelation); by default this raises :class:`NonPositiveLRV`, with
    ``on_nonpositive="plain"`` the plain-variance baseline is returned instead
    (recognizable by its ``scale_kind``).
    """
    x = _validated_training(history)
    m = x.size
    l = default_bandwidth(m) if bandwidth is None else int(bandwidth)
    if not 1 <= l <= m - 1:
        raise ValueError(f"bandwidth must satisfy 1 <= l <= m-1, got l={l}, m={m}")
    mu, xc = _mean_and_centered(x)
    gamma0 = math.fsum(xc * xc) / m
    acc = gamma0
    # All supported kernels vanish at |x| >= 1, so lags j >= l contribute nothing.
    for j in range(1, min(l, m - 1) + 1):
        w = kernel_weight(kernel, j, l)
        if w == 0.0:
            continue
        gamma_j = float(np.dot(xc[: m - j], xc[j:])) / (m - j)
        acc += 2.0 * w * gamma_j
    if acc <= 0.0:
        if on_nonpositive == "plain":
            return estimate_baseline(x)
        raise NonPositiveLRV(acc)
    return Baseline(
        mean=mu,
        scale=math.sqrt(acc),
        scale_kind="long_run",
        kernel=kernel,
        bandwidth=l,
    )


class LocalWindow:
    """Ring buffer of the last ``h`` centered observations with a running sum.

    The running sum is refreshed by an exact recomputation every
    ``REBUILD_EVERY`` pushes, which bounds floating-point drift well below
    1e-9 * (h * max|x|).  Single-writer.
    """

    REBUILD_EVERY = 4096

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("window capacity must be >= 1")
        self.capacity = int(capacity)
        self._buf = np.zeros(self.capacity)
        self._filled = 0
        self._pos = 0
        self._running_sum = 0.0
        self._pushes_since_rebuild = 0

    @property
    def is_full(self) -> bool:
        return self._filled == self.capacity

    @property
    def running_sum(self) -> float:
        return self._running_sum

    def push(self, centered_value: float) -> None:
        """Insert one centered observation, evicting the oldest when full."""
        v = float(centered_value)
        old = self._buf[self._pos] if self.is_full else 0.0
        self._buf[self._pos] = v
        self._pos = (self._pos + 1) % self.capacity
        if not self.is_full:
            self._filled += 1
        self._running_sum += v - old
        self._pushes_since_rebuild += 1
        if self._pushes_since_rebuild >= self.REBUILD_EVERY:
            self._running_sum = math.fsum(self._buf[: self._filled])
            self._pushes_since_rebuild = 0

    def extend(self, centered_values) -> None:
        for v in centered_values:
            self.push(v)


def local_statistic(win: LocalWindow, baseline: Baseline) -> float:
    """Moving-sum statistic |sum of window| / scale for a full window."""
    if not win.is_full:
        raise WindowNotFull(
            f"window holds {win._filled} of {win.capacity} observations"
        )
    return abs(win.running_sum) / baseline.scale
