"""Synthetic multi-stream scenarios: null, mean shifts, AR(1) noise.

Data layout is streams x time, matching what the detection layer consumes.
Time is 1-based in scenario parameters; a shift at changepoint ``tau`` is
active for all t >= tau.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.signal import lfilter

from .errors import InvalidScenario
from .rng import SeedLike, substream

__all__ = ["Scenario", "generate", "write_csv", "write_sidecar"]

# Substream purpose tags (kept stable: they are part of the output contract).
_NOISE = 1
_AR_INIT = 2
_SHIFT = 3


@dataclass(frozen=True)
class Scenario:
    """One data-generating configuration.

    ``shift`` selects the alternative: ``"none"`` (null), ``"fixed"``
    (delta added to the first ``p`` streams) or ``"gaussian"`` (per-stream
    shifts eta * N(0,1) drawn once per replication for the first ``p``
    streams).  ``noise`` is iid N(0,1) or a stationary AR(1) with
    innovation variance 1.
    """

    d: int
    total_length: int
    shift: Literal["none", "fixed", "gaussian"] = "none"
    p: int = 0
    tau: int | None = None
    delta: float = 0.0
    eta: float = 0.0
    noise: Literal["iid", "ar1"] = "iid"
    phi: float = 0.0

    def __post_init__(self):
        if self.d < 1:
            raise InvalidScenario("d must be >= 1")
        if self.total_length < 1:
            raise InvalidScenario("total_length must be >= 1")
        if self.shift not in ("none", "fixed", "gaussian"):
            raise InvalidScenario(f"unknown shift {self.shift!r}")
        if self.noise not in ("iid", "ar1"):
            raise InvalidScenario(f"unknown noise {self.noise!r}")
        if self.shift == "none":
            if self.p != 0:
                raise InvalidScenario("p must be 0 under the null (shift='none')")
        else:
            if not 1 <= self.p <= self.d:
                raise InvalidScenario("need 1 <= p <= d for an alternative scenario")
            if self.tau is None or not 1 <= self.tau <= self.total_length:
                raise InvalidScenario("alternative scenario needs 1 <= tau <= total_length")
        if self.shift == "gaussian" and self.eta < 0:
            raise InvalidScenario("eta must be >= 0")
        if self.noise == "ar1":
            if not abs(self.phi) < 1:
                raise InvalidScenario("AR(1) requires |phi| < 1")
        elif self.phi != 0.0:
            raise InvalidScenario("phi must be 0 for iid noise")

    @property
    def is_null(self) -> bool:
        return self.shift == "none"


def generate(
    scenario: Scenario, seed: SeedLike, *, m: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Draw one replication: (d x T data matrix, realized shift vector).

    When the training length ``m`` is supplied, alternative scenarios with
    ``tau <= m`` are rejected (the training period must be change-free).

    The noise block, the AR(1) stationary initial values, and the random
    shifts come from separate substreams of ``seed``, so the pre-change
    segment of an alternative is bit-identical to the null under the same
    seed, and AR(1) with phi = 0 is bit-identical to iid noise.
    """
    sc = scenario
    if m is not None and not sc.is_null and sc.tau is not None and sc.tau <= m:
        raise InvalidScenario(
            f"changepoint tau={sc.tau} lies inside the training period (m={m})"
        )
    d, T = sc.d, sc.total_length
    v = substream(seed, _NOISE).standard_normal((d, T))
    if sc.noise == "ar1" and sc.phi != 0.0:
        phi = sc.phi
        eps0 = substream(seed, _AR_INIT).standard_normal(d) / np.sqrt(1.0 - phi * phi)
        zi = (phi * eps0)[:, None]
        x, _ = lfilter([1.0], [1.0, -phi], v, axis=1, zi=zi)
    else:
        x = v

    delta = np.zeros(d)
    if sc.shift == "fixed":
        delta[: sc.p] = sc.delta
    elif sc.shift == "gaussian":
        delta[: sc.p] = sc.eta * substream(seed, _SHIFT).standard_normal(sc.p)
    if not sc.is_null:
        x[:, sc.tau - 1 :] += delta[:, None]
    return x, delta


def write_csv(path, data: np.ndarray, *, delimiter: str = ",", header: bool = False) -> None:
    """Write a streams x time matrix as CSV with one row per time step."""
    data = np.asarray(data)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter)
        if header:
            w.writerow([f"stream_{i}" for i in range(data.shape[0])])
        for col in data.T:
            w.writerow([repr(float(v)) for v in col])


def write_sidecar(path, delta: np.ndarray, tau: int | None) -> None:
    """Write the realized shift vector and changepoint next to a data file."""
    payload = {"tau": tau, "delta": [float(v) for v in np.asarray(delta)]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
