"""Replicated experiments: delay, transmission cost, size, parameter studies.

Metric conventions (time is absolute, alarm time is ``m + k_hat``):

* a false positive is an alarm strictly before the changepoint (under a null
  scenario, any alarm);
* a detection is an alarm at or after the changepoint (the observation at
  ``tau`` is already post-change), and the average detection delay ``add``
  averages ``alarm - tau`` over detections only;
* the per-replication transmission cost is total messages divided by
  ``alarm - m + 1``, with the horizon end substituted when no alarm fires.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .calibration import (
    LimitGrid,
    critical_value_centralized,
    critical_value_distributed,
    empirical_null_thresholds,
)
from .detection import MonitorConfig, ThresholdEvaluator, local_stat_components
from .errors import InvalidScenario, SearchRangeEmpty
from .rng import SeedLike, seed_entropy
from .simulate import Scenario, generate
from .stats import estimate_lrv

__all__ = [
    "RepOutcome",
    "ExperimentReport",
    "run_experiment",
    "run_replications",
    "transmission_profile",
    "null_max_stats",
    "threshold_sweep",
    "recover_bandwidth",
    "BandwidthResult",
    "training_size_study",
    "autocorrelation_study",
    "consistency_study",
]

# Seed purpose tags: replication data vs. internal calibrations never collide.
_DATA = 0
_CAL = 1
_SEARCH = 2


@dataclass(frozen=True)
class RepOutcome:
    """Reduced record of one replication."""

    stopped_at: int | None
    alarm_time_abs: int | None
    false_positive: bool
    detected: bool
    delay: int | None
    total_transmissions: int
    denom_steps: int
    max_weighted: float

    @property
    def trans_rate(self) -> float:
        return self.total_transmissions / self.denom_steps


@dataclass(frozen=True)
class ExperimentReport:
    """Aggregated metrics over replications, with the run setup echoed."""

    add: float
    add_count: int
    trans_avg: float
    fp_rate: float
    detect_rate: float
    reps: int
    scenario: Scenario
    config: MonitorConfig

    def as_row(self) -> dict:
        return {
            "add": self.add,
            "add_count": self.add_count,
            "trans_avg": self.trans_avg,
            "fp_rate": self.fp_rate,
            "detect_rate": self.detect_rate,
            "reps": self.reps,
        }


def _check_pair(scenario: Scenario, config: MonitorConfig) -> None:
    if scenario.d != config.d:
        raise InvalidScenario(
            f"scenario has d={scenario.d} but config expects d={config.d}"
        )
    if scenario.total_length < config.m + 1:
        raise InvalidScenario("scenario too short to monitor anything")
    if not scenario.is_null:
        if scenario.tau <= config.m:
            raise InvalidScenario("changepoint must lie after the training period")
        if scenario.tau > config.m + config.horizon:
            raise InvalidScenario("changepoint lies beyond the monitoring horizon")


def _classify(
    scenario: Scenario, config: MonitorConfig, stopped_at: int | None, steps: int
) -> tuple[bool, bool, int | None, int]:
    if stopped_at is None:
        alarm_abs = None
        fp = detected = False
        delay = None
        denom = steps + 1
    else:
        alarm_abs = config.m + stopped_at
        denom = stopped_at + 1
        if scenario.is_null:
            fp, detected, delay = True, False, None
        elif alarm_abs < scenario.tau:
            fp, detected, delay = True, False, None
        else:
            fp, detected, delay = False, True, alarm_abs - scenario.tau
    return fp, detected, delay, denom


def run_replications(
    scenario: Scenario,
    config: MonitorConfig,
    reps: int,
    seed: SeedLike,
    *,
    full_horizon: bool = False,
) -> list[RepOutcome]:
    """Raw per-replication outcomes (the layer ``run_experiment`` aggregates)."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    _check_pair(scenario, config)
    entropy = seed_entropy(seed)
    c_local = None if config.regime == "centralized" else config.c_local
    out = []
    for r in range(reps):
        data, _ = generate(scenario, entropy + [_DATA, r], m=config.m)
        ev = ThresholdEvaluator(local_stat_components(config, data))
        res = ev.run(c_local, config.c_global, full_horizon=full_horizon)
        steps = res.steps_executed if not full_horizon else (
            res.stopped_at if res.stopped_at is not None else res.steps_executed
        )
        fp, detected, delay, denom = _classify(scenario, config, res.stopped_at, steps)
        total = (
            int(res.counts[: res.stopped_at].sum())
            if (full_horizon and res.stopped_at is not None)
            else res.total_transmissions
        )
        out.append(
            RepOutcome(
                stopped_at=res.stopped_at,
                alarm_time_abs=None if res.stopped_at is None else config.m + res.stopped_at,
                false_positive=fp,
                detected=detected,
                delay=delay,
                total_transmissions=total,
                denom_steps=denom,
                max_weighted=res.max_weighted,
            )
        )
    return out


def aggregate(
    outcomes: Sequence[RepOutcome], scenario: Scenario, config: MonitorConfig
) -> ExperimentReport:
    delays = [o.delay for o in outcomes if o.detected]
    add = float(np.mean(delays)) if delays else math.nan
    return ExperimentReport(
        add=add,
        add_count=len(delays),
        trans_avg=float(np.mean([o.trans_rate for o in outcomes])),
        fp_rate=float(np.mean([o.false_positive for o in outcomes])),
        detect_rate=float(np.mean([o.detected for o in outcomes])),
        reps=len(outcomes),
        scenario=scenario,
        config=config,
    )


def run_experiment(
    scenario: Scenario, config: MonitorConfig, reps: int, seed: SeedLike
) -> ExperimentReport:
    """Generate-and-monitor ``reps`` independent replications and aggregate."""
    return aggregate(run_replications(scenario, config, reps, seed), scenario, config)


def transmission_profile(
    scenario: Scenario, config: MonitorConfig, reps: int, seed: SeedLike
) -> np.ndarray:
    """Total transmissions per monitoring step, summed over replications.

    Replications run to the horizon regardless of alarms, so every step is
    observed ``reps`` times.
    """
    _check_pair(scenario, config)
    entropy = seed_entropy(seed)
    c_local = None if config.regime == "centralized" else config.c_local
    totals = None
    for r in range(reps):
        data, _ = generate(scenario, entropy + [_DATA, r], m=config.m)
        ev = ThresholdEvaluator(local_stat_components(config, data))
        res = ev.run(c_local, config.c_global, full_horizon=True)
        totals = res.counts.astype(np.int64) if totals is None else totals + res.counts
    return totals


def null_max_stats(
    config: MonitorConfig,
    scenario: Scenario,
    c_locals: Sequence[float | None],
    reps: int,
    seed: SeedLike,
) -> np.ndarray:
    """Per-replication maxima of the weighted global statistic under the null.

    Shares one set of null runs across all requested filters (``None`` means
    centralized).  Shape: (reps, len(c_locals)).
    """
    if not scenario.is_null:
        raise InvalidScenario("null size evaluation requires a null scenario")
    _check_pair(scenario, config)
    entropy = seed_entropy(seed)
    maxes = np.empty((reps, len(c_locals)))
    for r in range(reps):
        data, _ = generate(scenario, entropy + [_DATA, r], m=config.m)
        ev = ThresholdEvaluator(local_stat_components(config, data))
        for j, c in enumerate(c_locals):
            maxes[r, j] = ev.run(c, math.inf, full_horizon=True).max_weighted
    return maxes


def _shift_scenario(base: Scenario, value: float) -> Scenario:
    if base.shift == "fixed":
        return replace(base, delta=value)
    if base.shift == "gaussian":
        return replace(base, eta=value)
    raise InvalidScenario("sweep needs a 'fixed' or 'gaussian' shift scenario")


def threshold_sweep(
    scenario: Scenario,
    config: MonitorConfig,
    shifts: Sequence[float],
    c_locals: Sequence[float],
    reps: int,
    seed: SeedLike,
    *,
    c_globals: Sequence[float] | None = None,
    alpha: float = 0.05,
    cal_reps: int = 2000,
    cal_increments: int = 10_000,
    n_jobs: int | None = None,
) -> list[dict]:
    """Delay/cost table over a shift grid crossed with local thresholds.

    ``c_globals`` pairs with ``c_locals``; when omitted each one is derived
    from the limit simulation at this config's geometry and ``alpha``.
    Replication seeds are shared across cells, so rows are comparable
    path-by-path.
    """
    entropy = seed_entropy(seed)
    c_locals = [float(c) for c in c_locals]
    if c_globals is None:
        grid = LimitGrid.make(config.h / config.m, config.t_tilde, cal_increments)
        c_globals = [
            critical_value_distributed(
                config.d, alpha, c, grid, cal_reps, entropy + [_CAL], n_jobs=n_jobs
            )
            for c in c_locals
        ]
    elif len(c_globals) != len(c_locals):
        raise ValueError("c_globals must pair with c_locals")

    rows = []
    for shift in shifts:
        cell = _shift_scenario(scenario, shift)
        _check_pair(cell, config)
        per_threshold: list[list[RepOutcome]] = [[] for _ in c_locals]
        for r in range(reps):
            data, _ = generate(cell, entropy + [_DATA, r], m=config.m)
            ev = ThresholdEvaluator(local_stat_components(config, data))
            for j, (cl, cg) in enumerate(zip(c_locals, c_globals)):
                res = ev.run(cl, cg)
                fp, det, delay, denom = _classify(
                    cell, config, res.stopped_at, res.steps_executed
                )
                per_threshold[j].append(
                    RepOutcome(
                        stopped_at=res.stopped_at,
                        alarm_time_abs=None
                        if res.stopped_at is None
                        else config.m + res.stopped_at,
                        false_positive=fp,
                        detected=det,
                        delay=delay,
                        total_transmissions=res.total_transmissions,
                        denom_steps=denom,
                        max_weighted=res.max_weighted,
                    )
                )
        for j, (cl, cg) in enumerate(zip(c_locals, c_globals)):
            rep = aggregate(per_threshold[j], cell, config)
            rows.append(
                {
                    "c_local": cl,
                    "c_global": cg,
                    "shift": float(shift),
                    **rep.as_row(),
                }
            )
    return rows


def _censored_delay(outcomes: Sequence[RepOutcome], scenario: Scenario, config: MonitorConfig) -> float:
    """Mean delay with non-detections counted at the maximum observable delay.

    Used by the bandwidth search so the target is finite even where the
    detection rate is low; false positives are excluded.
    """
    horizon_end = config.m + config.horizon
    values = [
        o.delay if o.detected else horizon_end - scenario.tau
        for o in outcomes
        if not o.false_positive
    ]
    return float(np.mean(values)) if values else math.nan


@dataclass(frozen=True)
class BandwidthResult:
    h_star: int
    delta0: float
    add_ref: float
    rows: list[dict]


def recover_bandwidth(
    config: MonitorConfig,
    scenario: Scenario,
    *,
    h0: int,
    c_local: float,
    delta0: float | str = "auto",
    reps: int = 500,
    seed: SeedLike = 0,
    h_step: int = 10,
    alpha: float = 0.05,
    cal_reps: int = 1000,
    cal_increments: int = 4000,
    delta_grid: Sequence[float] | None = None,
    n_jobs: int | None = None,
) -> BandwidthResult:
    """Find the window size restoring centralized-level delay under filtering.

    Reference: centralized monitoring at window ``h0`` and shift ``delta0``.
    The search walks ``h = h0, h0+h_step, ..., m`` (distributed regime at
    ``c_local``, threshold recalibrated per window) and returns the window
    minimizing the absolute delay gap.  ``delta0="auto"`` locates the shift
    range where the centralized delay collapses from >= 80% to <= 20% of its
    maximum and uses the midpoint.
    """
    if h0 > config.m:
        raise SearchRangeEmpty(f"h0={h0} exceeds the training length m={config.m}")
    if scenario.shift != "fixed":
        raise InvalidScenario("bandwidth recovery sweeps a fixed-shift scenario")
    entropy = seed_entropy(seed)

    # one calibration seed throughout, so thresholds are coupled across the
    # search (and the c_local = 0 candidate matches the reference exactly)
    cal_seed = entropy + [_CAL]
    cfg_ref = replace(config, h=h0, regime="centralized")
    grid_ref = LimitGrid.make(h0 / config.m, config.t_tilde, cal_increments)
    cg_ref = critical_value_centralized(
        config.d, alpha, grid_ref, cal_reps, cal_seed, n_jobs=n_jobs
    )
    cfg_ref = replace(cfg_ref, c_global=cg_ref)

    if delta0 == "auto":
        if delta_grid is None:
            delta_grid = np.round(np.arange(0.1, 2.01, 0.1), 10)
        delays = []
        for dv in delta_grid:
            cell = _shift_scenario(scenario, float(dv))
            outs = run_replications(cell, cfg_ref, reps, entropy + [_SEARCH])
            delays.append(_censored_delay(outs, cell, cfg_ref))
        delays = np.asarray(delays)
        top = delays.max()
        delta0 = None
        best_width = math.inf
        for i in range(len(delta_grid)):
            if delays[i] < 0.8 * top:
                continue
            for j in range(i + 1, len(delta_grid)):
                if delays[j] <= 0.2 * top and delta_grid[j] - delta_grid[i] < best_width:
                    best_width = delta_grid[j] - delta_grid[i]
                    delta0 = 0.5 * (float(delta_grid[i]) + float(delta_grid[j]))
                    break
        if delta0 is None:
            delta0 = float(delta_grid[int(np.argmin(np.abs(delays - 0.5 * top)))])
    delta0 = float(delta0)

    cell = _shift_scenario(scenario, delta0)
    ref_outs = run_replications(cell, cfg_ref, reps, entropy + [_DATA])
    add_ref = _censored_delay(ref_outs, cell, cfg_ref)

    rows = []
    best = None
    for h in range(h0, config.m + 1, h_step):
        grid_h = LimitGrid.make(h / config.m, config.t_tilde, cal_increments)
        cg = critical_value_distributed(
            config.d, alpha, c_local, grid_h, cal_reps, cal_seed, n_jobs=n_jobs
        )
        cfg_h = replace(config, h=h, regime="distributed", c_local=c_local, c_global=cg)
        outs = run_replications(cell, cfg_h, reps, entropy + [_DATA])
        add_h = _censored_delay(outs, cell, cfg_h)
        gap = abs(add_h - add_ref)
        rows.append({"h": h, "c_global": cg, "add": add_h, "gap": gap})
        if best is None or gap < best[0]:
            best = (gap, h)
    return BandwidthResult(h_star=best[1], delta0=delta0, add_ref=add_ref, rows=rows)


def training_size_study(
    m_list: Sequence[int],
    h: int,
    scenario: Scenario,
    reps: int,
    seed: SeedLike,
    *,
    c_local: float = 3.44,
    alpha: float = 0.05,
    cal_reps: int = 400,
    size_reps: int = 400,
) -> list[dict]:
    """Baseline-estimation accuracy and recalibrated size per training length.

    ``scenario`` fixes the noise model and total length; the monitoring
    horizon per row is whatever remains after the training period.  ``reps``
    replications feed the estimator MSEs; the size column uses fresh seeds at
    the recalibrated threshold.
    """
    if not scenario.is_null:
        raise InvalidScenario("training-size study runs under the null")
    entropy = seed_entropy(seed)
    if scenario.noise == "ar1":
        sd_true = 1.0 / math.sqrt(1.0 - scenario.phi**2)
    else:
        sd_true = 1.0
    rows = []
    for mi, m in enumerate(m_list):
        if m < h:
            raise InvalidScenario(f"training length {m} shorter than window {h}")
        t_tilde = (scenario.total_length - m) / m
        config = MonitorConfig(
            d=scenario.d,
            m=m,
            h=h,
            t_tilde=t_tilde,
            c_global=math.inf,
            regime="distributed",
            c_local=c_local,
        )
        _, c_global = empirical_null_thresholds(
            config, scenario, alpha, cal_reps, entropy + [_CAL, mi]
        )
        config = replace(config, c_global=c_global)
        sizes = null_max_stats(config, scenario, [c_local], size_reps, entropy + [_SEARCH, mi])
        empirical_size = float(np.mean(sizes[:, 0] > c_global))

        sq_mean = 0.0
        sq_sd = 0.0
        train_scn = replace(scenario, total_length=m)
        for r in range(reps):
            block, _ = generate(train_scn, entropy + [_DATA, mi, r])
            mu = block.mean(axis=1)
            sd = np.sqrt(np.mean((block - mu[:, None]) ** 2, axis=1))
            sq_mean += float(np.mean(mu**2))
            sq_sd += float(np.mean((sd - sd_true) ** 2))
        rows.append(
            {
                "m": m,
                "c_global": c_global,
                "empirical_size": empirical_size,
                "mse_mean": sq_mean / reps,
                "mse_sd": sq_sd / reps,
            }
        )
    return rows


def autocorrelation_study(
    phis: Sequence[float],
    methods: Sequence[str],
    config: MonitorConfig,
    reps: int,
    seed: SeedLike,
    *,
    deltas: Sequence[float] = (0.5, 1.0),
    ps: Sequence[int] | None = None,
    tau: int,
    total_length: int,
    alpha: float = 0.05,
    iid_thresholds: tuple[float, float] | None = None,
    cal_reps: int = 400,
) -> list[dict]:
    """Compare adjustment strategies under AR(1) noise.

    Methods: ``"none"`` runs the iid-calibrated thresholds unchanged;
    ``"inflate"`` recalibrates the global threshold on the AR(1) null;
    ``"lrv"`` rescales each stream by its long-run variance estimate and keeps
    the iid thresholds.  When ``iid_thresholds`` is omitted they are taken
    from a finite-sample iid null calibration at this geometry.
    """
    known = {"none", "inflate", "lrv"}
    bad = set(methods) - known
    if bad:
        raise ValueError(f"unknown methods {sorted(bad)}; valid: {sorted(known)}")
    if ps is None:
        ps = [config.d]
    entropy = seed_entropy(seed)

    if iid_thresholds is None:
        iid_null = Scenario(d=config.d, total_length=total_length, noise="iid")
        c_local, cg_iid = empirical_null_thresholds(
            replace(config, c_global=math.inf), iid_null, alpha, cal_reps,
            entropy + [_CAL, 0],
        )
    else:
        c_local, cg_iid = iid_thresholds
    if config.regime == "distributed" and c_local != config.c_local:
        config = replace(config, c_local=c_local)

    rows = []
    for fi, phi in enumerate(phis):
        noise_kw = {"noise": "ar1", "phi": float(phi)} if phi else {"noise": "iid"}
        cg_inflate = None
        if "inflate" in methods:
            ar_null = Scenario(d=config.d, total_length=total_length, **noise_kw)
            _, cg_inflate = empirical_null_thresholds(
                replace(config, c_global=math.inf), ar_null, alpha, cal_reps,
                entropy + [_CAL, 1, fi],
            )
        for p in ps:
            for delta in deltas:
                cell = Scenario(
                    d=config.d,
                    total_length=total_length,
                    shift="fixed",
                    p=int(p),
                    tau=int(tau),
                    delta=float(delta),
                    **noise_kw,
                )
                _check_pair(cell, config)
                per_method = {meth: [] for meth in methods}
                for r in range(reps):
                    data, _ = generate(cell, entropy + [_DATA, fi, r], m=config.m)
                    stats = local_stat_components(config, data)
                    ev_plain = ThresholdEvaluator(stats)
                    ev_lrv = None
                    if "lrv" in methods:
                        sigma = np.empty(config.d)
                        for i in range(config.d):
                            sigma[i] = estimate_lrv(
                                data[i, : config.m],
                                config.lrv_kernel,
                                config.lrv_bandwidth,
                                on_nonpositive="plain",
                            ).scale
                        ev_lrv = ThresholdEvaluator(stats, sigma=sigma)
                    for meth in methods:
                        if meth == "none":
                            res = ev_plain.run(c_local, cg_iid)
                        elif meth == "inflate":
                            res = ev_plain.run(c_local, cg_inflate)
                        else:
                            res = ev_lrv.run(c_local, cg_iid)
                        fp, det, delay, denom = _classify(
                            cell, config, res.stopped_at, res.steps_executed
                        )
                        per_method[meth].append(
                            RepOutcome(
                                stopped_at=res.stopped_at,
                                alarm_time_abs=None
                                if res.stopped_at is None
                                else config.m + res.stopped_at,
                                false_positive=fp,
                                detected=det,
                                delay=delay,
                                total_transmissions=res.total_transmissions,
                                denom_steps=denom,
                                max_weighted=res.max_weighted,
                            )
                        )
                for meth in methods:
                    rep = aggregate(per_method[meth], cell, config)
                    rows.append(
                        {
                            "phi": float(phi),
                            "p": int(p),
                            "delta": float(delta),
                            "method": meth,
                            "c_global": cg_inflate if meth == "inflate" else cg_iid,
                            **rep.as_row(),
                        }
                    )
    return rows


def consistency_study(
    sizes: Sequence[tuple[int, int]],
    delta: float,
    d: int,
    reps: int,
    seed: SeedLike,
    *,
    t_tilde: float = 10.0,
    c_local: float = 3.44,
    c_global: float = 7.16,
) -> list[dict]:
    """Growth of the maximum weighted statistic along (m, h) scalings.

    For each (m, h): a dense fixed shift of size ``delta`` hits all ``d``
    streams at ``tau = m + h``; the maximum weighted global statistic over
    the full horizon is averaged over replications, and the detection rate is
    evaluated at the supplied thresholds.
    """
    entropy = seed_entropy(seed)
    rows = []
    for si, (m, h) in enumerate(sizes):
        config = MonitorConfig(
            d=d, m=m, h=h, t_tilde=t_tilde, c_global=c_global,
            regime="distributed", c_local=c_local,
        )
        scenario = Scenario(
            d=d, total_length=m + config.horizon, shift="fixed",
            p=d, tau=m + h, delta=delta,
        )
        _check_pair(scenario, config)
        maxes = np.empty(reps)
        detected = 0
        for r in range(reps):
            data, _ = generate(scenario, entropy + [_DATA, si, r], m=m)
            ev = ThresholdEvaluator(local_stat_components(config, data))
            res = ev.run(c_local, c_global, full_horizon=True)
            maxes[r] = res.max_weighted
            if res.stopped_at is not None and m + res.stopped_at >= scenario.tau:
                detected += 1
        rows.append(
            {
                "m": m,
                "h": h,
                "mean_max_stat": float(maxes.mean()),
                "detect_rate": detected / reps,
            }
        )
    return rows
