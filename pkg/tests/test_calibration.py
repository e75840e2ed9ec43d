import math

import numpy as np
import pytest
from scipy.stats import norm

from netmosum.calibration import (
    LimitGrid,
    critical_value_centralized,
    critical_value_distributed,
    critical_value_local,
    critical_value_table,
    empirical_null_thresholds,
    expected_transmission_fraction,
    quantile_upper,
    simulate_z_paths,
    sup_samples,
)
from netmosum.detection import MonitorConfig
from netmosum.errors import InsufficientReps, InvalidScenario
from netmosum.simulate import Scenario

COARSE = LimitGrid.make(0.5, 10.0, 1000)


def test_grid_geometry_default():
    g = LimitGrid.make(0.5, 10.0)
    assert g.grid_step == pytest.approx(22.0 / 10_000)
    assert g.n_increments == 10_000
    assert g.burn_in_points == round(10_000 / 11)
    assert g.unit_offset == round(10_000 / 22)
    assert g.n_points * g.grid_step >= 10.0 / 0.5
    assert g.t_values[0] == 0.0
    assert g.t_values[-1] == pytest.approx(20.0, abs=2 * g.grid_step)


def test_grid_validation():
    with pytest.raises(ValueError):
        LimitGrid.make(0.0, 10.0)
    with pytest.raises(ValueError):
        LimitGrid.make(1.5, 10.0)
    with pytest.raises(ValueError):
        LimitGrid.make(0.5, 0.0)
    with pytest.raises(ValueError):
        LimitGrid.make(0.01, 10.0, 100)  # coarser than one step per unit


def test_z_at_origin_vanishes_when_beta_one():
    g = LimitGrid.make(1.0, 5.0, 2000)
    z = simulate_z_paths(3, g, 0)
    assert z.shape == (3, g.n_points)
    assert np.all(z[:, 0] == 0.0)
    assert np.all(z >= 0.0)


def test_z_second_moments_match_brownian_increments():
    # Var(Z(t)) = 1 - beta + 2 beta t for t < 1 and 1 + beta for t >= 1
    g = LimitGrid.make(0.5, 3.0, 1200)
    reps = 4000
    at_zero = np.empty(reps)
    past_one = np.empty(reps)
    j1 = int(round(2.0 / g.grid_step))  # t = 2
    for r in range(reps):
        z = simulate_z_paths(1, g, [17, r])
        at_zero[r] = z[0, 0]
        past_one[r] = z[0, j1]
    assert np.mean(at_zero**2) == pytest.approx(0.5, abs=0.05)
    assert np.mean(past_one**2) == pytest.approx(1.5, abs=0.1)


def test_z_streams_uncorrelated():
    g = LimitGrid.make(0.5, 2.0, 800)
    reps = 1500
    a = np.empty(reps)
    b = np.empty(reps)
    j = g.n_points // 2
    for r in range(reps):
        z = simulate_z_paths(2, g, [23, r])
        a[r], b[r] = z[0, j], z[1, j]
    corr = np.corrcoef(a, b)[0, 1]
    assert abs(corr) < 0.05


def test_quantile_upper_order_statistic():
    samples = np.arange(1.0, 101.0)
    assert quantile_upper(samples, 0.05) == 95.0
    assert quantile_upper(samples, 0.999) == 1.0  # index clamps at the minimum
    assert quantile_upper(samples, 0.01) == 99.0
    with pytest.raises(ValueError):
        quantile_upper(samples, 0.0)


def test_distributed_zero_threshold_equals_centralized_bitwise():
    s = sup_samples(3, COARSE, 150, seed=1, c_locals=(0.0, 2.0))
    assert np.array_equal(s.centralized, s.distributed[:, 0])
    c = critical_value_centralized(3, 0.05, COARSE, 150, seed=1)
    d0 = critical_value_distributed(3, 0.05, 0.0, COARSE, 150, seed=1)
    assert c == d0


def test_dominance_replication_by_replication():
    s = sup_samples(4, COARSE, 120, seed=2, c_locals=(1.0, 2.5))
    assert np.all(s.distributed[:, 0] <= s.centralized + 1e-12)
    assert np.all(s.distributed[:, 1] <= s.distributed[:, 0] + 1e-12)


def test_critical_values_monotone_in_alpha_and_c_local():
    s = sup_samples(5, COARSE, 400, seed=3, c_locals=(0.0, 1.0, 2.0))
    for j in range(3):
        q10 = quantile_upper(s.distributed[:, j], 0.10)
        q05 = quantile_upper(s.distributed[:, j], 0.05)
        q01 = quantile_upper(s.distributed[:, j], 0.01)
        assert q10 <= q05 <= q01
    for alpha in (0.10, 0.05):
        values = [quantile_upper(s.distributed[:, j], alpha) for j in range(3)]
        assert values[0] >= values[1] >= values[2]


def test_huge_local_threshold_sends_nothing_critical_value_zero():
    assert critical_value_distributed(3, 0.05, 50.0, COARSE, 120, seed=4) == 0.0


def test_local_critical_value_positive_single_digits():
    c = critical_value_local(0.05, COARSE, 400, seed=5)
    assert 1.0 < c < 6.0
    # d = 1 centralized coincides with the local machinery
    assert c == critical_value_centralized(1, 0.05, COARSE, 400, seed=5)


def test_sup_samples_deterministic_across_job_counts():
    a = sup_samples(2, COARSE, 40, seed=6, c_locals=(1.5,), n_jobs=1)
    b = sup_samples(2, COARSE, 40, seed=6, c_locals=(1.5,), n_jobs=2)
    assert np.array_equal(a.centralized, b.centralized)
    assert np.array_equal(a.distributed, b.distributed)


@pytest.mark.slow
def test_grid_refinement_stability():
    # at the default resolution, halving the step moves the 5% value < 1%
    reps = 5000
    fine = LimitGrid.make(0.5, 10.0, 10_000)
    finer = LimitGrid.make(0.5, 10.0, 20_000)
    a = critical_value_centralized(5, 0.05, fine, reps, seed=7)
    b = critical_value_centralized(5, 0.05, finer, reps, seed=7)
    assert abs(a - b) / a < 0.01


def test_table_layout_and_reuse():
    rows = critical_value_table([0.1, 0.05], [0.0, 2.0], 3, COARSE, 150, seed=8)
    assert len(rows) == 4
    assert list(rows[0]) == ["alpha", "c_local", "c_global", "d", "beta", "T_tilde", "reps", "seed"]
    by_key = {(r["alpha"], r["c_local"]): r["c_global"] for r in rows}
    assert by_key[(0.1, 0.0)] <= by_key[(0.05, 0.0)]
    assert by_key[(0.05, 2.0)] <= by_key[(0.05, 0.0)]


def test_reps_guard():
    with pytest.raises(ValueError):
        critical_value_centralized(3, 0.05, COARSE, 99, seed=0)


# --- transmission fraction ---------------------------------------------------


def test_transmission_fraction_endpoints():
    assert expected_transmission_fraction(0.0, 1.0, 7) == pytest.approx(7.0)
    assert expected_transmission_fraction(60.0, 1.0, 7) == pytest.approx(0.0, abs=1e-300)


def test_transmission_fraction_hand_value():
    # d * 2 * (1 - Phi(3.44)) with rho(t) = 1
    expect = 100 * 2 * norm.sf(3.44)
    got = expected_transmission_fraction(3.44, 0.5, 100)
    assert got == pytest.approx(expect, rel=1e-12)
    assert got == pytest.approx(0.0582, abs=5e-4)


def test_transmission_fraction_vectorized_over_t():
    t = np.array([0.0, 1.0, 5.0, 20.0])
    out = expected_transmission_fraction(2.0, t, 10)
    assert out.shape == (4,)
    assert np.all(np.diff(out) <= 0)  # rho decays, so the rate decays


def test_transmission_fraction_validation():
    with pytest.raises(ValueError):
        expected_transmission_fraction(-1.0, 1.0, 10)
    with pytest.raises(ValueError):
        expected_transmission_fraction(1.0, 1.0, 0)


# --- empirical null calibration ----------------------------------------------


def test_empirical_null_insufficient_reps():
    config = MonitorConfig(d=2, m=20, h=10, t_tilde=1.0, c_global=1.0)
    scn = Scenario(d=2, total_length=40)
    with pytest.raises(InsufficientReps):
        empirical_null_thresholds(config, scn, 0.05, 100, seed=0)


def test_empirical_null_requires_null_scenario():
    config = MonitorConfig(d=2, m=20, h=10, t_tilde=1.0, c_global=1.0)
    alt = Scenario(d=2, total_length=40, shift="fixed", p=1, tau=30, delta=1.0)
    with pytest.raises(InvalidScenario):
        empirical_null_thresholds(config, alt, 0.05, 400, seed=0)


def test_empirical_null_controls_size_out_of_sample():
    config = MonitorConfig(
        d=5, m=60, h=30, t_tilde=3.0, c_global=math.inf, c_local=1.0
    )
    scn = Scenario(d=5, total_length=60 + config.horizon)
    c_local, c_global = empirical_null_thresholds(config, scn, 0.10, 300, seed=1)
    assert c_local == 1.0
    from netmosum.experiments import null_max_stats

    fresh = null_max_stats(
        MonitorConfig(d=5, m=60, h=30, t_tilde=3.0, c_global=c_global, c_local=1.0),
        scn, [1.0], 400, seed=99,
    )
    size = float((fresh[:, 0] > c_global).mean())
    assert 0.10 - 3 * math.sqrt(0.1 * 0.9 / 400) <= size <= 0.10 + 3 * math.sqrt(0.1 * 0.9 / 400)


@pytest.mark.slow
def test_empirical_null_iid_near_asymptotic_table_value():
    config = MonitorConfig(
        d=100, m=200, h=100, t_tilde=10.0, c_global=math.inf, c_local=3.44
    )
    scn = Scenario(d=100, total_length=200 + config.horizon)
    _, c_global = empirical_null_thresholds(config, scn, 0.05, 400, seed=2)
    assert abs(c_global - 7.16) < 0.5


@pytest.mark.slow
def test_empirical_null_ar1_strictly_larger_than_iid():
    config = MonitorConfig(
        d=20, m=100, h=50, t_tilde=5.0, c_global=math.inf, c_local=2.0
    )
    iid = Scenario(d=20, total_length=100 + config.horizon)
    ar = Scenario(d=20, total_length=100 + config.horizon, noise="ar1", phi=0.25)
    _, c_iid = empirical_null_thresholds(config, iid, 0.05, 300, seed=3)
    _, c_ar = empirical_null_thresholds(config, ar, 0.05, 300, seed=3)
    assert c_ar > c_iid
