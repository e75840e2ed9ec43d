import json
import math

import numpy as np
import pytest

from netmosum.detection import iter_csv_rows
from netmosum.errors import InvalidScenario
from netmosum.simulate import Scenario, generate, write_csv, write_sidecar


def test_null_mean_within_clt_bound():
    scn = Scenario(d=20, total_length=2000)
    x, delta = generate(scn, 1)
    assert x.shape == (20, 2000)
    assert np.all(delta == 0.0)
    assert abs(x.mean()) < 4.0 / math.sqrt(20 * 2000)


def test_ar1_phi_zero_bit_identical_to_iid():
    iid = Scenario(d=5, total_length=300)
    ar0 = Scenario(d=5, total_length=300, noise="ar1", phi=0.0)
    a, _ = generate(iid, 9)
    b, _ = generate(ar0, 9)
    assert np.array_equal(a, b)


def test_ar1_matches_naive_recursion():
    scn = Scenario(d=3, total_length=200, noise="ar1", phi=0.7)
    x, _ = generate(scn, 13)
    # rebuild from the same substreams
    from netmosum.rng import substream

    v = substream(13, 1).standard_normal((3, 200))
    eps0 = substream(13, 2).standard_normal(3) / np.sqrt(1 - 0.49)
    manual = np.empty_like(v)
    for i in range(3):
        prev = eps0[i]
        for t in range(200):
            prev = 0.7 * prev + v[i, t]
            manual[i, t] = prev
    np.testing.assert_allclose(x, manual, rtol=1e-12, atol=1e-12)


def test_ar1_moments():
    scn = Scenario(d=1, total_length=100_000, noise="ar1", phi=0.5)
    x, _ = generate(scn, 3)
    row = x[0]
    assert abs(row.var() - 1.0 / (1.0 - 0.25)) < 0.05
    lag1 = np.corrcoef(row[:-1], row[1:])[0, 1]
    assert abs(lag1 - 0.5) < 0.02


def test_ar1_stationary_initialization():
    # variance of the first column across many streams matches 1/(1-phi^2)
    scn = Scenario(d=30_000, total_length=2, noise="ar1", phi=0.6)
    x, _ = generate(scn, 5)
    v = x[:, 0].var()
    assert abs(v - 1.0 / (1.0 - 0.36)) < 0.05


def test_prechange_segment_bit_identical_to_null():
    null = Scenario(d=4, total_length=500)
    alt = Scenario(d=4, total_length=500, shift="fixed", p=2, tau=301, delta=3.0)
    a, _ = generate(null, 21)
    b, delta = generate(alt, 21)
    assert np.array_equal(a[:, :300], b[:, :300])
    np.testing.assert_allclose(
        b[:, 300:] - a[:, 300:], np.broadcast_to(delta[:, None], (4, 200))
    )
    assert list(delta) == [3.0, 3.0, 0.0, 0.0]


def test_zero_fixed_shift_everywhere_equals_null():
    null = Scenario(d=3, total_length=100)
    alt = Scenario(d=3, total_length=100, shift="fixed", p=3, tau=50, delta=0.0)
    a, _ = generate(null, 2)
    b, _ = generate(alt, 2)
    assert np.array_equal(a, b)


def test_gaussian_shift_draws_once_per_replication():
    scn = Scenario(d=6, total_length=100, shift="gaussian", p=4, tau=50, eta=2.0)
    x1, d1 = generate(scn, 4)
    x2, d2 = generate(scn, 4)
    assert np.array_equal(x1, x2)
    assert np.array_equal(d1, d2)
    assert np.all(d1[4:] == 0.0)
    assert np.all(d1[:4] != 0.0)
    _, d3 = generate(scn, 5)
    assert not np.array_equal(d1, d3)


def test_reproducibility_and_seed_sensitivity():
    scn = Scenario(d=2, total_length=50)
    a, _ = generate(scn, 7)
    b, _ = generate(scn, 7)
    c, _ = generate(scn, 8)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_tau_inside_training_rejected():
    scn = Scenario(d=2, total_length=100, shift="fixed", p=1, tau=30, delta=1.0)
    with pytest.raises(InvalidScenario):
        generate(scn, 0, m=30)
    x, _ = generate(scn, 0, m=29)
    assert x.shape == (2, 100)


def test_scenario_validation():
    with pytest.raises(InvalidScenario):
        Scenario(d=2, total_length=100, shift="fixed", p=0, tau=50, delta=1.0)
    with pytest.raises(InvalidScenario):
        Scenario(d=2, total_length=100, p=1)
    with pytest.raises(InvalidScenario):
        Scenario(d=2, total_length=100, shift="fixed", p=3, tau=50, delta=1.0)
    with pytest.raises(InvalidScenario):
        Scenario(d=2, total_length=100, shift="fixed", p=1, tau=0, delta=1.0)
    with pytest.raises(InvalidScenario):
        Scenario(d=2, total_length=100, noise="ar1", phi=1.0)
    with pytest.raises(InvalidScenario):
        Scenario(d=2, total_length=100, phi=0.3)


def test_csv_round_trip(tmp_path):
    scn = Scenario(d=3, total_length=40)
    x, delta = generate(scn, 6)
    path = tmp_path / "x.csv"
    write_csv(path, x)
    back = np.asarray(list(iter_csv_rows(path))).T
    assert np.array_equal(back, x)
    side = tmp_path / "x.json"
    write_sidecar(side, delta, None)
    payload = json.loads(side.read_text())
    assert payload == {"tau": None, "delta": [0.0, 0.0, 0.0]}
