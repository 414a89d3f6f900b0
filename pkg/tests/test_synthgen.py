import numpy as np
import pytest

from deeptcsr.seqdata import dataset_stats, save_dataset
from deeptcsr.synthgen import (CalibrationError, RwConfig, calibrate_intercept,
                               default_coefficients, generate_random_walk)


def test_tiny_intercept_censors_everything():
    ds = generate_random_walk(RwConfig(200, 4, 9, np.zeros(4), -1e6, seed=1))
    assert all(r.censored and r.duration == 9 for r in ds)


def test_fair_coin_horizon_three():
    # P(t=2) = 1/2; P(t=3, event) = 1/4; P(censored) = 1/4
    ds = generate_random_walk(RwConfig(10000, 2, 3, np.zeros(2), 0.0, seed=5))
    d = ds.durations
    assert abs(np.mean(d == 2) - 0.5) < 0.03
    assert abs(np.mean(ds.censored) - 0.25) < 0.03
    assert set(d[ds.censored]) == {3}


def test_per_step_rate_matches_sigmoid():
    p = 0.3
    b = np.log(p / (1 - p))
    ds = generate_random_walk(RwConfig(20000, 3, 6, np.zeros(3), b, seed=9))
    d = ds.durations
    for k in range(1, 5):
        n_risk = np.count_nonzero(d > k)  # still running at step k
        stopped = np.count_nonzero((d == k + 1) & ~ds.censored)
        rate = stopped / n_risk
        sigma = np.sqrt(p * (1 - p) / n_risk)
        assert abs(rate - p) < 4 * sigma


def test_bounds_and_censoring_rule():
    a = default_coefficients(5, 0)
    ds = generate_random_walk(RwConfig(500, 5, 12, a, -1.0, seed=3))
    for r in ds:
        assert 2 <= r.duration <= 12
        if r.censored:
            assert r.duration == 12


def test_walk_increments_are_prefix_of_full_walk():
    a = default_coefficients(3, 0)
    short = generate_random_walk(RwConfig(50, 3, 10, a, 0.5, seed=4))
    full = generate_random_walk(RwConfig(50, 3, 10, a, -1e6, seed=4))
    for s, f in zip(short, full):
        assert np.array_equal(s.states, f.states[:s.duration])


def test_determinism_bytes(tmp_path):
    cfg = RwConfig(100, 4, 10, default_coefficients(4, 1), -0.5, seed=77)
    save_dataset(generate_random_walk(cfg), tmp_path / "a.jsonl")
    save_dataset(generate_random_walk(cfg), tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_default_coefficients_unit_norm():
    a = default_coefficients(20, 5)
    assert a.shape == (20,)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-12


@pytest.mark.parametrize("kw", [dict(n=0), dict(dim=0), dict(horizon=1), dict(b=np.inf)])
def test_config_validation(kw):
    base = dict(n=3, dim=2, horizon=4, a=np.zeros(2), b=0.0, seed=0)
    base.update(kw)
    if "dim" in kw:
        base["a"] = np.zeros(max(kw["dim"], 1))
    with pytest.raises(ValueError):
        RwConfig(**base)


def test_calibrate_fair_coin():
    b = calibrate_intercept(3, 2, np.zeros(3), 0.5, seed=0)
    assert abs(b) < 0.1


def test_calibrate_reproduces_on_fresh_seed():
    a = default_coefficients(20, 2)
    b = calibrate_intercept(20, 11, a, 0.2, seed=21)
    frac = dataset_stats(generate_random_walk(RwConfig(2000, 20, 11, a, b, seed=22))).censoring_fraction
    assert abs(frac - 0.2) <= 0.05


def test_calibrate_unreachable_targets():
    with pytest.raises(ValueError):
        calibrate_intercept(3, 5, np.zeros(3), 0.0, seed=0)
    # a walk of length 2 with b in [-10, 10] cannot be censored 99.9999% of the time
    with pytest.raises(CalibrationError):
        calibrate_intercept(3, 2, np.zeros(3), 0.999999, seed=0, pilot_size=200000)
