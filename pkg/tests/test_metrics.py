import json

import numpy as np
import pytest

from deeptcsr.hazard_model import LINEAR, init_params
from deeptcsr.metrics import (brier_curve, brier_from_curves, concordance_from_curves,
                              concordance_index, evaluate, ibs, kaplan_meier, variability_delta)
from deeptcsr.seqdata import Dataset, SequenceRecord

from conftest import random_dataset


# ---------------------------------------------------------------------------
# Kaplan-Meier

def test_km_hand_example():
    km = kaplan_meier([1, 2, 3], [False, True, False])
    assert km(0) == 1.0
    assert km(1) == 2 / 3 and km(2) == 2 / 3 and km(3) == 0.0


def test_km_all_censored():
    km = kaplan_meier([1, 4, 2], [True, True, True])
    assert np.all(km.on_grid(6) == 1.0)


def test_km_single_event():
    km = kaplan_meier([3], [False])
    assert list(km.on_grid(5)) == [1, 1, 1, 0, 0]


def test_km_empty():
    with pytest.raises(ValueError):
        kaplan_meier([], [])


def brute_km(times, censored, k):
    s = 1.0
    for u in range(0, k + 1):
        at_risk = sum(1 for t in times if t >= u)
        events = sum(1 for t, c in zip(times, censored) if t == u and not c)
        if at_risk:
            s = s * (at_risk - events) / at_risk
    return s


def test_km_matches_risk_set_enumeration(rng):
    for _ in range(50):
        n = int(rng.integers(1, 11))
        times = rng.integers(0, 6, n)
        cens = rng.random(n) < 0.4
        km = kaplan_meier(times, cens)
        grid = km.on_grid(7)
        assert grid[0] == brute_km(times, cens, 0) or times.min() == 0
        assert np.all(np.diff(grid) <= 0) and np.all((grid >= 0) & (grid <= 1))
        for k in range(7):
            assert grid[k] == pytest.approx(brute_km(times, cens, k), abs=1e-15)


# ---------------------------------------------------------------------------
# concordance

def test_ci_perfect_and_constant():
    times = np.array([0, 1, 2, 3])
    events = np.ones(4, bool)
    # longer-lived subjects get higher survival everywhere
    curves = np.repeat(np.array([0.1, 0.3, 0.6, 0.9])[:, None], 4, axis=1)
    assert concordance_from_curves(curves, times, events) == (1.0, 6)
    assert concordance_from_curves(np.full((4, 4), 0.7), times, events)[0] == 0.5


def test_ci_three_records_one_wrong():
    times = np.array([0, 1, 2])
    events = np.ones(3, bool)
    # pairs (1 vs 0) and (2 vs 0) concordant; (2 vs 1) reversed
    curves = np.array([[0.1, 0.1, 0.1], [0.5, 0.9, 0.9], [0.6, 0.6, 0.6]])
    ci, pairs = concordance_from_curves(curves, times, events)
    assert pairs == 3 and ci == pytest.approx(2 / 3, abs=1e-15)


def test_ci_censored_shorter_not_comparable():
    times = np.array([1, 3])
    assert concordance_from_curves(np.ones((2, 4)), times, np.array([False, True])) == (None, 0)


def test_ci_rank_invariance_and_negation(rng):
    for _ in range(20):
        n = 15
        times = rng.integers(0, 6, n)
        events = rng.random(n) < 0.7
        curves = rng.random((n, 6))
        ci, pairs = concordance_from_curves(curves, times, events)
        if ci is None:
            continue
        assert concordance_from_curves(np.exp(3 * curves) - 2, times, events)[0] == pytest.approx(ci, abs=1e-15)
        assert ci + concordance_from_curves(-curves, times, events)[0] == pytest.approx(1.0, abs=1e-12)


def test_ci_zero_model_is_half(rng):
    ds = random_dataset(rng, 30, dim=3, horizon=8)
    ci, pairs = concordance_index(init_params(LINEAR, 3, 8), ds)
    assert pairs > 0 and ci == 0.5


# ---------------------------------------------------------------------------
# Brier score

def reference_brier(curves, times, events, horizon):
    """Direct double sum with a hand-rolled censoring KM."""
    n = len(times)

    def G(k):
        # censorings are the events of G, so the original events act as its censored flags
        return brute_km(times, list(events), k)

    out = []
    for k in range(horizon):
        total, count = 0.0, 0
        for i in range(n):
            if events[i] and times[i] <= k:
                g = G(times[i])
                if g >= 1e-12:
                    total += curves[i][k] ** 2 / g
                    count += 1
            elif times[i] > k:
                g = G(k)
                if g >= 1e-12:
                    total += (1 - curves[i][k]) ** 2 / g
                    count += 1
            else:
                count += 1  # censored before k: contributes zero
        out.append(total / count if count else 0.0)
    return np.array(out)


def test_brier_matches_reference(rng):
    for _ in range(40):
        n = int(rng.integers(1, 12))
        H = int(rng.integers(1, 7))
        times = rng.integers(0, H, n)
        events = rng.random(n) < 0.6
        curves = np.sort(rng.random((n, H)), axis=1)[:, ::-1]
        got = brier_from_curves(curves, times, events, H)
        want = reference_brier(curves, times, events, H)
        assert np.max(np.abs(got - want)) <= 1e-12


def test_brier_single_event_constant_one():
    # S == 1, one event at T = 0, H = 3: every BS(k) = S^2 / G(0) = 1
    bs = brier_from_curves(np.ones((1, 3)), np.array([0]), np.array([True]), 3)
    assert np.array_equal(bs, [1.0, 1.0, 1.0])


def test_brier_degenerate_time_scores_zero():
    # single censored subject at T=0: G(0) = 0, all terms dropped
    bs = brier_from_curves(np.full((1, 2), 0.5), np.array([0]), np.array([False]), 2)
    assert np.array_equal(bs, [0.0, 0.0])


def test_perfect_predictor_curves():
    times = np.array([0, 1, 2, 3, 3])
    curves = (np.arange(5)[None, :] < times[:, None]).astype(float)
    bs = brier_from_curves(curves, times, np.ones(5, bool), 5)
    assert ibs(bs) == 0.0


def test_oracle_model_ibs_near_zero():
    # every record has its event at T = 2, i.e. offset 2; hazards pinned at the logit clamp
    m = init_params(LINEAR, 1, 3).with_params([0.0, -30.0, 30.0, 30.0])
    ds = Dataset(tuple(SequenceRecord(f"r{i}", np.full((3, 1), float(i)), False) for i in range(4)), 1, 3)
    assert ibs(brier_curve(m, ds)) < 1e-6


def test_ibs_examples():
    assert ibs(np.full(5, 0.2)) == pytest.approx(0.2, abs=1e-15)
    assert ibs([0.0, 0.1, 0.2]) == pytest.approx(0.1, abs=1e-15)
    assert ibs(np.zeros(4)) == 0.0


# ---------------------------------------------------------------------------
# variability

def test_delta_examples():
    delta, mean = variability_delta([0.4, 0.6])
    assert delta[0] == pytest.approx(0.4, abs=1e-12) and mean == pytest.approx(0.4, abs=1e-12)
    assert variability_delta([0.3, 0.3, 0.3])[1] == 0.0
    assert variability_delta([0.5, 0.5, 0.5, 0.7])[1] == pytest.approx(0.34991, abs=1e-5)


def test_delta_excludes_degenerate_means_and_is_symmetric(rng):
    samples = rng.random((5, 30))
    samples[:, 0] = 0.0
    samples[:, 1] = 1.0
    delta, mean = variability_delta(samples)
    assert delta.size == 28
    perm = variability_delta(samples[rng.permutation(5)])
    assert np.allclose(perm[0], delta, rtol=1e-12) and perm[1] == pytest.approx(mean, rel=1e-12)


def test_delta_needs_two_samples():
    with pytest.raises(ValueError):
        variability_delta([[0.3, 0.4]])


# ---------------------------------------------------------------------------
# report

def test_report_consistency(tmp_path, rng):
    ds = random_dataset(rng, 40, dim=3, horizon=8)
    m = init_params(LINEAR, 3, 8).with_params(0.5 * rng.standard_normal(11))
    rep = evaluate(m, ds)
    assert rep.ibs == float(np.mean(rep.bs_curve)) and len(rep.bs_curve) == 8
    rep.to_json(tmp_path / "r.json")
    rep.bs_to_csv(tmp_path / "bs.csv")
    back = json.loads((tmp_path / "r.json").read_text())
    assert back["ci"] == rep.ci and back["n_pairs_used"] == rep.n_pairs_used
    rows = (tmp_path / "bs.csv").read_text().splitlines()
    assert rows[0] == "k,bs" and np.array_equal([float(r.split(",")[1]) for r in rows[1:]], rep.bs_curve)
