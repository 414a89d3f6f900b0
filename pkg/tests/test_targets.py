import numpy as np
import pytest

from deeptcsr.hazard_model import HazardMatrix, hazard_matrix
from deeptcsr.seqdata import SequenceRecord
from deeptcsr.targets import (EXTENDED, WITHIN_WINDOW, hard_labels, initial_only, pseudo_table,
                              pseudo_table_oracle, table_windows)

from conftest import random_model, random_sequence

H = 8


def seq_of(t, censored, dim=1):
    return SequenceRecord("s", np.arange(t * dim, dtype=float).reshape(t, dim), censored)


def valid(table):
    return table.valid_mask()


def test_hard_labels_t3_uncensored():
    tab = hard_labels(seq_of(3, False))
    assert list(tab.window) == [2, 1, 0]
    assert tab.ytilde[0, 1] == 0 and tab.ytilde[0, 2] == 1 and tab.ytilde[1, 1] == 1
    assert list(tab.ytilde[:, 0]) == [0, 0, 1]
    assert np.all(tab.wtilde[valid(tab)] == 1)


def test_hard_labels_t3_censored():
    tab = hard_labels(seq_of(3, True))
    assert np.all(tab.ytilde[valid(tab)] == 0)
    assert np.all(tab.wtilde[valid(tab)] == 1)


def test_hard_labels_single_state():
    tab = hard_labels(seq_of(1, False))
    assert tab.ytilde.shape == (1, 1) and tab.ytilde[0, 0] == 1 and tab.wtilde[0, 0] == 1


def constant_matrix(t, window, h=0.2):
    width = int(window.max())
    hh = np.full((t, width + 1), np.nan)
    S = np.full((t, width + 1), np.nan)
    for ell in range(t):
        hh[ell, 1:window[ell] + 1] = h
        S[ell, :window[ell] + 1] = (1 - h) ** np.arange(window[ell] + 1)
    return HazardMatrix(hh, S, np.asarray(window))


def test_hand_unrolled_half_lambda():
    seq = seq_of(3, False)
    tab = pseudo_table(seq, constant_matrix(3, table_windows(3)), 0.5)
    assert tab.ytilde[1, 1] == 1 and tab.ytilde[0, 1] == 0
    assert tab.ytilde[0, 2] == pytest.approx(0.6, abs=1e-15)
    assert tab.wtilde[0, 1] == 1 and tab.wtilde[1, 1] == 1
    assert tab.wtilde[0, 2] == pytest.approx(0.9, abs=1e-15)


def matrix_for(rng, seq, mode, arch="linear-cox"):
    model = random_model(rng, arch, dim=seq.feature_dim, horizon=H, scale=1.5)
    return hazard_matrix(model, seq, table_windows(seq.duration, mode, H))


def test_lambda_one_is_hard_labels_bit_exact(rng):
    for _ in range(100):
        seq = random_sequence(rng, int(rng.integers(1, 11)))
        model = random_model(rng, "linear-cox", horizon=10)
        outs = hazard_matrix(model, seq, table_windows(seq.duration))
        assert pseudo_table(seq, outs, 1.0) == hard_labels(seq)


def test_lambda_zero_closed_form(rng, arch):
    for _ in range(20):
        seq = random_sequence(rng, int(rng.integers(2, H + 1)))
        outs = matrix_for(rng, seq, WITHIN_WINDOW, arch)
        tab = pseudo_table(seq, outs, 0.0)
        y = np.zeros(seq.duration)
        y[-1] = 0.0 if seq.censored else 1.0
        for ell in range(seq.duration - 1):
            assert tab.ytilde[ell, 1] == y[ell + 1]
            for d in range(2, tab.window[ell] + 1):
                assert tab.ytilde[ell, d] == outs.h[ell + 1, d - 1]


@pytest.mark.parametrize("mode", [WITHIN_WINDOW, EXTENDED])
@pytest.mark.parametrize("lam", [0.0, 0.3, 0.7, 1.0])
def test_oracle_agreement(rng, mode, lam, arch):
    for _ in range(15):
        seq = random_sequence(rng, int(rng.integers(1, 7)))
        outs = matrix_for(rng, seq, mode, arch)
        fast = pseudo_table(seq, outs, lam, mode, H)
        slow = pseudo_table_oracle(seq, outs, lam, mode, H)
        m = valid(fast)
        assert np.array_equal(m, valid(slow))
        assert np.max(np.abs(fast.ytilde[m] - slow.ytilde[m])) <= 1e-12
        assert np.max(np.abs(fast.wtilde[m] - slow.wtilde[m])) <= 1e-12


def test_oracle_lambda_one_is_hard_labels(rng):
    seq = random_sequence(rng, 5)
    slow = pseudo_table_oracle(seq, matrix_for(rng, seq, WITHIN_WINDOW), 1.0)
    hard = hard_labels(seq)
    assert np.allclose(slow.ytilde, hard.ytilde, equal_nan=True, atol=0)


@pytest.mark.parametrize("mode", [WITHIN_WINDOW, EXTENDED])
def test_bounds_and_monotone_weights(rng, mode):
    for _ in range(50):
        seq = random_sequence(rng, int(rng.integers(1, H + 1)))
        tab = pseudo_table(seq, matrix_for(rng, seq, mode), float(rng.random()), mode, H)
        m = valid(tab)
        assert np.all((tab.ytilde[m] >= 0) & (tab.ytilde[m] <= 1))
        assert np.all((tab.wtilde[m] >= 0) & (tab.wtilde[m] <= 1))
        assert np.all(tab.wtilde[:, 0] == 1)
        for ell in range(seq.duration):
            w = tab.wtilde[ell, :tab.window[ell] + 1]
            assert np.all(np.diff(w) <= 0)


def test_extended_terminal_row(rng):
    cens = random_sequence(rng, 4, censored=True)
    outs = matrix_for(rng, cens, EXTENDED)
    tab = pseudo_table(cens, outs, 0.4, EXTENDED, H)
    last = tab.window[3]
    assert last == H - 4
    assert np.all(tab.ytilde[3, 1:last + 1] == 0)
    assert np.array_equal(tab.wtilde[3, 1:last + 1], outs.S[3, :last])

    event = SequenceRecord("e", cens.states, False)
    tab = pseudo_table(event, outs, 0.4, EXTENDED, H)
    assert np.all(tab.ytilde[3, 1:last + 1] == 1) and np.all(tab.wtilde[3, 1:last + 1] == 0)


def test_purity(rng):
    seq = random_sequence(rng, 6)
    outs = matrix_for(rng, seq, WITHIN_WINDOW)
    h0, S0 = outs.h.copy(), outs.S.copy()
    a = pseudo_table(seq, outs, 0.3)
    b = pseudo_table(seq, outs, 0.3)
    assert a == b
    assert np.array_equal(outs.h, h0, equal_nan=True) and np.array_equal(outs.S, S0, equal_nan=True)


@pytest.mark.parametrize("lam", [-0.1, 1.5])
def test_lambda_out_of_range(rng, lam):
    seq = random_sequence(rng, 3)
    with pytest.raises(ValueError):
        pseudo_table(seq, matrix_for(rng, seq, WITHIN_WINDOW), lam)


def test_outputs_must_cover_windows(rng):
    seq = random_sequence(rng, 4)
    outs = matrix_for(rng, seq, WITHIN_WINDOW)
    with pytest.raises(ValueError):
        pseudo_table(seq, outs, 0.5, EXTENDED, H)


def test_initial_only_keeps_landmark_zero():
    tab = initial_only(hard_labels(seq_of(4, False)))
    assert list(tab.window) == [3, 0, 0, 0]
    assert tab.ytilde[0, 3] == 1 and np.isnan(tab.ytilde[1, 1])
