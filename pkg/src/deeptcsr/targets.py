"""Supervision tables for the weighted cross-entropy loss.

Tables are indexed by landmark ``l`` (the state the prediction departs from)
and offset ``d`` (steps ahead), so entry ``(l, d)`` supervises
``h(d | x_l)``.  Offset 0 holds the base case: the observed event indicator
``y_l`` with weight 1.

``hard_labels`` gives the observed (landmarking) targets.  ``pseudo_table``
mixes them with target-network bootstraps::

    ytilde[l, d] = lam * ytilde[l+1, d-1] + (1 - lam) * h_phi(d-1 | x_{l+1})
    wtilde[l, d] = lam * wtilde[l+1, d-1] + (1 - lam) * S_phi(d-1 | x_{l+1})

with ``h_phi(0 | x_j) = y_j`` and ``S_phi(0 | .) = 1``.

Two window modes: ``within_window`` covers the observed offsets
``d <= t-1-l``; ``extended`` runs every landmark to ``H-1-l``, with the last
landmark row fixed to ``y_{t-1}`` and weighted by ``S_phi(d-1 | x_{t-1})``
when censored (0 otherwise).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WITHIN_WINDOW = "within_window"
EXTENDED = "extended"
TABLE_MODES = (WITHIN_WINDOW, EXTENDED)


@dataclass(frozen=True, eq=False)
class TargetTable:
    """Pseudo-targets and pseudo-weights, shape (t, max_window + 1), NaN-padded."""

    ytilde: np.ndarray
    wtilde: np.ndarray
    window: np.ndarray
    lam: float
    mode: str

    def __eq__(self, other):
        if not isinstance(other, TargetTable):
            return NotImplemented
        return (np.array_equal(self.window, other.window)
                and np.array_equal(self.ytilde, other.ytilde, equal_nan=True)
                and np.array_equal(self.wtilde, other.wtilde, equal_nan=True))

    def valid_mask(self) -> np.ndarray:
        d = np.arange(self.ytilde.shape[1])
        return d[None, :] <= self.window[:, None]


def table_windows(t: int, mode: str = WITHIN_WINDOW, horizon=None) -> np.ndarray:
    """Largest supervised offset per landmark."""
    ell = np.arange(t)
    if mode == WITHIN_WINDOW:
        return t - 1 - ell
    if mode == EXTENDED:
        if horizon is None or horizon < t:
            raise ValueError("extended mode needs a horizon >= the sequence duration")
        return horizon - 1 - ell
    raise ValueError(f"unknown table mode {mode!r}")


def observed_labels(seq) -> np.ndarray:
    """Event indicator ``y_l`` at every absolute index of the sequence."""
    y = np.zeros(seq.duration)
    if not seq.censored:
        y[-1] = 1.0
    return y


def _empty(window):
    shape = (window.size, int(window.max()) + 1)
    return np.full(shape, np.nan), np.full(shape, np.nan)


def hard_labels(seq) -> TargetTable:
    t = seq.duration
    window = table_windows(t)
    yt, wt = _empty(window)
    y = observed_labels(seq)
    for ell in range(t):
        # label(l, d) = y_{l+d}
        yt[ell, :window[ell] + 1] = y[ell:]
        wt[ell, :window[ell] + 1] = 1.0
    return TargetTable(yt, wt, window, 1.0, WITHIN_WINDOW)


def initial_only(table: TargetTable) -> TargetTable:
    """Keep only landmark 0 in the loss (later rows reduced to their offset-0 entry)."""
    window = table.window.copy()
    window[1:] = 0
    yt, wt = table.ytilde.copy(), table.wtilde.copy()
    yt[1:, 1:] = np.nan
    wt[1:, 1:] = np.nan
    return TargetTable(yt, wt, window, table.lam, table.mode)


def _check(seq, target_outputs, lam, mode, horizon):
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    window = table_windows(seq.duration, mode, horizon)
    have = np.asarray(target_outputs.window)
    if have.shape != window.shape or np.any(have < window):
        raise ValueError("target network outputs do not cover the table windows")
    return window


def pseudo_table(seq, target_outputs, lam: float, mode: str = WITHIN_WINDOW,
                 horizon=None) -> TargetTable:
    """Pseudo-targets/weights bootstrapped from target-network hazards.

    ``target_outputs`` is the :class:`~deeptcsr.hazard_model.HazardMatrix` of
    the target network on ``seq``; it must cover the windows of ``mode``
    (``horizon`` is required for the extended mode).
    """
    window = _check(seq, target_outputs, lam, mode, horizon)
    h, S = target_outputs.h, target_outputs.S
    t = seq.duration
    y = observed_labels(seq)
    yt, wt = _empty(window)
    yt[:, 0] = y
    wt[:, 0] = 1.0

    last = window[t - 1]
    if last > 0:
        yt[t - 1, 1:last + 1] = y[t - 1]
        wt[t - 1, 1:last + 1] = S[t - 1, :last] if seq.censored else 0.0

    mu = 1.0 - lam
    for ell in range(t - 2, -1, -1):
        w = window[ell]
        nxt = ell + 1
        boot_h = np.empty(w)
        boot_h[0] = y[nxt]
        boot_h[1:] = h[nxt, 1:w]
        yt[ell, 1:w + 1] = lam * yt[nxt, :w] + mu * boot_h
        wt[ell, 1:w + 1] = lam * wt[nxt, :w] + mu * S[nxt, :w]
    return TargetTable(yt, wt, window, float(lam), mode)


def pseudo_table_oracle(seq, target_outputs, lam: float, mode: str = WITHIN_WINDOW,
                        horizon=None) -> TargetTable:
    """Entry-by-entry explicit sums; a test oracle for :func:`pseudo_table`.

    Each entry walks the chain ``(l, d) -> (l+1, d-1)`` for ``n`` steps until it
    hits offset 0 or the last landmark, accumulating
    ``sum_s lam**(s-1) (1-lam) boot(l+s, d-s) + lam**n * boundary``.
    """
    window = _check(seq, target_outputs, lam, mode, horizon)
    h, S = target_outputs.h, target_outputs.S
    t = seq.duration
    y = [0.0] * t
    if not seq.censored:
        y[t - 1] = 1.0

    def boot_hazard(j, k):
        return y[j] if k == 0 else float(h[j, k])

    def boot_surv(j, k):
        return 1.0 if k == 0 else float(S[j, k])

    yt, wt = _empty(window)
    for ell in range(t):
        for d in range(window[ell] + 1):
            n = min(d, t - 1 - ell)
            ysum = wsum = 0.0
            for s in range(1, n + 1):
                coef = lam ** (s - 1) * (1.0 - lam)
                ysum += coef * boot_hazard(ell + s, d - s)
                wsum += coef * boot_surv(ell + s, d - s)
            j, k = ell + n, d - n
            if k == 0:
                y_end, w_end = y[j], 1.0
            else:
                y_end = y[t - 1]
                w_end = float(S[t - 1, k - 1]) if seq.censored else 0.0
            yt[ell, d] = ysum + lam ** n * y_end
            wt[ell, d] = wsum + lam ** n * w_end
    return TargetTable(yt, wt, window, float(lam), mode)
