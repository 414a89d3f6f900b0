"""Survival metrics: Kaplan-Meier, concordance, Brier score, estimate variability.

Time convention: a record of duration ``t`` has its event (or censoring) at
absolute index ``T = t - 1``, which is the offset at which
``S(k | x_0) = P(T > k | x_0)`` is evaluated.  Brier scores cover
``k = 0..H-1``.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .hazard_model import hazard_grid, survival_curves

log = logging.getLogger(__name__)

KM_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class KmCurve:
    """Right-continuous product-limit step function.

    ``times`` are the distinct event times and ``surv[i]`` the estimate on
    ``[times[i], times[i+1])``; before the first event time the estimate is 1.
    """

    times: np.ndarray
    surv: np.ndarray

    def __call__(self, k):
        k = np.asarray(k)
        pos = np.searchsorted(self.times, k, side="right")
        vals = np.concatenate([[1.0], self.surv])[pos]
        return vals if vals.ndim else float(vals)

    def on_grid(self, horizon: int) -> np.ndarray:
        return self(np.arange(horizon))


def kaplan_meier(durations, censored) -> KmCurve:
    """Product-limit estimate from event/censoring times.

    At each distinct event time ``k`` the estimate is multiplied by
    ``1 - d_k / n_k`` with ``d_k`` events at ``k`` and ``n_k`` subjects whose
    time is ``>= k``; censored subjects stay at risk through their own time.
    """
    durations = np.asarray(durations)
    censored = np.asarray(censored, dtype=bool)
    if durations.size == 0:
        raise ValueError("kaplan_meier needs at least one observation")
    if durations.shape != censored.shape:
        raise ValueError("durations and censoring flags differ in length")
    if np.any(durations < 0):
        raise ValueError("durations must be non-negative")
    event_times = np.unique(durations[~censored])
    sorted_all = np.sort(durations)
    surv, s = [], 1.0
    for k in event_times:
        n_at_risk = sorted_all.size - np.searchsorted(sorted_all, k, side="left")
        d = np.count_nonzero((durations == k) & ~censored)
        s = s * (n_at_risk - d) / n_at_risk  # exact for hand-sized examples
        surv.append(s)
    return KmCurve(event_times, np.asarray(surv, dtype=np.float64))


def _times_events(ds):
    return ds.durations - 1, ~ds.censored


def concordance_from_curves(curves, times, events):
    """Harrell's C from per-subject survival curves ``curves[i, k] = S(k | x_i)``.

    Pairs ``(i, j)`` are comparable when ``times[i] > times[j]`` and ``j`` had
    the event; the pair is concordant when ``S(times[j] | x_i) > S(times[j] | x_j)``,
    ties score 0.5.  Returns ``(ci, n_pairs)`` with ``ci = None`` when no pair
    is comparable.
    """
    curves = np.asarray(curves)
    times = np.asarray(times)
    events = np.asarray(events, dtype=bool)
    score, pairs = 0.0, 0
    for j in np.flatnonzero(events):
        longer = times > times[j]
        n = int(longer.sum())
        if not n:
            continue
        others = curves[longer, times[j]]
        own = curves[j, times[j]]
        score += np.count_nonzero(others > own) + 0.5 * np.count_nonzero(others == own)
        pairs += n
    return (score / pairs if pairs else None), pairs


def concordance_index(model, ds):
    """Concordance of predicted survival from each record's initial state; ``(ci, n_pairs)``."""
    if len(ds) == 0:
        raise ValueError("empty dataset")
    times, events = _times_events(ds)
    curves = survival_curves(model, ds.initial_states(), ds.horizon - 1)
    return concordance_from_curves(curves, times, events)


def brier_from_curves(curves, times, events, horizon):
    """IPCW Brier score ``BS(k)`` for ``k = 0..horizon-1``.

    Subjects with an event at ``T_i <= k`` contribute ``S(k|x_i)^2 / G(T_i)``,
    subjects still at risk (``T_i > k``) contribute ``(1 - S(k|x_i))^2 / G(k)``,
    where ``G`` is the Kaplan-Meier estimate of the censoring distribution on
    the same data.  Terms whose ``G`` is below ``1e-12`` are dropped from both
    the sum and the subject count; a time with no remaining subject scores 0.
    """
    curves = np.asarray(curves)
    times = np.asarray(times)
    events = np.asarray(events, dtype=bool)
    n = times.size
    G = kaplan_meier(times, events)  # censorings are the "events" of G
    G_at_t = G(times)
    bs = np.zeros(horizon)
    for k in range(horizon):
        s = curves[:, k]
        dead = events & (times <= k)
        alive = times > k
        g_k = G(k)
        ok_dead = dead & (G_at_t >= KM_FLOOR)
        dropped = np.count_nonzero(dead & ~ok_dead) + (np.count_nonzero(alive) if g_k < KM_FLOOR else 0)
        total = np.sum(s[ok_dead] ** 2 / G_at_t[ok_dead])
        if g_k >= KM_FLOOR:
            total += np.sum((1.0 - s[alive]) ** 2) / g_k
        count = n - dropped
        if dropped:
            log.debug("BS(%d): %d term(s) dropped for a vanishing censoring KM", k, dropped)
        bs[k] = total / count if count else 0.0
    return bs


def brier_curve(model, ds) -> np.ndarray:
    times, events = _times_events(ds)
    curves = survival_curves(model, ds.initial_states(), ds.horizon - 1)
    return brier_from_curves(curves, times, events, ds.horizon)


def ibs(bs_curve) -> float:
    bs_curve = np.asarray(bs_curve, dtype=np.float64)
    return float(bs_curve.mean()) if bs_curve.size else 0.0


def variability_delta(hazard_samples):
    """Seed-to-seed spread of hazard estimates rescaled by the Bernoulli variance.

    ``hazard_samples`` has shape ``(n_seeds, n_entries)``.  Per entry,
    ``delta = std / (mean * (1 - mean))`` with the population standard
    deviation; entries whose mean is exactly 0 or 1 are skipped.

    Returns ``(delta, mean_delta)``.
    """
    h = np.asarray(hazard_samples, dtype=np.float64)
    if h.ndim == 1:
        h = h[:, None]
    if h.shape[0] < 2:
        raise ValueError("variability needs at least two samples per entry")
    mean = h.mean(axis=0)
    std = h.std(axis=0)
    keep = (mean > 0.0) & (mean < 1.0)
    delta = std[keep] / (mean[keep] * (1.0 - mean[keep]))
    return delta, (float(delta.mean()) if delta.size else None)


def window_hazards(model, ds) -> np.ndarray:
    """All in-window hazards ``h(d | x_l)``, ``1 <= d <= t-1-l``, flattened record by record."""
    out = []
    for rec in ds.records:
        t = rec.duration
        if t < 2:
            continue
        grid = hazard_grid(model, rec.states[:-1], t - 1)
        ell, dcol = np.nonzero(np.arange(t - 1)[None, :] < (t - 1 - np.arange(t - 1))[:, None])
        out.append(grid[ell, dcol])
    return np.concatenate(out) if out else np.zeros(0)


@dataclass
class EvalReport:
    ci: Optional[float]
    bs_curve: np.ndarray
    ibs: float
    n_pairs_used: int

    def to_dict(self):
        d = asdict(self)
        d["bs_curve"] = [float(v) for v in self.bs_curve]
        return d

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def bs_to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["k", "bs"])
            for k, v in enumerate(self.bs_curve):
                writer.writerow([k, repr(float(v))])


def evaluate(model, ds) -> EvalReport:
    times, events = _times_events(ds)
    curves = survival_curves(model, ds.initial_states(), ds.horizon - 1)
    ci, pairs = concordance_from_curves(curves, times, events)
    bs = brier_from_curves(curves, times, events, ds.horizon)
    return EvalReport(ci, bs, ibs(bs), pairs)
