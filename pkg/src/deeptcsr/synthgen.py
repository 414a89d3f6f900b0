"""Gaussian random-walk churn data.

Each record starts at ``x_0 ~ N(0, I)`` and moves by standard normal
increments.  At every step ``k = 1, ..., H-1`` the walk stops (event) with
probability ``sigmoid(a @ x_k + b)``; walks that survive to ``k = H-1`` are
censored with duration ``H``.  Termination is never drawn at ``k = 0``, so the
shortest possible duration is 2.

Randomness comes from numpy's ``PCG64`` bit generator seeded with the config
seed.  Draws per record are always ``x_0`` (dim), the increments
``(H-1, dim)`` and ``H-1`` uniforms, in that order, whether or not the walk
stops early, so the stream layout does not depend on ``a`` or ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .seqdata import Dataset, SequenceRecord

PILOT_SIZE = 2000


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class RwConfig:
    n: int
    dim: int
    horizon: int
    a: np.ndarray = field(repr=False)
    b: float
    seed: int

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64).reshape(-1)
        if self.n < 1 or self.dim < 1 or self.horizon < 2:
            raise ValueError("need n >= 1, dim >= 1, horizon >= 2")
        if a.shape != (self.dim,):
            raise ValueError(f"a must have length {self.dim}, got {a.shape[0]}")
        if not (np.all(np.isfinite(a)) and np.isfinite(self.b)):
            raise ValueError("a and b must be finite")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", float(self.b))

    def to_dict(self):
        return {"n": self.n, "dim": self.dim, "horizon": self.horizon,
                "a": self.a.tolist(), "b": self.b, "seed": self.seed}


def default_coefficients(dim: int, seed: int) -> np.ndarray:
    """Unit-norm hazard direction drawn from ``seed``."""
    a = np.random.Generator(np.random.PCG64(seed)).standard_normal(dim)
    return a / np.linalg.norm(a)


def _walks(n, dim, horizon, seed):
    """Yield (states, uniforms) per record from a single sequential stream."""
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(n):
        x0 = rng.standard_normal(dim)
        steps = rng.standard_normal((horizon - 1, dim))
        u = rng.random(horizon - 1)
        states = np.empty((horizon, dim))
        states[0] = x0
        np.cumsum(steps, axis=0, out=states[1:])
        states[1:] += x0
        yield states, u


def _durations(states, u, a, b):
    # first k >= 1 with u_k < sigmoid(a.x_k + b); None if the walk survives
    p = expit(states[1:] @ a + b)
    hits = np.flatnonzero(u < p)
    return None if hits.size == 0 else int(hits[0]) + 1


def generate_random_walk(cfg: RwConfig) -> Dataset:
    records = []
    for i, (states, u) in enumerate(_walks(cfg.n, cfg.dim, cfg.horizon, cfg.seed)):
        k = _durations(states, u, cfg.a, cfg.b)
        if k is None:
            records.append(SequenceRecord(f"rw{i}", states, True))
        else:
            records.append(SequenceRecord(f"rw{i}", states[:k + 1], False))
    return Dataset(tuple(records), cfg.dim, cfg.horizon)


def calibrate_intercept(dim, horizon, a, target_censoring, seed, *, tol=0.01,
                        lo=-10.0, hi=10.0, max_steps=60, pilot_size=PILOT_SIZE) -> float:
    """Find the intercept ``b`` giving roughly ``target_censoring`` censored walks.

    Bisection over ``[lo, hi]`` on a fixed pilot sample (common random numbers,
    so the censoring fraction is monotone non-increasing in ``b``).  Stops as
    soon as the pilot fraction is within ``tol`` of the target; after
    ``max_steps`` the best point is accepted if it lies within 0.05.
    """
    if not 0.0 < target_censoring < 1.0:
        raise ValueError("target_censoring must lie in (0, 1)")
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    # censored iff no step with u_k < sigmoid(z_k + b), i.e. b <= min_k(logit(u_k) - z_k)
    thresholds = []
    for states, u in _walks(pilot_size, dim, horizon, seed):
        with np.errstate(divide="ignore"):
            thresholds.append(np.min(np.log(u) - np.log1p(-u) - states[1:] @ a))
    thresholds = np.asarray(thresholds)

    def frac(b):
        return float(np.mean(b <= thresholds))

    f_lo, f_hi = frac(lo), frac(hi)
    if not (f_hi <= target_censoring <= f_lo):
        raise CalibrationError(
            f"target censoring {target_censoring} not bracketed by b in [{lo}, {hi}] "
            f"(fractions {f_lo:.3f} .. {f_hi:.3f})")
    best_b, best_err = None, np.inf
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        f = frac(mid)
        err = abs(f - target_censoring)
        if err < best_err:
            best_b, best_err = mid, err
        if err <= tol:
            return mid
        if f > target_censoring:
            lo = mid
        else:
            hi = mid
    if best_err > 0.05:
        raise CalibrationError(
            f"bisection did not reach censoring {target_censoring} (best error {best_err:.3f})")
    return best_b
