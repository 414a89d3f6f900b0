"""Discrete-time hazard models with hand-written gradients.

The hazard of the event ``d >= 1`` steps after observing state ``x`` is
``sigmoid(g(x, d))``.  Two parameterizations of the logit ``g`` are provided:

``linear-cox``
    ``g(x, d) = beta @ x + alpha[d]`` (discrete Cox model with one baseline
    logit per offset).

``feedforward``
    ``g(x, d) = w2 @ tanh(W1 @ x + b1 + E[d]) + alpha[d]``.  ``E`` is a learned
    per-offset embedding injected in the hidden layer, which lets the effect of
    the covariates change with the offset (non-proportional hazards).

All parameters live in one flat :class:`ParameterVector`, so the optimizer and
the target-network moving average work on plain arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

LINEAR = "linear-cox"
FEEDFORWARD = "feedforward"
ARCHITECTURES = (LINEAR, FEEDFORWARD)

# far outside any trained range; keeps the cross-entropy finite
LOGIT_CLAMP = 30.0


class NumericalFailure(FloatingPointError):
    def __init__(self, message, sequence_id=None):
        super().__init__(message)
        self.sequence_id = sequence_id


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """Flat parameter array plus a ``((name, shape), ...)`` layout."""

    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        layout = tuple((str(name), tuple(int(s) for s in shape)) for name, shape in self.layout)
        size = sum(int(np.prod(shape)) for _, shape in layout)
        if values.size != size:
            raise ValueError(f"layout describes {size} values, got {values.size}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", layout)

    @property
    def slices(self):
        out, start = {}, 0
        for name, shape in self.layout:
            size = int(np.prod(shape))
            out[name] = (slice(start, start + size), shape)
            start += size
        return out

    def block(self, name) -> np.ndarray:
        sl, shape = self.slices[name]
        return self.values[sl].reshape(shape)

    def replace(self, values) -> "ParameterVector":
        return ParameterVector(values, self.layout)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, ParameterVector):
            return NotImplemented
        return self.layout == other.layout and np.array_equal(self.values, other.values)

    def to_dict(self):
        return {"layout": [[name, list(shape)] for name, shape in self.layout],
                "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["values"], dtype=np.float64),
                   tuple((name, tuple(shape)) for name, shape in d["layout"]))


def param_layout(architecture, feature_dim, horizon, hidden=None):
    if architecture == LINEAR:
        return (("beta", (feature_dim,)), ("alpha", (horizon,)))
    if architecture == FEEDFORWARD:
        if not hidden or hidden < 1:
            raise ValueError("feedforward model needs hidden >= 1")
        return (("W1", (hidden, feature_dim)), ("b1", (hidden,)), ("E", (horizon, hidden)),
                ("w2", (hidden,)), ("alpha", (horizon,)))
    raise ValueError(f"unknown architecture {architecture!r}")


@dataclass(frozen=True)
class HazardModel:
    architecture: str
    feature_dim: int
    horizon: int
    params: ParameterVector
    hidden: Optional[int] = None

    def __post_init__(self):
        expected = param_layout(self.architecture, self.feature_dim, self.horizon, self.hidden)
        if self.params.layout != expected:
            raise ValueError("parameter layout does not match the architecture")
        if not np.all(np.isfinite(self.params.values)):
            raise NumericalFailure("non-finite model parameter")

    def with_params(self, params) -> "HazardModel":
        if not isinstance(params, ParameterVector):
            params = self.params.replace(params)
        return HazardModel(self.architecture, self.feature_dim, self.horizon, params, self.hidden)

    def to_dict(self):
        return {"architecture": self.architecture, "feature_dim": self.feature_dim,
                "horizon": self.horizon, "hidden": self.hidden, "params": self.params.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["architecture"], int(d["feature_dim"]), int(d["horizon"]),
                   ParameterVector.from_dict(d["params"]), d.get("hidden"))


def init_params(architecture, feature_dim, horizon, hidden=16, seed=0) -> HazardModel:
    """Fresh model.

    ``linear-cox`` starts at zero (every hazard 0.5).  ``feedforward`` draws
    ``W1 ~ N(0, 1/feature_dim)`` and ``w2 ~ N(0, 1/hidden)`` from a PCG64
    stream seeded with ``seed``; biases, offset embeddings and ``alpha`` start
    at zero.
    """
    if architecture == LINEAR:
        layout = param_layout(LINEAR, feature_dim, horizon)
        return HazardModel(LINEAR, feature_dim, horizon,
                           ParameterVector(np.zeros(feature_dim + horizon), layout))
    layout = param_layout(architecture, feature_dim, horizon, hidden)
    rng = np.random.Generator(np.random.PCG64(seed))
    W1 = rng.standard_normal((hidden, feature_dim)) / np.sqrt(feature_dim)
    w2 = rng.standard_normal(hidden) / np.sqrt(hidden)
    values = np.concatenate([W1.ravel(), np.zeros(hidden), np.zeros(horizon * hidden),
                             w2, np.zeros(horizon)])
    return HazardModel(architecture, feature_dim, horizon, ParameterVector(values, layout), hidden)


# ---------------------------------------------------------------------------
# forward passes

def _check_offsets(model, offsets):
    offsets = np.asarray(offsets)
    if offsets.size and (offsets.min() < 1 or offsets.max() > model.horizon):
        raise ValueError(f"offsets must lie in 1..{model.horizon}")
    return offsets


def logits(model: HazardModel, X, offsets) -> np.ndarray:
    """Unclamped logits for paired rows ``X[i]`` and offsets ``offsets[i]``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    offsets = _check_offsets(model, offsets)
    p = model.params
    if model.architecture == LINEAR:
        return X @ p.block("beta") + p.block("alpha")[offsets - 1]
    pre = X @ p.block("W1").T + p.block("b1") + p.block("E")[offsets - 1]
    return np.tanh(pre) @ p.block("w2") + p.block("alpha")[offsets - 1]


def _sigmoid(z):
    return expit(np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP))


def hazard_grid(model: HazardModel, X, max_offset: int) -> np.ndarray:
    """Hazards for every row of ``X`` and offsets ``1..max_offset``; shape (n, max_offset)."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    if not 0 <= max_offset <= model.horizon:
        raise ValueError(f"max_offset must lie in 0..{model.horizon}")
    p = model.params
    alpha = p.block("alpha")
    # always the full horizon, so a value never depends on max_offset
    if model.architecture == LINEAR:
        z = (X @ p.block("beta"))[:, None] + alpha[None, :]
    else:
        base = X @ p.block("W1").T + p.block("b1")
        pre = base[:, None, :] + p.block("E")[None, :, :]
        z = np.tanh(pre) @ p.block("w2") + alpha[None, :]
    return _sigmoid(z[:, :max_offset])


def hazard(model: HazardModel, x, d: int) -> float:
    if not 1 <= d <= model.horizon:
        raise ValueError(f"offset d={d} outside 1..{model.horizon}")
    # same code path as survival(), so the two telescope exactly
    return float(hazard_grid(model, np.asarray(x)[None, :], d)[0, d - 1])


def survival(model: HazardModel, x, d: int) -> float:
    """``S(d | x) = prod_{j=1..d} (1 - h(j | x))``; ``S(0 | x) = 1``."""
    if not 0 <= d <= model.horizon:
        raise ValueError(f"offset d={d} outside 0..{model.horizon}")
    s = 1.0
    if d:
        for h in hazard_grid(model, np.asarray(x)[None, :], d)[0]:
            s *= 1.0 - h
    return s


def survival_from_hazards(h: np.ndarray) -> np.ndarray:
    """Prepend ``S = 1`` and take running products of ``1 - h`` along the last axis."""
    h = np.asarray(h, dtype=np.float64)
    S = np.ones(h.shape[:-1] + (h.shape[-1] + 1,))
    # sequential products so that S[d] == S[d-1] * (1 - h[d]) holds bit-exactly
    for d in range(h.shape[-1]):
        S[..., d + 1] = S[..., d] * (1.0 - h[..., d])
    return S


def survival_curves(model: HazardModel, X, max_offset: Optional[int] = None) -> np.ndarray:
    """``S(d | x)`` for ``d = 0..max_offset`` (default: the horizon); shape (n, max_offset + 1)."""
    if max_offset is None:
        max_offset = model.horizon
    return survival_from_hazards(hazard_grid(model, X, max_offset))


@dataclass(frozen=True, eq=False)
class HazardMatrix:
    """Per-landmark hazards and survival of one sequence.

    ``h[l, d]`` and ``S[l, d]`` are valid for ``d <= window[l]``; ``h[:, 0]``
    is undefined (NaN) and ``S[:, 0] == 1``.  Entries past a row's window are
    NaN.
    """

    h: np.ndarray
    S: np.ndarray
    window: np.ndarray


def hazard_matrix(model: HazardModel, seq, window) -> HazardMatrix:
    window = np.asarray(window, dtype=np.int64)
    states = seq.states if hasattr(seq, "states") else np.asarray(seq)
    if window.shape != (states.shape[0],):
        raise ValueError("one window entry per landmark is required")
    if window.size and (window.min() < 0 or window.max() > model.horizon):
        raise ValueError(f"windows must lie in 0..{model.horizon}")
    width = int(window.max()) if window.size else 0
    grid = hazard_grid(model, states, width)
    return _matrix_from_grid(grid, window)


def _matrix_from_grid(grid, window):
    t, width = grid.shape[0], int(window.max()) if window.size else 0
    h = np.full((t, width + 1), np.nan)
    h[:, 1:] = grid[:, :width]
    S = survival_from_hazards(h[:, 1:])
    outside = np.arange(width + 1)[None, :] > window[:, None]
    h[outside] = np.nan
    S[outside] = np.nan
    return HazardMatrix(h, S, window)


def hazard_matrices(model: HazardModel, seqs, windows) -> list:
    """:func:`hazard_matrix` for many sequences with one vectorized model call."""
    if not seqs:
        return []
    windows = [np.asarray(w, dtype=np.int64) for w in windows]
    width = max((int(w.max()) for w in windows if w.size), default=0)
    grid = hazard_grid(model, np.concatenate([s.states for s in seqs]), width)
    out, start = [], 0
    for seq, w in zip(seqs, windows):
        stop = start + seq.duration
        out.append(_matrix_from_grid(grid[start:stop, :max(int(w.max()), 0)], w))
        start = stop
    return out


# ---------------------------------------------------------------------------
# loss and gradient

def _gather_pairs(batch):
    """Flatten (sequence, table) pairs into loss terms over offsets d >= 1."""
    states, idx, offs, ys, ws, owner = [], [], [], [], [], []
    base = 0
    for k, (seq, table) in enumerate(batch):
        window = np.asarray(table.window)
        t = seq.duration
        if window.shape != (t,):
            raise ValueError(f"table for sequence {seq.id!r} does not match its duration")
        width = table.ytilde.shape[1]
        d = np.arange(width)[None, :]
        mask = (d >= 1) & (d <= window[:, None])
        ell, dd = np.nonzero(mask)
        states.append(seq.states)
        idx.append(base + ell)
        offs.append(dd)
        ys.append(table.ytilde[ell, dd])
        ws.append(table.wtilde[ell, dd])
        owner.append(np.full(ell.size, k))
        base += t
    cat = np.concatenate
    return cat(states), cat(idx), cat(offs), cat(ys), cat(ws), cat(owner)


def loss_and_grad(model: HazardModel, batch):
    """Weighted soft-label cross-entropy summed over the batch, and its exact gradient.

    Parameters
    ----------
    model : HazardModel
    batch : sequence of (SequenceRecord, TargetTable)
        Loss terms are every ``(l, d)`` with ``1 <= d <= table.window[l]``,
        weighted by ``wtilde[l, d]`` and labelled with ``ytilde[l, d]``.

    Returns
    -------
    loss : float
    grad : ParameterVector
        Same layout as ``model.params``.

    Raises
    ------
    NumericalFailure
        If the loss or the gradient is not finite; ``sequence_id`` names the
        first offending sequence.
    """
    p = model.params
    grad = np.zeros(len(p))
    if not batch:
        return 0.0, p.replace(grad)
    X, idx, d, y, w, owner = _gather_pairs(batch)
    alpha = p.block("alpha")
    sl = p.slices

    if model.architecture == LINEAR:
        z = X[idx] @ p.block("beta") + alpha[d - 1]
    else:
        base = X @ p.block("W1").T + p.block("b1")
        a = np.tanh(base[idx] + p.block("E")[d - 1])
        z = a @ p.block("w2") + alpha[d - 1]

    zc = np.clip(z, -LOGIT_CLAMP, LOGIT_CLAMP)
    terms = w * (np.logaddexp(0.0, zc) - y * zc)
    # clamped logits are locally constant
    gz = w * (expit(zc) - y) * (np.abs(z) < LOGIT_CLAMP)

    bad = ~np.isfinite(terms) | ~np.isfinite(gz)
    if bad.any():
        seq = batch[int(owner[np.argmax(bad)])][0]
        raise NumericalFailure(f"non-finite loss term in sequence {seq.id!r}", seq.id)

    H = model.horizon
    g_alpha = np.bincount(d - 1, weights=gz, minlength=H)
    if model.architecture == LINEAR:
        g_beta = np.bincount(idx, weights=gz, minlength=X.shape[0]) @ X
        grad[sl["beta"][0]] = g_beta
        grad[sl["alpha"][0]] = g_alpha
    else:
        w2 = p.block("w2")
        g_pre = (gz[:, None] * w2[None, :]) * (1.0 - a * a)
        g_base = np.zeros((X.shape[0], g_pre.shape[1]))
        np.add.at(g_base, idx, g_pre)
        g_E = np.zeros((H, g_pre.shape[1]))
        np.add.at(g_E, d - 1, g_pre)
        grad[sl["W1"][0]] = (g_base.T @ X).ravel()
        grad[sl["b1"][0]] = g_base.sum(axis=0)
        grad[sl["E"][0]] = g_E.ravel()
        grad[sl["w2"][0]] = a.T @ gz
        grad[sl["alpha"][0]] = g_alpha

    loss = float(terms.sum())
    if not (np.isfinite(loss) and np.all(np.isfinite(grad))):
        raise NumericalFailure("non-finite loss or gradient", batch[0][0].id)
    return loss, p.replace(grad)


def ema_update(phi: ParameterVector, theta: ParameterVector, tau: float) -> ParameterVector:
    """Target-network moving average ``tau * theta + (1 - tau) * phi``."""
    if phi.layout != theta.layout:
        raise ValueError("parameter layouts differ")
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    mixed = tau * theta.values + (1.0 - tau) * phi.values
    # equal entries are fixed points; the mixed sum may be off by one ulp there
    return phi.replace(np.where(theta.values == phi.values, phi.values, mixed))
