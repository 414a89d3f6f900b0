"""Mini-batch training with a slow-moving target network.

Per batch the target network ``phi`` scores every sequence, the supervision
tables are built from those scores, the main network ``theta`` takes one
optimizer step on the weighted cross-entropy, and ``phi`` moves towards
``theta`` by the moving average ``phi <- tau*theta + (1-tau)*phi``.

Loss modes:

* ``init_state``: observed labels, landmark 0 only.
* ``landmarking``: observed labels at every landmark.
* ``dtcsr``: pseudo-targets/weights mixing observed labels and target-network
  bootstraps with ``lam``.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import targets as tg
from .hazard_model import (HazardModel, NumericalFailure, ParameterVector, ema_update,
                           hazard_matrices, loss_and_grad)

LOSS_MODES = ("init_state", "landmarking", "dtcsr")
OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class TrainConfig:
    lam: float = 0.0
    tau: float = 0.01
    learning_rate: float = 0.01
    weight_decay: float = 0.0001
    batch_size: int = 128
    epochs: int = 100
    loss_mode: str = "dtcsr"
    table_mode: str = tg.WITHIN_WINDOW
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    record_time: bool = False

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise ValueError(f"loss_mode must be one of {LOSS_MODES}")
        if self.table_mode not in tg.TABLE_MODES:
            raise ValueError(f"table_mode must be one of {tg.TABLE_MODES}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizer must be one of {OPTIMIZERS}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("need learning_rate > 0 and weight_decay >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("need batch_size >= 1 and epochs >= 1")


# ---------------------------------------------------------------------------
# optimizers

@dataclass(frozen=True, eq=False)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)

    def to_dict(self):
        return {"m": self.m.tolist(), "v": self.v.tolist(), "step": self.step}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["m"], dtype=np.float64), np.array(d["v"], dtype=np.float64),
                   int(d["step"]))


def adam_step(params, grad, state: AdamState, lr, betas=(0.9, 0.999), eps=1e-8,
              weight_decay=0.0):
    """One Adam step with decoupled weight decay (applied before the Adam delta)."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or state.m.shape != params.shape:
        raise ValueError("shape mismatch between params, grad and optimizer state")
    b1, b2 = betas
    step = state.step + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1 ** step)
    v_hat = v / (1.0 - b2 ** step)
    out = params - lr * weight_decay * params if weight_decay else params.copy()
    out = out - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out, AdamState(m, v, step)


def sgd_step(params, grad, lr, weight_decay=0.0):
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise ValueError("shape mismatch between params and grad")
    return params - lr * (grad + weight_decay * params)


# ---------------------------------------------------------------------------
# training loop

@dataclass
class EpochRecord:
    epoch: int
    loss: float
    grad_norm: float
    wall_ms: Optional[float] = None
    ci: Optional[float] = None
    ibs: Optional[float] = None


@dataclass
class TrainLog:
    records: list = field(default_factory=list)

    COLUMNS = ("epoch", "loss", "grad_norm", "wall_ms", "ci", "ibs")

    def __len__(self):
        return len(self.records)

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.COLUMNS)
            for rec in self.records:
                row = asdict(rec)
                writer.writerow(["" if row[c] is None else repr(row[c]) if isinstance(row[c], float)
                                 else row[c] for c in self.COLUMNS])

    @classmethod
    def from_csv(cls, path):
        out = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                def val(key, conv=float):
                    return None if row[key] == "" else conv(row[key])
                out.records.append(EpochRecord(int(row["epoch"]), val("loss"), val("grad_norm"),
                                               val("wall_ms"), val("ci"), val("ibs")))
        return out


@dataclass(eq=False)
class TrainState:
    """Everything needed to continue a run: both networks, optimizer state, epoch count."""

    theta: HazardModel
    phi: ParameterVector
    opt_state: Optional[AdamState]
    epoch: int = 0

    def to_dict(self):
        return {"model": self.theta.to_dict(), "target_params": self.phi.to_dict(),
                "optimizer_state": None if self.opt_state is None else self.opt_state.to_dict(),
                "epoch": self.epoch}

    @classmethod
    def from_dict(cls, d):
        opt = d.get("optimizer_state")
        return cls(HazardModel.from_dict(d["model"]), ParameterVector.from_dict(d["target_params"]),
                   None if opt is None else AdamState.from_dict(opt), int(d["epoch"]))


def save_checkpoint(state: TrainState, path, config: Optional[TrainConfig] = None):
    payload = state.to_dict()
    if config is not None:
        payload["train_config"] = asdict(config)
    Path(path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def load_checkpoint(path) -> TrainState:
    return TrainState.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def epoch_order(n, seed, epoch):
    """Shuffled record order for one epoch; depends only on (seed, epoch)."""
    return np.random.Generator(np.random.PCG64([seed, epoch])).permutation(n)


def build_tables(seqs, cfg: TrainConfig, target_model: HazardModel, horizon: int):
    """Supervision tables for a batch, computed before any parameter update."""
    if cfg.loss_mode == "landmarking":
        return [tg.hard_labels(s) for s in seqs]
    if cfg.loss_mode == "init_state":
        return [tg.initial_only(tg.hard_labels(s)) for s in seqs]
    windows = [tg.table_windows(s.duration, cfg.table_mode, horizon) for s in seqs]
    mats = hazard_matrices(target_model, seqs, windows)
    return [tg.pseudo_table(s, m, cfg.lam, cfg.table_mode, horizon) for s, m in zip(seqs, mats)]


def fit(ds, model: HazardModel, cfg: TrainConfig, eval_ds=None, *, state: Optional[TrainState] = None,
        callback=None):
    """Train ``model`` on ``ds``.

    Returns ``(model, log, state)``: the final main network, one
    :class:`EpochRecord` per epoch, and the resumable :class:`TrainState`.
    Passing ``state`` continues a previous run from its epoch count; the
    result equals an uninterrupted run with the same config.
    """
    if len(ds) == 0:
        raise ValueError("cannot fit on an empty dataset")
    if model.feature_dim != ds.feature_dim or model.horizon < ds.horizon:
        raise ValueError("model dimensions do not match the dataset")
    if state is None:
        opt = AdamState.zeros(len(model.params)) if cfg.optimizer == "adam" else None
        state = TrainState(model, model.params, opt, 0)
    theta, phi, opt, start = state.theta, state.phi, state.opt_state, state.epoch
    horizon = ds.horizon if cfg.table_mode == tg.WITHIN_WINDOW else model.horizon
    log = TrainLog()
    records = ds.records
    for epoch in range(start, cfg.epochs):
        t0 = time.perf_counter()
        order = epoch_order(len(records), cfg.seed, epoch)
        total, norms = 0.0, []
        for b, lo in enumerate(range(0, len(order), cfg.batch_size)):
            seqs = [records[i] for i in order[lo:lo + cfg.batch_size]]
            tables = build_tables(seqs, cfg, theta.with_params(phi), horizon)
            try:
                loss, grad = loss_and_grad(theta, list(zip(seqs, tables)))
            except NumericalFailure as exc:
                raise NumericalFailure(f"epoch {epoch}, batch {b}: {exc}", exc.sequence_id) from exc
            total += loss
            norms.append(float(np.linalg.norm(grad.values)))
            if cfg.optimizer == "adam":
                new, opt = adam_step(theta.params.values, grad.values, opt, cfg.learning_rate,
                                     (cfg.beta1, cfg.beta2), cfg.eps, cfg.weight_decay)
            else:
                new = sgd_step(theta.params.values, grad.values, cfg.learning_rate, cfg.weight_decay)
            if not np.all(np.isfinite(new)):
                raise NumericalFailure(f"epoch {epoch}, batch {b}: parameters diverged")
            theta = theta.with_params(new)
            phi = ema_update(phi, theta.params, cfg.tau)
        rec = EpochRecord(epoch, total / len(records), float(np.mean(norms)))
        if cfg.record_time:
            rec.wall_ms = (time.perf_counter() - t0) * 1000.0
        if eval_ds is not None:
            from .metrics import evaluate
            report = evaluate(theta, eval_ds)
            rec.ci, rec.ibs = report.ci, report.ibs
        log.records.append(rec)
        if callback is not None:
            callback(rec)
    return theta, log, TrainState(theta, phi, opt, max(start, cfg.epochs))
