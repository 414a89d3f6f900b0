"""Longitudinal time-to-event records, JSONL persistence and chunking.

A record stores the observed states ``x_0, ..., x_{t-1}`` of one subject.
The duration ``t`` is implicit (the number of stored states).  An
uncensored record means the event happened at absolute time index ``t - 1``;
the absorbing terminal state itself is never stored.

File layout (UTF-8, LF line endings)::

    {"feature_dim": 2, "horizon": 10}
    {"id": "a", "states": [[0.1, 0.2], [0.3, 0.4]], "censored": false}
    ...
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np


class DatasetError(ValueError):
    """Raised for malformed or inconsistent dataset content."""


@dataclass(frozen=True, eq=False)
class SequenceRecord:
    id: str
    states: np.ndarray
    censored: bool

    def __post_init__(self):
        states = np.array(self.states, dtype=np.float64)
        if states.ndim != 2 or states.shape[0] < 1:
            raise DatasetError(f"record {self.id!r}: states must be a non-empty 2-d array")
        if not np.all(np.isfinite(states)):
            raise DatasetError(f"record {self.id!r}: non-finite state value")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "censored", bool(self.censored))
        object.__setattr__(self, "id", str(self.id))

    @property
    def duration(self) -> int:
        return self.states.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.states.shape[1]

    @property
    def event_time(self) -> int:
        """Absolute index of the event (or of the last observation if censored)."""
        return self.duration - 1

    def __eq__(self, other):
        if not isinstance(other, SequenceRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.censored == other.censored
            and self.states.shape == other.states.shape
            and np.array_equal(self.states, other.states)
        )

    def __repr__(self):
        return (f"SequenceRecord(id={self.id!r}, t={self.duration}, "
                f"dim={self.feature_dim}, censored={self.censored})")


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable collection of records sharing a feature dimension and horizon."""

    records: tuple
    feature_dim: int
    horizon: int

    def __post_init__(self):
        records = tuple(self.records)
        if self.feature_dim < 1 or self.horizon < 1:
            raise DatasetError("feature_dim and horizon must be positive")
        for rec in records:
            if rec.feature_dim != self.feature_dim:
                raise DatasetError(
                    f"record {rec.id!r}: feature dimension {rec.feature_dim} "
                    f"!= dataset dimension {self.feature_dim}")
            if rec.duration > self.horizon:
                raise DatasetError(
                    f"record {rec.id!r}: duration {rec.duration} exceeds horizon {self.horizon}")
        object.__setattr__(self, "records", records)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, idx):
        return self.records[idx]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.feature_dim == other.feature_dim
                and self.horizon == other.horizon
                and self.records == other.records)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.records[i] for i in indices), self.feature_dim, self.horizon)

    @property
    def durations(self) -> np.ndarray:
        return np.array([r.duration for r in self.records], dtype=np.int64)

    @property
    def censored(self) -> np.ndarray:
        return np.array([r.censored for r in self.records], dtype=bool)

    def initial_states(self) -> np.ndarray:
        if not self.records:
            return np.zeros((0, self.feature_dim))
        return np.stack([r.states[0] for r in self.records])


def _parse_record(obj, lineno):
    if not isinstance(obj, dict):
        raise DatasetError(f"line {lineno}: expected a JSON object")
    missing = {"id", "states", "censored"} - obj.keys()
    if missing:
        raise DatasetError(f"line {lineno}: missing field(s) {sorted(missing)}")
    if not isinstance(obj["censored"], bool):
        raise DatasetError(f"line {lineno}: 'censored' must be a boolean")
    states = obj["states"]
    if not isinstance(states, list) or not states or not all(isinstance(s, list) for s in states):
        raise DatasetError(f"line {lineno}: 'states' must be a non-empty list of lists")
    widths = {len(s) for s in states}
    if len(widths) != 1:
        raise DatasetError(f"line {lineno}: ragged state vectors")
    try:
        arr = np.array(states, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise DatasetError(f"line {lineno}: non-numeric state value") from exc
    if not np.all(np.isfinite(arr)):
        raise DatasetError(f"line {lineno}: non-finite state value")
    return SequenceRecord(str(obj["id"]), arr, obj["censored"])


def load_dataset(path) -> Dataset:
    """Read a dataset written by :func:`save_dataset`.

    Errors carry the offending 1-based line number.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetError(f"{path}: missing metadata line")
    try:
        meta = json.loads(lines[0])
        feature_dim = int(meta["feature_dim"])
        horizon = int(meta["horizon"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"line 1: malformed metadata ({exc})") from exc

    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
        rec = _parse_record(obj, lineno)
        if rec.feature_dim != feature_dim:
            raise DatasetError(
                f"line {lineno}: feature dimension {rec.feature_dim} != declared {feature_dim}")
        if rec.duration > horizon:
            raise DatasetError(
                f"line {lineno}: duration {rec.duration} exceeds declared horizon {horizon}")
        records.append(rec)
    return Dataset(tuple(records), feature_dim, horizon)


def save_dataset(ds: Dataset, path) -> None:
    # json emits repr() floats, which round-trip exactly
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"feature_dim": ds.feature_dim, "horizon": ds.horizon}) + "\n")
        for rec in ds.records:
            fh.write(json.dumps({"id": rec.id, "states": rec.states.tolist(),
                                 "censored": rec.censored}) + "\n")


def chunk_sequences(ds: Dataset, chunk_len: int) -> Dataset:
    """Split long records into consecutive chunks of at most ``chunk_len`` states.

    Only the final chunk of an uncensored record keeps the event; every other
    chunk is censored.  Records that already fit are passed through untouched,
    split records get ids ``"<id>:<chunk index>"``.
    """
    if chunk_len < 2:
        raise ValueError("chunk_len must be >= 2")
    out = []
    for rec in ds.records:
        if rec.duration <= chunk_len:
            out.append(rec)
            continue
        n_chunks = math.ceil(rec.duration / chunk_len)
        for c in range(n_chunks):
            part = rec.states[c * chunk_len:(c + 1) * chunk_len]
            last = c == n_chunks - 1
            out.append(SequenceRecord(f"{rec.id}:{c}", part, rec.censored if last else True))
    return Dataset(tuple(out), ds.feature_dim, min(ds.horizon, chunk_len))


@dataclass(frozen=True)
class DatasetStats:
    n: int
    feature_dim: int
    horizon: int
    max_duration: int
    censoring_fraction: Optional[float]


def dataset_stats(ds: Dataset) -> DatasetStats:
    n = len(ds)
    if n == 0:
        return DatasetStats(0, ds.feature_dim, ds.horizon, 0, None)
    n_cens = int(ds.censored.sum())
    return DatasetStats(n, ds.feature_dim, ds.horizon, int(ds.durations.max()), n_cens / n)
