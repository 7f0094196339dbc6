"""Dataset and temperature-history types shared by every pipeline stage.

A :class:`FeatureMatrix` is a named-column observation matrix (optionally with
a designated target column). A :class:`TemperatureBuffer` is the bounded ring
of per-core temperature readings the allocator computes correlations from.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

DEFAULT_BUFFER_CAPACITY = 10_000


class DataError(ValueError):
    """Raised for malformed or insufficient input data."""


@dataclass(frozen=True)
class FeatureMatrix:
    """Immutable n x d matrix of observations with unique column names.

    Parameters
    ----------
    column_names : sequence of str
        Feature identifiers, in column order.
    values : array_like, shape (n, d)
        Observations. Must be finite.
    target_name : str, optional
        Name of the response column, if one is designated.
    n_dropped : int
        Number of rows rejected during ingestion (bookkeeping only).
    """

    column_names: tuple[str, ...]
    values: np.ndarray
    target_name: str | None = None
    n_dropped: int = 0

    def __post_init__(self):
        names = tuple(str(c) for c in self.column_names)
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim != 2:
            raise DataError(f"expected a 2-D matrix, got {values.ndim}-D")
        n, d = values.shape
        if n < 1 or d < 1:
            raise DataError(f"matrix must have n >= 1 and d >= 1, got {n}x{d}")
        if len(names) != d:
            raise DataError(f"{len(names)} column names for {d} columns")
        if len(set(names)) != d:
            dupes = sorted({c for c in names if names.count(c) > 1})
            raise DataError(f"duplicate column names: {dupes}")
        if not np.all(np.isfinite(values)):
            raise DataError("matrix contains non-finite values")
        if self.target_name is not None and self.target_name not in names:
            raise DataError(f"target column {self.target_name!r} not found")
        values.setflags(write=False)
        object.__setattr__(self, "column_names", names)
        object.__setattr__(self, "values", values)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def feature_names(self) -> tuple[str, ...]:
        """Column names excluding the target."""
        return tuple(c for c in self.column_names if c != self.target_name)

    def index(self, name: str) -> int:
        try:
            return self.column_names.index(name)
        except ValueError:
            raise DataError(f"column {name!r} not found") from None

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index(name)]

    @property
    def X(self) -> np.ndarray:
        """Feature block (all non-target columns), shape (n, p)."""
        idx = [self.index(c) for c in self.feature_names]
        return self.values[:, idx]

    @property
    def y(self) -> np.ndarray:
        if self.target_name is None:
            raise DataError("no target column designated")
        return self.column(self.target_name)

    def with_target(self, name: str | None) -> "FeatureMatrix":
        return FeatureMatrix(self.column_names, self.values, name, self.n_dropped)

    def select(self, names: Sequence[str]) -> "FeatureMatrix":
        """Keep only ``names`` (the target is retained if designated)."""
        names = list(names)
        if self.target_name is not None and self.target_name not in names:
            names.append(self.target_name)
        idx = [self.index(c) for c in names]
        return FeatureMatrix(tuple(names), self.values[:, idx], self.target_name)

    def take(self, rows) -> "FeatureMatrix":
        return FeatureMatrix(self.column_names, self.values[np.asarray(rows)],
                             self.target_name)

    def to_csv(self, path, precision: int = 17) -> None:
        write_csv(path, self.column_names, self.values, precision=precision)


def _format(x: float, precision: int) -> str:
    return f"{x:.{precision}g}"


def write_csv(path, header: Sequence[str], rows, precision: int = 17) -> None:
    """Write a numeric table with a header row; floats use ``%.{precision}g``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_format(float(v), precision) for v in row])


def load_trace(path, target: str | None = None) -> FeatureMatrix:
    """Read a headered CSV into a :class:`FeatureMatrix`.

    Rows with unparsable, missing, or non-finite cells are dropped; the count
    is stored in ``n_dropped``.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"trace file not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty after filtering") from None
        if len(set(header)) != len(header):
            dupes = sorted({c for c in header if header.count(c) > 1})
            raise DataError(f"{path}: duplicate column names: {dupes}")
        rows, dropped = [], 0
        for raw in reader:
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                dropped += 1
                continue
            try:
                row = [float(c) for c in raw]
            except ValueError:
                dropped += 1
                continue
            if not all(math.isfinite(v) for v in row):
                dropped += 1
                continue
            rows.append(row)
    if not rows:
        raise DataError(f"{path}: empty after filtering")
    return FeatureMatrix(tuple(header), np.array(rows), target, dropped)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    if n < 2:
        raise DataError(f"cannot split {n} row(s)")
    perm = np.random.default_rng(spec.seed).permutation(n)
    n_train = int(math.floor(n * spec.train_fraction))
    return perm[:n_train], perm[n_train:]


def split(matrix: FeatureMatrix, spec: SplitSpec) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Shuffle and split rows into (train, test); train gets floor(n * fraction) rows."""
    train, test = split_indices(matrix.n_rows, spec)
    return matrix.take(train), matrix.take(test)


def kfold_indices(n: int, k: int, seed) -> list[np.ndarray]:
    """Seeded shuffled partition of ``range(n)`` into ``k`` folds of near-equal size."""
    if not 2 <= k <= n:
        raise DataError(f"need 2 <= K <= n, got K={k}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    return np.array_split(perm, k)


@dataclass(frozen=True)
class Scaler:
    """Per-column affine standardization; zero-variance columns are left as-is."""

    mean: np.ndarray
    scale: np.ndarray
    zero_variance: np.ndarray

    @classmethod
    def fit(cls, values) -> "Scaler":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        mean = values.mean(axis=0)
        std = values.std(axis=0)
        # relative test so that float noise on a constant column counts as zero
        zero = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
        mean = np.where(zero, 0.0, mean)
        scale = np.where(zero, 1.0, std)
        return cls(mean, scale, zero)

    def transform(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            return (values - self.mean[0]) / self.scale[0]
        return (values - self.mean) / self.scale

    def inverse_transform(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            return values * self.scale[0] + self.mean[0]
        return values * self.scale + self.mean


def standardize(matrix: FeatureMatrix) -> tuple[FeatureMatrix, Scaler]:
    """Standardize every column to mean 0 / unit (population) variance."""
    scaler = Scaler.fit(matrix.values)
    out = FeatureMatrix(matrix.column_names, scaler.transform(matrix.values),
                        matrix.target_name)
    return out, scaler


@dataclass
class TemperatureBuffer:
    """Bounded FIFO of per-core temperature readings (degrees C).

    The oldest sample is evicted once ``capacity`` is reached.
    """

    core_ids: tuple[int, ...]
    capacity: int = DEFAULT_BUFFER_CAPACITY
    _samples: deque = field(init=False, repr=False)

    def __post_init__(self):
        self.core_ids = tuple(int(c) for c in self.core_ids)
        if len(self.core_ids) < 1:
            raise ValueError("buffer needs at least one core")
        if self.capacity < 1:
            raise ValueError("capacity must be positive")
        self._samples = deque(maxlen=self.capacity)

    @classmethod
    def for_cores(cls, m: int, capacity: int = DEFAULT_BUFFER_CAPACITY) -> "TemperatureBuffer":
        return cls(tuple(range(m)), capacity)

    @property
    def m(self) -> int:
        return len(self.core_ids)

    def __len__(self) -> int:
        return len(self._samples)

    def push(self, reading: Iterable[float]) -> "TemperatureBuffer":
        reading = np.array(reading, dtype=float).ravel()
        if reading.shape[0] != self.m:
            raise ValueError(f"reading has {reading.shape[0]} values, buffer has {self.m} cores")
        reading.setflags(write=False)
        self._samples.append(reading)
        return self

    def extend(self, readings) -> "TemperatureBuffer":
        for r in np.asarray(readings, dtype=float):
            self.push(r)
        return self

    def as_array(self, window: int | None = None) -> np.ndarray:
        """Samples as an (n, m) array, oldest first; optionally the last ``window`` only."""
        if not self._samples:
            return np.empty((0, self.m))
        arr = np.vstack(self._samples)
        if window is not None:
            arr = arr[-window:]
        return arr

    def to_csv(self, path) -> None:
        header = ["step"] + [f"core_{c}" for c in self.core_ids]
        rows = (np.concatenate([[k], s]) for k, s in enumerate(self._samples))
        write_csv(path, header, rows)

    @classmethod
    def from_csv(cls, path, capacity: int = DEFAULT_BUFFER_CAPACITY) -> "TemperatureBuffer":
        fm = load_trace(path)
        cores = [c for c in fm.column_names if c.startswith("core_")]
        if not cores:
            raise DataError(f"{path}: no core_<i> columns")
        ids = tuple(int(c.split("_", 1)[1]) for c in cores)
        buf = cls(ids, capacity)
        buf.extend(np.column_stack([fm.column(c) for c in cores]))
        return buf


def push_temperature(buffer: TemperatureBuffer, reading) -> TemperatureBuffer:
    return buffer.push(reading)
