"""Pearson correlation filter over core temperatures and the allocators built on it."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .trace import DataError, TemperatureBuffer

DEFAULT_RESERVED = frozenset({0})


class AllocationError(ValueError):
    """Raised when a plan cannot be formed (e.g. too many tasks)."""


def _is_constant(ss: float, mean: float, n: int) -> bool:
    return ss <= n * (1e-12 * max(1.0, abs(mean))) ** 2


def pearson(x, y) -> tuple[float, bool]:
    """Pearson correlation of two equal-length series.

    Returns
    -------
    r : float
        Correlation in [-1, 1]; 0.0 when either series is constant.
    degenerate : bool
        True when either series has zero variance.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    n = x.shape[0]
    if n < 2:
        raise DataError("pearson needs at least 2 observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if _is_constant(sxx, x.mean(), n) or _is_constant(syy, y.mean(), n):
        return 0.0, True
    r = float(dx @ dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0)), False


@dataclass(frozen=True)
class CorrelationMatrix:
    """Symmetric m x m matrix of pairwise Pearson coefficients.

    Rows/columns of constant (degenerate) series are zero, including the
    diagonal entry.
    """

    r: np.ndarray
    n_samples: int
    degenerate: np.ndarray
    core_ids: tuple[int, ...] = ()

    @property
    def m(self) -> int:
        return self.r.shape[0]

    def to_csv(self, path) -> None:
        ids = self.core_ids or tuple(range(self.m))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["core"] + [f"core_{c}" for c in ids])
            for c, row in zip(ids, self.r):
                w.writerow([f"core_{c}"] + [f"{v:.17g}" for v in row])

    def to_long_csv(self, path) -> None:
        ids = self.core_ids or tuple(range(self.m))
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["i", "j", "r"])
            for a, ci in enumerate(ids):
                for b, cj in enumerate(ids):
                    w.writerow([ci, cj, f"{self.r[a, b]:.17g}"])


def correlation_matrix(samples, window: int | None = None, core_ids=None) -> CorrelationMatrix:
    """Pairwise Pearson matrix of the columns of ``samples``.

    ``samples`` is either a :class:`TemperatureBuffer` or an (n, m) array.
    With ``window`` only the most recent ``window`` samples are used.
    """
    if isinstance(samples, TemperatureBuffer):
        core_ids = samples.core_ids
        data = samples.as_array(window)
    else:
        data = np.asarray(samples, dtype=float)
        if window is not None:
            data = data[-window:]
    if data.ndim != 2:
        raise ValueError("samples must be 2-D (n, m)")
    n, m = data.shape
    if n < 2:
        raise DataError(f"insufficient samples for correlation: {n}")
    centered = data - data.mean(axis=0)
    ss = np.einsum("ij,ij->j", centered, centered)
    means = data.mean(axis=0)
    degenerate = np.array([_is_constant(ss[j], means[j], n) for j in range(m)])
    cov = centered.T @ centered
    norm = np.sqrt(np.where(degenerate, 1.0, ss))
    r = cov / np.outer(norm, norm)
    r[degenerate, :] = 0.0
    r[:, degenerate] = 0.0
    r = np.clip((r + r.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(r, np.where(degenerate, 0.0, 1.0))
    ids = tuple(core_ids) if core_ids is not None else tuple(range(m))
    return CorrelationMatrix(r, n, degenerate, ids)


def correlation_scores(corr) -> np.ndarray:
    """Mean absolute correlation of each core with every other core."""
    r = corr.r if isinstance(corr, CorrelationMatrix) else np.asarray(corr, dtype=float)
    m = r.shape[0]
    if m < 2:
        raise DataError("correlation scores need at least 2 cores")
    a = np.abs(r)
    return (a.sum(axis=1) - np.diag(a)) / (m - 1)


def rank_cores(scores, core_ids=None) -> list[int]:
    """Core ids sorted by ascending score, ties going to the lower id."""
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    ids = np.arange(scores.shape[0]) if core_ids is None else np.asarray(core_ids)
    order = np.lexsort((ids, scores))
    return [int(ids[i]) for i in order]


@dataclass(frozen=True)
class AllocationPlan:
    """Cores chosen for T tasks; task ``i`` runs on ``cores[i]``."""

    cores: tuple[int, ...]
    policy: str
    reserved: frozenset = DEFAULT_RESERVED
    scores: tuple[float, ...] | None = None
    ranked: tuple[int, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        cores = tuple(int(c) for c in self.cores)
        if len(set(cores)) != len(cores):
            raise AllocationError(f"duplicate cores in plan: {cores}")
        clash = set(cores) & set(self.reserved)
        if clash:
            raise AllocationError(f"plan uses reserved cores {sorted(clash)}")
        object.__setattr__(self, "cores", cores)
        object.__setattr__(self, "reserved", frozenset(int(c) for c in self.reserved))

    @property
    def n_tasks(self) -> int:
        return len(self.cores)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "cores": list(self.cores),
            "reserved": sorted(self.reserved),
            "scores": None if self.scores is None else [float(s) for s in self.scores],
            "ranked": None if self.ranked is None else list(self.ranked),
        }


def allocate(ranked, n_tasks: int, reserved=DEFAULT_RESERVED, scores=None) -> AllocationPlan:
    """First ``n_tasks`` non-reserved cores of the ascending-score ranking."""
    reserved = frozenset(reserved)
    eligible = [c for c in ranked if c not in reserved]
    if n_tasks < 0 or n_tasks > len(eligible):
        raise AllocationError(f"cannot place {n_tasks} task(s) on {len(eligible)} eligible core(s)")
    return AllocationPlan(tuple(eligible[:n_tasks]), "correlation", reserved,
                          None if scores is None else tuple(float(s) for s in scores),
                          tuple(ranked))


def allocate_random(m: int, n_tasks: int, reserved=DEFAULT_RESERVED, seed=None) -> AllocationPlan:
    """Uniform sample of ``n_tasks`` distinct non-reserved cores."""
    reserved = frozenset(reserved)
    eligible = [c for c in range(m) if c not in reserved]
    if n_tasks < 0 or n_tasks > len(eligible):
        raise AllocationError(f"cannot place {n_tasks} task(s) on {len(eligible)} eligible core(s)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    picked = rng.choice(len(eligible), size=n_tasks, replace=False)
    return AllocationPlan(tuple(eligible[i] for i in picked), "random", reserved)


def correlation_plan(buffer, n_tasks: int, reserved=DEFAULT_RESERVED,
                     window: int | None = None) -> AllocationPlan:
    """Matrix -> scores -> ranking -> prefix allocation, from the buffer's current contents."""
    corr = correlation_matrix(buffer, window)
    scores = correlation_scores(corr)
    ranked = rank_cores(scores, corr.core_ids)
    return allocate(ranked, n_tasks, reserved, scores)


def update_and_reallocate(buffer: TemperatureBuffer, reading, n_tasks: int,
                          reserved=DEFAULT_RESERVED, window: int | None = None) -> AllocationPlan:
    buffer.push(reading)
    return correlation_plan(buffer, n_tasks, reserved, window)
