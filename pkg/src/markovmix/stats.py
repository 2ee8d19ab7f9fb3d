"""Sufficient statistics of fully observed paths and their weighted sums.

Per path ``k`` the likelihood needs only the initial-state indicator
``B_i``, the jump counts ``N_ij``, the exit counts ``N_i`` and the
occupation times ``Z_i``. Jumps are counted from the exact event list of
the path; the censored sojourn adds occupation time but no jump.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, InconsistentPath, WeightRowSum

__all__ = [
    "PathStats",
    "DatasetStats",
    "WeightedStats",
    "sufficient_stats",
    "dataset_stats",
    "hard_weights",
    "aggregate",
]

WEIGHT_TOL = 1e-8


@dataclass(frozen=True)
class PathStats:
    B: np.ndarray
    Njump: np.ndarray
    Nexit: np.ndarray
    Z: np.ndarray


def _check_path(path, p):
    pid = path.id
    states = [s for s, _ in path.events] + [path.censored[0]]
    durs = [d for _, d in path.events] + [path.censored[1]]
    if states[0] != path.initial_state:
        raise InconsistentPath(pid, "first sojourn state differs from the initial state")
    for s in states:
        if not 0 <= s < p:
            raise InconsistentPath(pid, f"state {s + 1} outside 1..{p}")
    for a, b in zip(states, states[1:]):
        if a == b:
            raise InconsistentPath(pid, f"consecutive sojourns in the same state {a + 1}")
    for d in durs:
        if not d > 0:
            raise InconsistentPath(pid, f"non-positive duration {d!r}")


def sufficient_stats(path, p):
    """``PathStats`` of one path on a ``p``-state space."""
    _check_path(path, p)
    B = np.zeros(p)
    B[path.initial_state] = 1.0
    Njump = np.zeros((p, p), dtype=np.int64)
    Z = np.zeros(p)
    states = [s for s, _ in path.events] + [path.censored[0]]
    for (s, d), nxt in zip(path.events, states[1:]):
        Njump[s, nxt] += 1
        Z[s] += d
    Z[path.censored[0]] += path.censored[1]
    return PathStats(B, Njump, Njump.sum(axis=1), Z)


@dataclass(frozen=True)
class DatasetStats:
    """Per-path statistics stacked along the first axis.

    ``labels`` holds the 0-based regime of each path, or is ``None`` when
    the dataset is unlabeled.
    """

    B: np.ndarray
    Njump: np.ndarray
    Nexit: np.ndarray
    Z: np.ndarray
    labels: Optional[np.ndarray]
    horizon: float
    fingerprint: Optional[str] = None

    @property
    def n_paths(self):
        return self.B.shape[0]

    @property
    def p(self):
        return self.B.shape[1]

    @property
    def labeled(self):
        return self.labels is not None

    def path(self, k):
        return PathStats(self.B[k], self.Njump[k], self.Nexit[k], self.Z[k])

    def subset(self, index):
        index = np.asarray(index)
        labels = None if self.labels is None else self.labels[index]
        return DatasetStats(self.B[index], self.Njump[index], self.Nexit[index], self.Z[index], labels, self.horizon)


def dataset_stats(paths, p, fingerprint=None):
    """Stack ``sufficient_stats`` over a list of paths.

    Labels are kept only when every path carries one.
    """
    paths = list(paths)
    if not paths:
        raise ValueError("empty dataset")
    per = [sufficient_stats(x, p) for x in paths]
    labels = None
    if all(x.regime is not None for x in paths):
        labels = np.array([x.regime for x in paths], dtype=np.int64)
    horizons = {x.horizon for x in paths}
    horizon = paths[0].horizon if len(horizons) == 1 else float("nan")
    return DatasetStats(
        B=np.stack([s.B for s in per]),
        Njump=np.stack([s.Njump for s in per]),
        Nexit=np.stack([s.Nexit for s in per]),
        Z=np.stack([s.Z for s in per]),
        labels=labels,
        horizon=horizon,
        fingerprint=fingerprint,
    )


def hard_weights(labels, M):
    """One-hot ``(N, M)`` weight matrix from 0-based regime labels."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= M):
        raise DimensionMismatch(f"labels must lie in 1..{M}")
    w = np.zeros((labels.shape[0], M))
    w[np.arange(labels.shape[0]), labels] = 1.0
    return w


@dataclass(frozen=True)
class WeightedStats:
    """Regime-weighted totals ``sum_k w_km X_k`` plus unweighted totals.

    Arrays are indexed ``[m, ...]`` for the weighted fields.
    """

    Njump: np.ndarray
    Nexit: np.ndarray
    Z: np.ndarray
    B: np.ndarray
    B_total: np.ndarray
    Njump_total: np.ndarray
    n_paths: int
    source: str

    @property
    def M(self):
        return self.Z.shape[0]

    @property
    def p(self):
        return self.Z.shape[1]

    @property
    def Nexit_total(self):
        return self.Njump_total.sum(axis=1)

    def __add__(self, other):
        if not isinstance(other, WeightedStats):
            return NotImplemented
        return WeightedStats(
            self.Njump + other.Njump,
            self.Nexit + other.Nexit,
            self.Z + other.Z,
            self.B + other.B,
            self.B_total + other.B_total,
            self.Njump_total + other.Njump_total,
            self.n_paths + other.n_paths,
            self.source if self.source == other.source else "mixed",
        )


def _weighted_sum(w, x):
    """``sum_k w[k, m] x[k, ...]`` with pairwise summation over ``k``."""
    n = x.shape[0]
    flat = x.reshape(n, -1).astype(float)
    prod = w.T[:, None, :] * flat.T[None, :, :]
    return prod.sum(axis=-1).reshape((w.shape[1],) + x.shape[1:])


def _plain_sum(x):
    n = x.shape[0]
    flat = np.ascontiguousarray(x.reshape(n, -1).T.astype(float))
    return flat.sum(axis=-1).reshape(x.shape[1:])


def aggregate(stats, weights=None, M=None):
    """Weighted totals of a dataset.

    Parameters
    ----------
    stats : DatasetStats or sequence of PathStats
    weights : (N, M) array, optional
        Rows must sum to one. Defaults to one-hot rows from the dataset
        labels, in which case ``M`` must be given.
    M : int, optional
        Regime count when ``weights`` is omitted.
    """
    if not isinstance(stats, DatasetStats):
        stats = list(stats)
        stats = DatasetStats(
            np.stack([s.B for s in stats]),
            np.stack([s.Njump for s in stats]),
            np.stack([s.Nexit for s in stats]),
            np.stack([s.Z for s in stats]),
            None,
            float("nan"),
        )
    if weights is None:
        if stats.labels is None or M is None:
            raise ValueError("hard-label aggregation needs a labeled dataset and M")
        weights = hard_weights(stats.labels, M)
        source = "labels"
    else:
        weights = np.asarray(weights, dtype=float)
        source = "posterior"
        if weights.ndim != 2 or weights.shape[0] != stats.n_paths:
            raise DimensionMismatch(f"weights must be ({stats.n_paths}, M), got shape {weights.shape}")
        if np.any(weights < 0):
            raise WeightRowSum(int(np.argwhere(weights < 0)[0, 0]) + 1, float("nan"))
        dev = np.abs(weights.sum(axis=1) - 1.0)
        bad = np.flatnonzero(dev > WEIGHT_TOL)
        if len(bad):
            raise WeightRowSum(int(bad[0]) + 1, float(weights[bad[0]].sum()))
    return WeightedStats(
        Njump=_weighted_sum(weights, stats.Njump),
        Nexit=_weighted_sum(weights, stats.Nexit),
        Z=_weighted_sum(weights, stats.Z),
        B=_weighted_sum(weights, stats.B),
        B_total=_plain_sum(stats.B),
        Njump_total=_plain_sum(stats.Njump),
        n_paths=stats.n_paths,
        source=source,
    )
