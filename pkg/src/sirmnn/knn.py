"""Deterministic tie-broken k-nearest-neighbor classification.

Neighbors are ranked by (distance, insertion index): on exact distance
ties the training point that appears earlier in the dataset wins. Label
votes break ties toward the smallest label id. Both rules are fixed ahead
of time and independent of the feature map, so two maps that order all
candidate distances identically produce identical predictions.

Search is exact brute force over squared distances; queries are evaluated
in memory-bounded chunks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import LabeledSet, UnlabeledSet, as_point
from .featuremaps import FeatureMap, apply_batch

__all__ = ["KSchedule", "k_of_n", "KnnClassifier", "k_nearest", "predict", "predict_batch"]

_CHUNK_TARGET = 4_000_000  # float64 scratch entries per query chunk


@dataclass(frozen=True)
class KSchedule:
    """Rule mapping a training-set size to a neighbor count.

    rule "log_squared" emits ceil(ln(n)^2); rule "fixed" emits a constant;
    rule "table" looks n up in an explicit {n: k} table (missing n falls
    back to log_squared). All emitted values are clamped to [1, n].
    """

    rule: str = "log_squared"
    k: int | None = None
    table: dict[int, int] | None = None

    def __post_init__(self):
        if self.rule not in ("log_squared", "fixed", "table"):
            raise ValueError(f"unknown schedule rule {self.rule!r}")
        if self.rule == "fixed" and (self.k is None or self.k < 1):
            raise ValueError("fixed schedule needs k >= 1")
        if self.rule == "table" and not self.table:
            raise ValueError("table schedule needs a non-empty table")


def k_of_n(sched: KSchedule, n: int) -> int:
    """Scheduled neighbor count for a training set of size n, clamped to [1, n]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if sched.rule == "fixed":
        raw = sched.k
    elif sched.rule == "table" and n in sched.table:
        raw = int(sched.table[n])
    else:
        raw = math.ceil(math.log(n) ** 2)
    return min(n, max(1, raw))


@dataclass(frozen=True, eq=False)
class KnnClassifier:
    """k-NN predictor bound to (training set, optional feature map, k).

    Prediction is a pure function of the training order, k, the map, and
    the query; instances are immutable and safe to share across threads.
    """

    train: LabeledSet
    k: int
    fmap: FeatureMap | None = None

    def __post_init__(self):
        if len(self.train) == 0:
            raise ValueError("training set must be non-empty")
        if not 1 <= self.k <= len(self.train):
            raise ValueError(f"k must be in [1, {len(self.train)}], got {self.k}")
        if self.fmap is not None and self.fmap.input_dim != self.train.dim:
            raise ValueError("feature map dimension does not match training set")
        # Precompute train images once; reused by every query.
        object.__setattr__(self, "_train_z", _images(self.fmap, self.train.points))

    def predict(self, query) -> int:
        return predict(self, query)

    def predict_batch(self, queries: UnlabeledSet) -> np.ndarray:
        return predict_batch(self, queries)


def _images(fmap: FeatureMap | None, points: np.ndarray) -> np.ndarray:
    return points if fmap is None else apply_batch(fmap, points)


def _neighbor_indices(train_z: np.ndarray, query_z: np.ndarray, k: int) -> np.ndarray:
    """(m, k) neighbor index matrix ranked by (squared distance, index).

    Squared distances are computed by direct coordinate differences (no
    norm-expansion shortcut) so that symmetric inputs tie exactly, and the
    stable sort then resolves those ties toward the earlier index.
    """
    n = train_z.shape[0]
    m = query_z.shape[0]
    out = np.empty((m, k), dtype=np.int64)
    chunk = max(1, _CHUNK_TARGET // max(1, n * train_z.shape[1]))
    for lo in range(0, m, chunk):
        hi = min(m, lo + chunk)
        diff = query_z[lo:hi, None, :] - train_z[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        order = np.argsort(sq, axis=1, kind="stable")
        out[lo:hi] = order[:, :k]
    return out


def k_nearest(train: LabeledSet, query, k: int, fmap: FeatureMap | None = None) -> list[int]:
    """Indices of the k nearest training points to `query`, tie-broken by order."""
    if len(train) == 0:
        raise ValueError("training set must be non-empty")
    if not 1 <= k <= len(train):
        raise ValueError(f"k must be in [1, {len(train)}], got {k}")
    q = as_point(query)
    if fmap is None and q.shape[0] != train.dim:
        raise ValueError("query dimension does not match training set")
    train_z = _images(fmap, train.points)
    query_z = _images(fmap, q.reshape(1, -1))
    return [int(i) for i in _neighbor_indices(train_z, query_z, k)[0]]


def _vote(neighbor_labels: np.ndarray, label_count: int) -> np.ndarray:
    """Plurality vote per row; ties go to the smallest label id."""
    counts = (neighbor_labels[:, :, None] == np.arange(label_count)[None, None, :]).sum(axis=1)
    return counts.argmax(axis=1)


def predict(c: KnnClassifier, query) -> int:
    """Predicted label id for a single query point."""
    q = as_point(query)
    if q.shape[0] != c.train.dim:
        raise ValueError("query dimension does not match training set")
    query_z = _images(c.fmap, q.reshape(1, -1))
    idx = _neighbor_indices(c._train_z, query_z, c.k)
    return int(_vote(c.train.labels[idx], c.train.label_count)[0])


def predict_batch(c: KnnClassifier, queries: UnlabeledSet) -> np.ndarray:
    """Elementwise :func:`predict` over an ordered query set."""
    if queries.dim != c.train.dim:
        raise ValueError("query dimension does not match training set")
    if len(queries) == 0:
        return np.empty(0, dtype=np.int64)
    query_z = _images(c.fmap, queries.points)
    idx = _neighbor_indices(c._train_z, query_z, c.k)
    return _vote(c.train.labels[idx], c.train.label_count).astype(np.int64)
