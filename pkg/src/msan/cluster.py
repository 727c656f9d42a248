"""K-means pseudo-labeling of target-domain features.

K equals the number of task classes; Lloyd iterations start from the source
class centroids, so cluster index k inherits class label k. After
convergence, the fraction q of each cluster closest to its center becomes
the pseudo-labeled anchor set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ShapeError

__all__ = [
    "ClusterState",
    "PseudoLabelSet",
    "source_centroids",
    "kmeans_refine",
    "select_top_fraction",
]


@dataclass
class ClusterState:
    centers: np.ndarray         # [K, d]
    assignments: np.ndarray     # [N] cluster index per target sample
    distances: np.ndarray       # [N] Euclidean distance to assigned center
    iterations_run: int
    inertia_history: list[float] = field(default_factory=list)

    @property
    def inertia(self) -> float:
        return float(np.sum(self.distances ** 2))


@dataclass
class PseudoLabelSet:
    """Selected anchors: (target_index, pseudo_label, distance) triples."""

    entries: list[tuple[int, int, float]]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def indices(self) -> np.ndarray:
        return np.array([e[0] for e in self.entries], dtype=np.int64)

    @property
    def labels(self) -> np.ndarray:
        return np.array([e[1] for e in self.entries], dtype=np.int64)


def source_centroids(source_feats: np.ndarray, source_labels, K: int) -> np.ndarray:
    """Per-class mean of the source features; row k is class k's centroid."""
    x = np.asarray(source_feats, dtype=np.float64)
    y = np.asarray(source_labels, dtype=np.int64).reshape(-1)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ShapeError(f"features {x.shape} vs {y.shape[0]} labels")
    centers = np.empty((K, x.shape[1]))
    for k in range(K):
        members = x[y == k]
        if members.shape[0] == 0:
            raise DataError(f"class {k} has no source samples")
        centers[k] = members.mean(axis=0)
    return centers


def _sq_distances(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # ||x - c||^2 expanded; clipped against tiny negative round-off
    d2 = (
        (x * x).sum(axis=1, keepdims=True)
        - 2.0 * x @ centers.T
        + (centers * centers).sum(axis=1)
    )
    return np.maximum(d2, 0.0)


def kmeans_refine(init_centers: np.ndarray, target_feats: np.ndarray,
                  max_iter: int = 100, tol: float = 1e-6) -> ClusterState:
    """Lloyd iterations from the given centers.

    Stops when the largest center movement drops below ``tol`` or after
    ``max_iter`` iterations. Empty clusters keep their previous center;
    distance ties assign to the lower cluster index. ``inertia_history``
    records the assignment-step inertia of every iteration plus the final
    state, so it has ``iterations_run + 1`` entries.
    """
    centers = np.array(init_centers, dtype=np.float64, copy=True)
    x = np.asarray(target_feats, dtype=np.float64)
    if centers.ndim != 2 or x.ndim != 2 or centers.shape[1] != x.shape[1]:
        raise ShapeError(f"centers {centers.shape} vs features {x.shape}")
    if x.shape[0] == 0:
        raise ValueError("no target samples to cluster")
    if centers.shape[0] < 1:
        raise ValueError("need at least one cluster")

    history: list[float] = []
    iterations = 0
    for _ in range(max_iter):
        d2 = _sq_distances(x, centers)
        assign = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(x.shape[0]), assign].sum()))
        new_centers = centers.copy()
        for k in range(centers.shape[0]):
            members = x[assign == k]
            if members.shape[0] > 0:
                new_centers[k] = members.mean(axis=0)
        moved = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        iterations += 1
        if moved < tol:
            break

    d2 = _sq_distances(x, centers)
    assign = np.argmin(d2, axis=1)
    dist = np.sqrt(d2[np.arange(x.shape[0]), assign])
    history.append(float((dist ** 2).sum()))
    return ClusterState(centers, assign, dist, iterations, history)


def select_top_fraction(state: ClusterState, q: float = 0.10) -> PseudoLabelSet:
    """Per cluster, keep the ceil(q * |cluster|) members nearest the center.

    Distance ties break toward the lower target index (stable sort).
    """
    if not (0.0 < q <= 1.0):
        raise ValueError(f"q must be in (0, 1], got {q}")
    entries: list[tuple[int, int, float]] = []
    for k in range(state.centers.shape[0]):
        members = np.flatnonzero(state.assignments == k)
        if members.size == 0:
            continue
        take = math.ceil(q * members.size)
        order = members[np.argsort(state.distances[members], kind="stable")]
        for idx in order[:take]:
            entries.append((int(idx), k, float(state.distances[idx])))
    return PseudoLabelSet(entries)
