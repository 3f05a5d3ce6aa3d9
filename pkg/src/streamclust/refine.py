"""Offline refinement of weighted cluster centers (batch clusterers)."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from math import ceil, sqrt
from typing import Optional

import numpy as np

from .types import ClusterSnapshot, ConfigError, RefineKind, WeightedCenter


class BatchAlgo(Enum):
    KMEANS = "kmeans"
    DBSCAN = "dbscan"


@dataclass
class RefineConfig:
    kind: RefineKind = RefineKind.NONE
    batch_algo: BatchAlgo = BatchAlgo.KMEANS
    k: Optional[int] = None
    eps: float = 1.0
    min_pts: float = 2.0
    incremental_period: Optional[int] = None

    def __post_init__(self):
        if self.k is not None and self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.batch_algo is BatchAlgo.DBSCAN and self.eps <= 0:
            raise ConfigError("eps must be > 0")

    def resolve_k(self, n_centers: int) -> int:
        if self.k is not None:
            return self.k
        return max(1, ceil(sqrt(n_centers)))


def kmeans_plus_plus(
    points: np.ndarray, weights: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Weighted k-means++ seeding."""
    n = points.shape[0]
    first = int(rng.choice(n, p=weights / weights.sum()))
    centers = [points[first]]
    d2 = _sq_dist_to(points, centers[0])
    for _ in range(1, k):
        probs = weights * d2
        total = probs.sum()
        if total <= 0:
            idx = int(rng.choice(n))
        else:
            idx = int(rng.choice(n, p=probs / total))
        centers.append(points[idx])
        d2 = np.minimum(d2, _sq_dist_to(points, centers[-1]))
    return np.stack(centers)


def _sq_dist_to(points: np.ndarray, c: np.ndarray) -> np.ndarray:
    diff = points - c
    return np.einsum("ij,ij->i", diff, diff)


def weighted_kmeans(
    points: np.ndarray,
    weights: np.ndarray,
    k: int,
    rng: np.random.Generator,
    max_iter: int = 100,
    tol: float = 1e-6,
):
    """Lloyd iterations over weighted points.

    Returns (centers, labels, objective_history) where the objective is
    the weighted sum of squared distances to the assigned center.
    """
    if k > points.shape[0]:
        raise ConfigError("k exceeds the number of points")
    centers = kmeans_plus_plus(points, weights, k, rng)
    history = []
    labels = None
    for _ in range(max_iter):
        d2 = (
            np.einsum("ij,ij->i", points, points)[:, None]
            - 2.0 * points @ centers.T
            + np.einsum("ij,ij->i", centers, centers)[None, :]
        )
        labels = np.argmin(d2, axis=1)
        history.append(float((weights * d2[np.arange(len(points)), labels]).sum()))
        new_centers = centers.copy()
        for j in range(k):
            mask = labels == j
            wsum = weights[mask].sum()
            if wsum > 0:
                new_centers[j] = (weights[mask, None] * points[mask]).sum(axis=0) / wsum
        shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
        centers = new_centers
        if shift < tol:
            break
    return centers, labels, history


def weighted_dbscan(
    points: np.ndarray, weights: np.ndarray, eps: float, min_pts: float
):
    """Density clustering where weights count toward the core threshold.

    Returns labels with -1 for noise. A point is a core point when the
    total weight within eps (itself included) reaches min_pts.
    """
    n = points.shape[0]
    diff = points[:, None, :] - points[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    neighbors = d2 <= eps * eps
    mass = neighbors @ weights
    core = mass >= min_pts
    labels = np.full(n, -1, dtype=int)
    cluster = 0
    for i in range(n):
        if labels[i] != -1 or not core[i]:
            continue
        labels[i] = cluster
        frontier = [i]
        while frontier:
            j = frontier.pop()
            for nb in np.flatnonzero(neighbors[j]):
                if labels[nb] == -1:
                    labels[nb] = cluster
                    if core[nb]:
                        frontier.append(int(nb))
        cluster += 1
    return labels


@dataclass
class RefineResult:
    snapshot: ClusterSnapshot
    skipped: bool = False
    warning: Optional[str] = None


def refine(
    snapshot: ClusterSnapshot, cfg: RefineConfig, rng: np.random.Generator
) -> RefineResult:
    """Re-cluster weighted snapshot centers with the configured batch algo.

    The input snapshot is never modified. When k-means is configured with
    more clusters than centers exist, the input passes through unchanged
    with a warning flag.
    """
    if not snapshot.centers:
        return RefineResult(ClusterSnapshot(), skipped=True)
    points = snapshot.center_matrix()
    weights = snapshot.weight_vector()
    stamps = np.asarray([c.last_update for c in snapshot.centers])
    if cfg.batch_algo is BatchAlgo.KMEANS:
        k = cfg.resolve_k(len(snapshot.centers))
        if k > len(snapshot.centers):
            return RefineResult(
                snapshot, skipped=True, warning="k exceeds center count"
            )
        centers, labels, _ = weighted_kmeans(points, weights, k, rng)
    else:
        labels = weighted_dbscan(points, weights, cfg.eps, cfg.min_pts)
        if (labels >= 0).any():
            uniq = np.unique(labels[labels >= 0])
            centers = np.stack(
                [
                    (weights[labels == j, None] * points[labels == j]).sum(axis=0)
                    / weights[labels == j].sum()
                    for j in uniq
                ]
            )
            remap = {int(j): i for i, j in enumerate(uniq)}
            labels = np.asarray([remap.get(int(l), -1) for l in labels])
        else:
            return RefineResult(ClusterSnapshot(), warning="all centers were noise")
    out = []
    for j in range(centers.shape[0]):
        mask = labels == j
        w = float(weights[mask].sum())
        if w <= 0:
            continue
        out.append(
            WeightedCenter(
                center=centers[j],
                weight=w,
                last_update=float(stamps[mask].max()),
            )
        )
    return RefineResult(ClusterSnapshot(centers=out))
