"""Flat set of micro-clusters with timestamp-aware maintenance."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..types import (
    ClusterFeature,
    ClusterSnapshot,
    StreamPoint,
    StructureError,
    StructureKind,
    WeightedCenter,
)
from .base import WEIGHT_FLOOR, CenterIndex, SummaryStructure


class MicroClusterStructure(SummaryStructure):
    """Bounded collection of micro-clusters.

    A point is absorbed by the nearest micro-cluster when it falls within
    beta times that cluster's RMS radius; singleton clusters use the
    distance to the nearest other cluster as their boundary. Beyond the
    capacity, the stalest cluster is dropped when its mean timestamp is
    older than the recency horizon, otherwise the two closest clusters
    merge.
    """

    kind = StructureKind.MICRO_CLUSTERS
    hierarchical = False

    def __init__(self, d, params, rng, id_gen=None):
        super().__init__(d, params, rng, id_gen)
        self._cfs: dict[int, ClusterFeature] = {}
        self._rows: dict[int, int] = {}
        self._row_cid: dict[int, int] = {}
        self._index = CenterIndex(d)

    # -- helpers ---------------------------------------------------------

    def _new_cluster(self, cf: ClusterFeature) -> int:
        cid = self._next_id()
        self._cfs[cid] = cf
        row = self._index.add(cf.centroid())
        self._rows[cid] = row
        self._row_cid[row] = cid
        if len(self._cfs) > self.params.mc_capacity:
            self._shrink(now=cf.last_update)
        return cid

    def _drop(self, cid: int) -> ClusterFeature:
        cf = self._cfs.pop(cid)
        row = self._rows.pop(cid)
        del self._row_cid[row]
        self._index.remove(row)
        return cf

    def _boundary(self, cid: int) -> float:
        cf = self._cfs[cid]
        if cf.n > 1.0 + WEIGHT_FLOOR:
            r = cf.radius()
            if r > 0:
                return self.params.mc_beta * r
        hit = self._index.nearest(cf.centroid(), exclude=self._rows[cid])
        return hit[1] if hit is not None else 0.0

    def _shrink(self, now: float) -> None:
        """Enforce the capacity bound: expire the stalest or merge closest."""
        oldest = min(self._cfs, key=lambda c: self._cfs[c].mean_timestamp())
        if now - self._cfs[oldest].mean_timestamp() > self.params.mc_recency:
            self._drop(oldest)
            return
        cids = list(self._cfs)
        m = np.stack([self._cfs[c].centroid() for c in cids])
        d2 = np.sum((m[:, None, :] - m[None, :, :]) ** 2, axis=-1)
        np.fill_diagonal(d2, np.inf)
        i, j = np.unravel_index(np.argmin(d2), d2.shape)
        keep, gone = cids[int(i)], cids[int(j)]
        cf = self._drop(gone)
        self._cfs[keep].add(cf)
        self._index.update(self._rows[keep], self._cfs[keep].centroid())

    # -- contract --------------------------------------------------------

    def insert(self, p: StreamPoint) -> int:
        self._check_dim(p.dim)
        return self._absorb(ClusterFeature.from_point(p))

    def insert_feature(self, cf: ClusterFeature) -> int:
        self._check_dim(cf.dim)
        return self._absorb(cf.copy())

    def _absorb(self, cf: ClusterFeature) -> int:
        hit = self._index.nearest(cf.centroid())
        if hit is not None:
            row, dist = hit
            cid = self._row_cid[row]
            if dist <= self._boundary(cid):
                self._cfs[cid].add(cf)
                self._index.update(row, self._cfs[cid].centroid())
                return cid
        return self._new_cluster(cf)

    def retract(self, p: StreamPoint, cluster_id: int) -> bool:
        if cluster_id not in self._cfs:
            return False
        cf = self._cfs[cluster_id]
        cf.subtract(ClusterFeature.from_point(p))
        if cf.n <= WEIGHT_FLOOR:
            self._drop(cluster_id)
        else:
            self._index.update(self._rows[cluster_id], cf.centroid())
        return True

    def snapshot(self) -> ClusterSnapshot:
        centers = [
            WeightedCenter(cf.centroid(), cf.n, cf.last_update)
            for cf in self._cfs.values()
            if cf.n > WEIGHT_FLOOR
        ]
        return ClusterSnapshot(centers=centers)

    def decay_all(self, now: float, alpha: float, lam: float) -> None:
        dead = []
        for cid, cf in self._cfs.items():
            cf.scale(self.decay_factor(now - cf.last_update, lam))
            cf.last_update = now
            if cf.n <= WEIGHT_FLOOR:
                dead.append(cid)
        for cid in dead:
            self._drop(cid)

    def clusters(self) -> list[tuple[int, float, float]]:
        return [(cid, cf.n, cf.last_update) for cid, cf in self._cfs.items()]

    def remove_cluster(self, cluster_id: int) -> ClusterFeature:
        if cluster_id not in self._cfs:
            raise StructureError(f"unknown cluster id {cluster_id}")
        return self._drop(cluster_id)

    def clear(self) -> None:
        self._cfs.clear()
        self._rows.clear()
        self._row_cid.clear()
        self._index = CenterIndex(self.d)

    def min_center_distance(self, x: np.ndarray) -> Optional[float]:
        return self._index.min_distance(x)
