"""Density-linked cluster cells: each cell points at its nearest denser peer."""

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


class DependencyTreeStructure(SummaryStructure):
    """Cluster cells joined by proximity, linked by density dominance.

    A new point joins the nearest cell when within the join radius,
    otherwise it founds a new cell. Dependency links (cell -> nearest
    strictly denser cell) are recomputed lazily; cutting links longer
    than the dependency cut groups cells into final clusters.
    """

    kind = StructureKind.DP_TREE
    hierarchical = True

    def __init__(self, d, params, rng, id_gen=None):
        super().__init__(d, params, rng, id_gen)
        self._cfs: dict[int, ClusterFeature] = {}
        self._rows: dict[int, int] = {}
        self._row_cid: dict[int, int] = {}
        self._index = CenterIndex(d)
        self._links: dict[int, tuple[Optional[int], float]] = {}
        self._links_dirty = True

    def _new_cell(self, cf: ClusterFeature) -> int:
        cid = self._next_id()
        self._cfs[cid] = cf
        row = self._index.add(cf.centroid())
        self._rows[cid] = row
        self._row_cid[row] = cid
        return cid

    def _drop(self, cid: int) -> ClusterFeature:
        cf = self._cfs.pop(cid)
        row = self._rows.pop(cid)
        del self._row_cid[row]
        self._index.remove(row)
        self._links_dirty = True
        return cf

    def _absorb(self, cf: ClusterFeature) -> int:
        self._links_dirty = True
        hit = self._index.nearest(cf.centroid())
        if hit is not None:
            row, dist = hit
            if dist <= self.params.join_radius:
                cid = self._row_cid[row]
                self._cfs[cid].add(cf)
                self._index.update(row, self._cfs[cid].centroid())
                return cid
        return self._new_cell(cf)

    def insert(self, p: StreamPoint) -> int:
        self._check_dim(p.dim)
        return self._absorb(ClusterFeature.from_point(p))

    def insert_feature(self, cf: ClusterFeature) -> int:
        self._check_dim(cf.dim)
        return self._absorb(cf.copy())

    def retract(self, p: StreamPoint, cluster_id: int) -> bool:
        if cluster_id not in self._cfs:
            return False
        cf = self._cfs[cluster_id]
        cf.subtract(ClusterFeature.from_point(p))
        if cf.n <= WEIGHT_FLOOR:
            self._drop(cluster_id)
        else:
            self._index.update(self._rows[cluster_id], cf.centroid())
        self._links_dirty = True
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
        self._links_dirty = True

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
        self._links = {}
        self._links_dirty = True

    def min_center_distance(self, x: np.ndarray) -> Optional[float]:
        return self._index.min_distance(x)

    # -- dependency structure ---------------------------------------------

    def dependency_links(self) -> dict[int, tuple[Optional[int], float]]:
        """cid -> (nearest strictly denser cid or None, link distance)."""
        if not self._links_dirty:
            return self._links
        cids = list(self._cfs)
        links: dict[int, tuple[Optional[int], float]] = {}
        if cids:
            centers = np.stack([self._cfs[c].centroid() for c in cids])
            density = np.asarray([self._cfs[c].n for c in cids])
            diff = centers[:, None, :] - centers[None, :, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            for i, cid in enumerate(cids):
                denser = density > density[i]
                if not denser.any():
                    links[cid] = (None, np.inf)
                    continue
                cand = np.where(denser, d2[i], np.inf)
                j = int(np.argmin(cand))
                links[cid] = (cids[j], float(np.sqrt(cand[j])))
        self._links = links
        self._links_dirty = False
        return links

    def extract_clusters(self, dep_cut: Optional[float] = None) -> ClusterSnapshot:
        """Cut long dependency links and merge each chain into one cluster."""
        tau = dep_cut if dep_cut is not None else self.params.dep_cut
        if tau <= 0:
            raise StructureError("dependency cut must be > 0")
        links = self.dependency_links()
        root_of: dict[int, int] = {}

        def find_root(cid: int) -> int:
            chain = []
            cur = cid
            while cur not in root_of:
                chain.append(cur)
                target, dist = links[cur]
                if target is None or dist > tau:
                    root_of[cur] = cur
                    break
                cur = target
            root = root_of[cur if cur in root_of else chain[-1]]
            for c in chain:
                root_of[c] = root
            return root

        merged: dict[int, ClusterFeature] = {}
        for cid in self._cfs:
            root = find_root(cid)
            if root in merged:
                merged[root].add(self._cfs[cid])
            else:
                merged[root] = self._cfs[cid].copy()
        centers = [
            WeightedCenter(cf.centroid(), cf.n, cf.last_update)
            for cf in merged.values()
            if cf.n > WEIGHT_FLOOR
        ]
        return ClusterSnapshot(centers=centers)
