"""Grid-based summary: fixed cells keyed by floor-divided coordinates."""

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


class GridStructure(SummaryStructure):
    """Uniform grid over the input space.

    Insertion maps a point to the cell indexed by floor(x_i / cell_len)
    per dimension, so no distance computation is involved. A cell keeps a
    full feature summary: its weight is the (possibly decayed) density
    and its centroid is reported in snapshots.
    """

    kind = StructureKind.GRIDS
    hierarchical = False

    def __init__(self, d, params, rng, id_gen=None):
        super().__init__(d, params, rng, id_gen)
        self._cells: dict[tuple[int, ...], int] = {}
        self._cfs: dict[int, ClusterFeature] = {}
        self._coords: dict[int, tuple[int, ...]] = {}
        self._rows: dict[int, int] = {}
        self._index = CenterIndex(d)

    def _cell_of(self, x: np.ndarray) -> tuple[int, ...]:
        return tuple(int(v) for v in np.floor(x / self.params.cell_len))

    def _absorb_at(self, coords: tuple[int, ...], cf: ClusterFeature) -> int:
        cid = self._cells.get(coords)
        if cid is None:
            cid = self._next_id()
            self._cells[coords] = cid
            self._coords[cid] = coords
            self._cfs[cid] = cf.copy()
            self._rows[cid] = self._index.add(cf.centroid())
        else:
            self._cfs[cid].add(cf)
            self._index.update(self._rows[cid], self._cfs[cid].centroid())
        return cid

    def _drop(self, cid: int) -> ClusterFeature:
        cf = self._cfs.pop(cid)
        coords = self._coords.pop(cid)
        del self._cells[coords]
        self._index.remove(self._rows.pop(cid))
        return cf

    def insert(self, p: StreamPoint) -> int:
        self._check_dim(p.dim)
        return self._absorb_at(self._cell_of(p.values), ClusterFeature.from_point(p))

    def insert_feature(self, cf: ClusterFeature) -> int:
        self._check_dim(cf.dim)
        return self._absorb_at(self._cell_of(cf.centroid()), cf)

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
        self._cells.clear()
        self._cfs.clear()
        self._coords.clear()
        self._rows.clear()
        self._index = CenterIndex(self.d)

    def min_center_distance(self, x: np.ndarray) -> Optional[float]:
        return self._index.min_distance(x)

    def cell_items(self) -> list[tuple[tuple[int, ...], float]]:
        """(coords, density) pairs, mainly for tests and inspection."""
        return [(coords, self._cfs[cid].n) for coords, cid in self._cells.items()]
