"""Facility-location sketch: probabilistic center opening with rebuilds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..types import (
    ClusterFeature,
    ClusterSnapshot,
    ConfigError,
    StreamPoint,
    StructureError,
    StructureKind,
    WeightedCenter,
)
from .base import WEIGHT_FLOOR, CenterIndex, SummaryStructure


@dataclass
class _Facility:
    x: np.ndarray
    w: float
    t: float
    cid: int


class MeyersonSketchStructure(SummaryStructure):
    """Temporally weighted fixed centers with a facility-cost gate.

    A point opens a new center with probability min(1, w * d^2 / f) where
    d is the distance to the nearest center, otherwise it joins that
    center (weight only; centers never move). When the number of centers
    exceeds K * ceil(log2(1 + points_seen)) + K the sketch is torn down
    and rebuilt from its own weighted centers with the facility cost
    doubled.
    """

    kind = StructureKind.AM_SKETCH
    hierarchical = False

    def __init__(self, d, params, rng, id_gen=None):
        super().__init__(d, params, rng, id_gen)
        if params.k_hint is None:
            raise ConfigError("AM sketch requires k_hint")
        self.k = int(params.k_hint)
        self.f = float(params.initial_facility)
        self._facilities: dict[int, _Facility] = {}
        self._rows: dict[int, int] = {}
        self._row_cid: dict[int, int] = {}
        self._index = CenterIndex(d)
        self._seen = 0.0

    @property
    def capacity(self) -> int:
        return self.k * math.ceil(math.log2(1.0 + max(self._seen, 1.0))) + self.k

    def _open(self, x: np.ndarray, w: float, t: float) -> int:
        cid = self._next_id()
        fac = _Facility(x=x.copy(), w=w, t=t, cid=cid)
        self._facilities[cid] = fac
        row = self._index.add(x)
        self._rows[cid] = row
        self._row_cid[row] = cid
        return cid

    def _drop(self, cid: int) -> _Facility:
        fac = self._facilities.pop(cid)
        row = self._rows.pop(cid)
        del self._row_cid[row]
        self._index.remove(row)
        return fac

    def _place(self, x: np.ndarray, w: float, t: float) -> int:
        hit = self._index.nearest(x)
        if hit is None:
            return self._open(x, w, t)
        row, dist = hit
        p_open = min(1.0, w * dist * dist / self.f)
        if self.rng.random() < p_open:
            return self._open(x, w, t)
        cid = self._row_cid[row]
        fac = self._facilities[cid]
        fac.w += w
        fac.t = max(fac.t, t)
        return cid

    def _rebuild(self) -> None:
        while len(self._facilities) > self.capacity:
            self.f *= 2.0
            old = sorted(self._facilities.values(), key=lambda f: f.cid)
            self._facilities.clear()
            self._rows.clear()
            self._row_cid.clear()
            self._index = CenterIndex(self.d)
            for fac in old:
                self._place(fac.x, fac.w, fac.t)

    def insert(self, p: StreamPoint) -> int:
        self._check_dim(p.dim)
        self._seen += p.weight
        cid = self._place(p.values, p.weight, p.timestamp)
        self._rebuild()
        return cid

    def insert_feature(self, cf: ClusterFeature) -> int:
        self._check_dim(cf.dim)
        self._seen += cf.n
        cid = self._place(cf.centroid(), cf.n, cf.last_update)
        self._rebuild()
        return cid

    def retract(self, p: StreamPoint, cluster_id: int) -> bool:
        fac = self._facilities.get(cluster_id)
        if fac is None:
            return False
        fac.w -= p.weight
        if fac.w <= WEIGHT_FLOOR:
            self._drop(cluster_id)
        return True

    def snapshot(self) -> ClusterSnapshot:
        centers = [
            WeightedCenter(fac.x, fac.w, fac.t)
            for fac in self._facilities.values()
            if fac.w > WEIGHT_FLOOR
        ]
        return ClusterSnapshot(centers=centers)

    def decay_all(self, now: float, alpha: float, lam: float) -> None:
        dead = []
        for cid, fac in self._facilities.items():
            fac.w *= self.decay_factor(now - fac.t, lam)
            fac.t = now
            if fac.w <= WEIGHT_FLOOR:
                dead.append(cid)
        for cid in dead:
            self._drop(cid)

    def clusters(self) -> list[tuple[int, float, float]]:
        return [(cid, fac.w, fac.t) for cid, fac in self._facilities.items()]

    def remove_cluster(self, cluster_id: int) -> ClusterFeature:
        if cluster_id not in self._facilities:
            raise StructureError(f"unknown cluster id {cluster_id}")
        fac = self._drop(cluster_id)
        w, x, t = fac.w, fac.x, fac.t
        return ClusterFeature(
            n=w, ls=w * x, ss=w * float(x @ x),
            t_sum=w * t, t_sq=w * t * t, last_update=t,
        )

    def clear(self) -> None:
        self._facilities.clear()
        self._rows.clear()
        self._row_cid.clear()
        self._index = CenterIndex(self.d)
        self.f = float(self.params.initial_facility)

    def min_center_distance(self, x: np.ndarray) -> Optional[float]:
        return self._index.min_distance(x)
