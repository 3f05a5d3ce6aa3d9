"""Merge-and-reduce coreset maintenance over a raw-point buffer."""

from __future__ import annotations

from dataclasses import dataclass
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


@dataclass
class _Rep:
    """One weighted coreset representative."""

    x: np.ndarray
    w: float
    t: float
    cid: int


def build_coreset(
    points: np.ndarray,
    weights: np.ndarray,
    timestamps: np.ndarray,
    m: int,
    rng: np.random.Generator,
) -> list[tuple[np.ndarray, float, float]]:
    """Reduce a weighted point set to at most ``m`` representatives.

    Grows a binary partition: starting from one group holding everything,
    the group with the largest weighted squared error is split by sampling
    a new representative proportionally to squared distance from the
    current one, until ``m`` groups exist or every group has zero error.
    Each surviving representative carries its group's total weight.
    """
    if m < 1:
        raise StructureError("coreset size must be >= 1")
    n = points.shape[0]
    if n == 0:
        return []

    def sample(idx: np.ndarray, probs: np.ndarray) -> int:
        total = probs.sum()
        if total <= 0:
            return int(idx[0])
        return int(rng.choice(idx, p=probs / total))

    all_idx = np.arange(n)
    rep0 = sample(all_idx, weights.astype(float))
    groups: list[dict] = [_group(points, weights, all_idx, rep0)]
    while len(groups) < m:
        costs = [g["sse"] for g in groups]
        gi = int(np.argmax(costs))
        if groups[gi]["sse"] <= 0:
            break
        g = groups.pop(gi)
        idx = g["idx"]
        probs = weights[idx] * g["d2"]
        new_rep = sample(idx, probs)
        old_rep = g["rep"]
        dx_old = g["d2"]
        diff_new = points[idx] - points[new_rep]
        d2_new = np.einsum("ij,ij->i", diff_new, diff_new)
        to_new = d2_new < dx_old
        to_new[idx == new_rep] = True
        to_new[idx == old_rep] = False
        groups.append(_group(points, weights, idx[~to_new], old_rep))
        groups.append(_group(points, weights, idx[to_new], new_rep))
    out = []
    for g in groups:
        idx = g["idx"]
        out.append(
            (
                points[g["rep"]].copy(),
                float(weights[idx].sum()),
                float(timestamps[idx].max()),
            )
        )
    return out


def _group(points, weights, idx, rep):
    diff = points[idx] - points[rep]
    d2 = np.einsum("ij,ij->i", diff, diff)
    return {
        "idx": idx,
        "rep": rep,
        "d2": d2,
        "sse": float((weights[idx] * d2).sum()),
    }


class CoresetTreeStructure(SummaryStructure):
    """Buffered merge-and-reduce coresets.

    Raw points accumulate in a pending buffer; when full, the buffer is
    reduced to a level-0 coreset, and any two same-level coresets are
    merged and reduced one level up, keeping at most one coreset per
    level. Rebuilds are deferred until the buffer fills (lazy updates).
    """

    kind = StructureKind.CORESET_TREE
    hierarchical = True

    def __init__(self, d, params, rng, id_gen=None):
        super().__init__(d, params, rng, id_gen)
        self._pending: list[tuple[np.ndarray, float, float, int, int]] = []
        self._buckets: dict[int, list[_Rep]] = {}
        self._index = CenterIndex(d)
        self._rows: dict[int, int] = {}
        self._row_cid: dict[int, int] = {}

    # -- index upkeep ------------------------------------------------------

    def _register(self, cid: int, x: np.ndarray) -> None:
        row = self._index.add(x)
        self._rows[cid] = row
        self._row_cid[row] = cid

    def _unregister(self, cid: int) -> None:
        row = self._rows.pop(cid)
        del self._row_cid[row]
        self._index.remove(row)

    # -- compaction ---------------------------------------------------------

    def flush(self) -> None:
        """Force the pending buffer into the coreset levels."""
        if not self._pending:
            return
        pts = np.stack([e[0] for e in self._pending])
        ws = np.asarray([e[1] for e in self._pending])
        ts = np.asarray([e[2] for e in self._pending])
        for _, _, _, _, cid in self._pending:
            self._unregister(cid)
        self._pending.clear()
        reps = build_coreset(pts, ws, ts, self.params.coreset_size, self.rng)
        self._place_bucket(0, reps)

    def _place_bucket(self, level: int, reps: list[tuple[np.ndarray, float, float]]):
        while level in self._buckets:
            other = self._buckets.pop(level)
            for r in other:
                self._unregister(r.cid)
            pts = np.stack([r[0] for r in reps] + [r.x for r in other])
            ws = np.concatenate(
                [np.asarray([r[1] for r in reps]), np.asarray([r.w for r in other])]
            )
            ts = np.concatenate(
                [np.asarray([r[2] for r in reps]), np.asarray([r.t for r in other])]
            )
            reps = build_coreset(pts, ws, ts, self.params.coreset_size, self.rng)
            level += 1
        bucket = []
        for x, w, t in reps:
            cid = self._next_id()
            bucket.append(_Rep(x=x, w=w, t=t, cid=cid))
            self._register(cid, x)
        self._buckets[level] = bucket

    # -- contract ------------------------------------------------------------

    def insert(self, p: StreamPoint) -> int:
        self._check_dim(p.dim)
        hit = self._index.nearest(p.values)
        assigned = self._row_cid[hit[0]] if hit is not None else None
        pid = self._next_id()
        self._pending.append((p.values.copy(), p.weight, p.timestamp, p.id, pid))
        self._register(pid, p.values)
        if len(self._pending) >= self.params.coreset_size:
            self.flush()
        return assigned if assigned is not None else pid

    def insert_feature(self, cf: ClusterFeature) -> int:
        self._check_dim(cf.dim)
        pid = self._next_id()
        self._pending.append(
            (cf.centroid().copy(), cf.n, cf.last_update, -1, pid)
        )
        self._register(pid, cf.centroid())
        if len(self._pending) >= self.params.coreset_size:
            self.flush()
        return pid

    def retract(self, p: StreamPoint, cluster_id: int) -> bool:
        for i, (_, _, _, point_id, pid) in enumerate(self._pending):
            if point_id == p.id:
                self._unregister(pid)
                del self._pending[i]
                return True
        rep = self._find_rep(cluster_id)
        if rep is None:
            return False
        rep.w -= p.weight
        if rep.w <= WEIGHT_FLOOR:
            self._remove_rep(cluster_id)
        return True

    def _find_rep(self, cid: int) -> Optional[_Rep]:
        for bucket in self._buckets.values():
            for rep in bucket:
                if rep.cid == cid:
                    return rep
        return None

    def _remove_rep(self, cid: int) -> Optional[_Rep]:
        for level, bucket in self._buckets.items():
            for i, rep in enumerate(bucket):
                if rep.cid == cid:
                    del bucket[i]
                    self._unregister(cid)
                    if not bucket:
                        del self._buckets[level]
                    return rep
        return None

    def snapshot(self) -> ClusterSnapshot:
        centers = [
            WeightedCenter(rep.x, rep.w, rep.t)
            for bucket in self._buckets.values()
            for rep in bucket
            if rep.w > WEIGHT_FLOOR
        ]
        centers.extend(
            WeightedCenter(x, w, t) for x, w, t, _, _ in self._pending
        )
        return ClusterSnapshot(centers=centers)

    def decay_all(self, now: float, alpha: float, lam: float) -> None:
        # raw buffered points keep unit weight; only coreset weights decay
        dead = []
        for bucket in self._buckets.values():
            for rep in bucket:
                rep.w *= self.decay_factor(now - rep.t, lam)
                rep.t = now
                if rep.w <= WEIGHT_FLOOR:
                    dead.append(rep.cid)
        for cid in dead:
            self._remove_rep(cid)

    def clusters(self) -> list[tuple[int, float, float]]:
        out = [
            (rep.cid, rep.w, rep.t)
            for bucket in self._buckets.values()
            for rep in bucket
        ]
        out.extend((pid, w, t) for _, w, t, _, pid in self._pending)
        return out

    def remove_cluster(self, cluster_id: int) -> ClusterFeature:
        for i, (x, w, t, _, pid) in enumerate(self._pending):
            if pid == cluster_id:
                del self._pending[i]
                self._unregister(pid)
                return _as_feature(x, w, t)
        rep = self._remove_rep(cluster_id)
        if rep is None:
            raise StructureError(f"unknown cluster id {cluster_id}")
        return _as_feature(rep.x, rep.w, rep.t)

    def clear(self) -> None:
        self._pending.clear()
        self._buckets.clear()
        self._rows.clear()
        self._row_cid.clear()
        self._index = CenterIndex(self.d)

    def min_center_distance(self, x: np.ndarray) -> Optional[float]:
        return self._index.min_distance(x)


def _as_feature(x: np.ndarray, w: float, t: float) -> ClusterFeature:
    return ClusterFeature(
        n=w,
        ls=w * x,
        ss=w * float(x @ x),
        t_sum=w * t,
        t_sq=w * t * t,
        last_update=t,
    )
