"""Height-balanced tree of additive cluster features."""

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
from .base import WEIGHT_FLOOR, SummaryStructure


class _Entry:
    """One slot in a node: a feature plus either a child or a cluster id."""

    __slots__ = ("cf", "child", "cid", "node")

    def __init__(self, cf: ClusterFeature, child: Optional["_Node"] = None,
                 cid: Optional[int] = None):
        self.cf = cf
        self.child = child
        self.cid = cid
        self.node: Optional[_Node] = None
        if child is not None:
            child.parent_entry = self


class _Node:
    __slots__ = ("entries", "is_leaf", "parent_entry")

    def __init__(self, is_leaf: bool):
        self.entries: list[_Entry] = []
        self.is_leaf = is_leaf
        self.parent_entry: Optional[_Entry] = None

    def attach(self, entry: _Entry) -> None:
        entry.node = self
        self.entries.append(entry)


class CfTreeStructure(SummaryStructure):
    """Hierarchy of cluster features with bounded fan-out.

    Insertion descends from the root to the leaf whose nearest feature
    can absorb the point without its radius exceeding the leaf threshold;
    otherwise a new leaf feature is added, splitting overflowing nodes
    around their two farthest features. Every internal feature stays the
    exact sum of its children, so aggregate statistics are maintained
    incrementally on every path update.
    """

    kind = StructureKind.CFT
    hierarchical = True

    def __init__(self, d, params, rng, id_gen=None):
        super().__init__(d, params, rng, id_gen)
        self._root: Optional[_Node] = None
        self._registry: dict[int, _Entry] = {}
        self._matrix_dirty = True
        self._matrix = None
        self._matrix_cids: list[int] = []

    # -- internal --------------------------------------------------------

    def _touch(self) -> None:
        self._matrix_dirty = True

    def _leaf_matrix(self):
        if self._matrix_dirty:
            self._matrix_cids = [
                cid for cid, e in self._registry.items() if e.cf.n > WEIGHT_FLOOR
            ]
            if self._matrix_cids:
                self._matrix = np.stack(
                    [self._registry[c].cf.centroid() for c in self._matrix_cids]
                )
            else:
                self._matrix = None
            self._matrix_dirty = False
        return self._matrix

    def _ancestor_entries(self, node: _Node):
        e = node.parent_entry
        while e is not None:
            yield e
            e = e.node.parent_entry if e.node is not None else None

    def _descend(self, c: np.ndarray) -> _Node:
        node = self._root
        while not node.is_leaf:
            best, best_d2 = None, np.inf
            for e in node.entries:
                diff = e.cf.centroid() - c
                d2 = float(diff @ diff)
                if d2 < best_d2:
                    best, best_d2 = e, d2
            node = best.child
        return node

    def _split(self, node: _Node) -> None:
        entries = node.entries
        cents = np.stack([e.cf.centroid() for e in entries])
        d2 = np.sum((cents[:, None, :] - cents[None, :, :]) ** 2, axis=-1)
        i, j = np.unravel_index(np.argmax(d2), d2.shape)
        left = _Node(node.is_leaf)
        right = _Node(node.is_leaf)
        for k, e in enumerate(entries):
            if d2[k, i] <= d2[k, j]:
                left.attach(e)
            else:
                right.attach(e)
            if e.child is not None:
                e.child.parent_entry = e
        if not right.entries:
            # coincident centroids: farthest pair cannot separate, halve instead
            half = len(left.entries) // 2
            movers = left.entries[half:]
            left.entries = left.entries[:half]
            for e in movers:
                right.attach(e)
        lcf = _merge_all(left.entries)
        rcf = _merge_all(right.entries)
        le = _Entry(lcf, child=left)
        re = _Entry(rcf, child=right)
        parent_entry = node.parent_entry
        if parent_entry is None:
            new_root = _Node(is_leaf=False)
            new_root.attach(le)
            new_root.attach(re)
            self._root = new_root
        else:
            parent = parent_entry.node
            parent.entries.remove(parent_entry)
            parent.attach(le)
            parent.attach(re)
            if len(parent.entries) > self.params.cft_branching:
                self._split(parent)

    def _add_to_path(self, leaf: _Node, cf: ClusterFeature) -> None:
        for e in self._ancestor_entries(leaf):
            e.cf.add(cf)

    def _subtract_from_path(self, leaf: _Node, cf: ClusterFeature) -> None:
        for e in self._ancestor_entries(leaf):
            e.cf.subtract(cf)

    def _remove_entry(self, entry: _Entry) -> None:
        node = entry.node
        self._subtract_from_path(node, entry.cf)
        node.entries.remove(entry)
        del self._registry[entry.cid]
        self._prune(node)
        self._touch()

    def _prune(self, node: _Node) -> None:
        while node is not None and not node.entries:
            pe = node.parent_entry
            if pe is None:
                self._root = None
                return
            parent = pe.node
            parent.entries.remove(pe)
            node = parent
        # collapse a root that has a single child
        while (
            self._root is not None
            and not self._root.is_leaf
            and len(self._root.entries) == 1
        ):
            child = self._root.entries[0].child
            child.parent_entry = None
            self._root = child

    def _absorb(self, cf: ClusterFeature) -> int:
        self._touch()
        if self._root is None:
            self._root = _Node(is_leaf=True)
            cid = self._next_id()
            entry = _Entry(cf, cid=cid)
            self._root.attach(entry)
            self._registry[cid] = entry
            return cid
        c = cf.centroid()
        leaf = self._descend(c)
        best, best_d2 = None, np.inf
        for e in leaf.entries:
            diff = e.cf.centroid() - c
            d2 = float(diff @ diff)
            if d2 < best_d2:
                best, best_d2 = e, d2
        if best is not None:
            merged = best.cf.merge(cf)
            if merged.radius() <= self.params.leaf_threshold:
                best.cf = merged
                self._add_to_path(leaf, cf)
                return best.cid
        cid = self._next_id()
        entry = _Entry(cf, cid=cid)
        leaf.attach(entry)
        self._registry[cid] = entry
        self._add_to_path(leaf, cf)
        if len(leaf.entries) > self.params.cft_branching:
            self._split(leaf)
        return cid

    # -- contract --------------------------------------------------------

    def insert(self, p: StreamPoint) -> int:
        self._check_dim(p.dim)
        return self._absorb(ClusterFeature.from_point(p))

    def insert_feature(self, cf: ClusterFeature) -> int:
        self._check_dim(cf.dim)
        return self._absorb(cf.copy())

    def retract(self, p: StreamPoint, cluster_id: int) -> bool:
        entry = self._registry.get(cluster_id)
        if entry is None:
            return False
        one = ClusterFeature.from_point(p)
        entry.cf.subtract(one)
        self._subtract_from_path(entry.node, one)
        if entry.cf.n <= WEIGHT_FLOOR:
            node = entry.node
            self._subtract_from_path(node, entry.cf)
            node.entries.remove(entry)
            del self._registry[cluster_id]
            self._prune(node)
        self._touch()
        return True

    def snapshot(self) -> ClusterSnapshot:
        centers = [
            WeightedCenter(e.cf.centroid(), e.cf.n, e.cf.last_update)
            for e in self._registry.values()
            if e.cf.n > WEIGHT_FLOOR
        ]
        return ClusterSnapshot(centers=centers)

    def decay_all(self, now: float, alpha: float, lam: float) -> None:
        if self._root is None:
            return

        def walk(node: _Node):
            for e in node.entries:
                if node.is_leaf:
                    e.cf.scale(self.decay_factor(now - e.cf.last_update, lam))
                    e.cf.last_update = now
                else:
                    walk(e.child)
            if not node.is_leaf:
                for e in node.entries:
                    e.cf = _merge_all(e.child.entries)
                    e.child.parent_entry = e

        walk(self._root)
        for cid in [c for c, e in self._registry.items() if e.cf.n <= WEIGHT_FLOOR]:
            self._remove_entry(self._registry[cid])
        self._touch()

    def clusters(self) -> list[tuple[int, float, float]]:
        return [
            (cid, e.cf.n, e.cf.last_update) for cid, e in self._registry.items()
        ]

    def remove_cluster(self, cluster_id: int) -> ClusterFeature:
        entry = self._registry.get(cluster_id)
        if entry is None:
            raise StructureError(f"unknown cluster id {cluster_id}")
        cf = entry.cf.copy()
        self._remove_entry(entry)
        return cf

    def clear(self) -> None:
        self._root = None
        self._registry.clear()
        self._touch()

    def min_center_distance(self, x: np.ndarray) -> Optional[float]:
        m = self._leaf_matrix()
        if m is None:
            return None
        diff = m - x
        return float(np.sqrt(np.einsum("ij,ij->i", diff, diff).min()))

    # -- introspection ----------------------------------------------------

    def check_consistency(self, rel_tol: float = 1e-9) -> bool:
        """Every internal feature equals the merge of its child's entries."""
        if self._root is None:
            return True

        def walk(node: _Node) -> bool:
            if node.is_leaf:
                return True
            for e in node.entries:
                agg = _merge_all(e.child.entries)
                scale = max(1.0, abs(e.cf.n), float(np.abs(e.cf.ls).max()), abs(e.cf.ss))
                if abs(agg.n - e.cf.n) > rel_tol * scale:
                    return False
                if np.abs(agg.ls - e.cf.ls).max() > rel_tol * scale:
                    return False
                if abs(agg.ss - e.cf.ss) > rel_tol * scale:
                    return False
                if not walk(e.child):
                    return False
            return True

        return walk(self._root)

    def ancestor_weights(self, cluster_id: int) -> list[float]:
        entry = self._registry.get(cluster_id)
        if entry is None:
            raise StructureError(f"unknown cluster id {cluster_id}")
        return [e.cf.n for e in self._ancestor_entries(entry.node)]


def _merge_all(entries: list[_Entry]) -> ClusterFeature:
    cf = entries[0].cf.copy()
    for e in entries[1:]:
        cf.add(e.cf)
    return cf
