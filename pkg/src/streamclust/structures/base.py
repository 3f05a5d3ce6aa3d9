"""Uniform contract shared by the six summarizing structures."""

from __future__ import annotations

import abc
import itertools
from dataclasses import dataclass, replace
from typing import ClassVar, Iterator, Optional

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

# Weights below this are numerical dust left by decay or retraction and
# get garbage-collected rather than reported.
WEIGHT_FLOOR = 1e-12


@dataclass
class StructureParams:
    """Structure-level tuning knobs.

    ``cell_scale`` is the base spatial unit every derived default hangs
    off: grid cell length, CF-tree leaf radius (2x), dependency-tree join
    radius, sketch facility cost.
    """

    cell_scale: float = 1.0
    cft_branching: int = 8
    cft_threshold: Optional[float] = None
    mc_capacity: int = 500
    mc_beta: float = 2.0
    mc_recency: float = 3000.0
    coreset_size: int = 128
    dpt_join_radius: Optional[float] = None
    dpt_dep_cut: Optional[float] = None
    grid_cell_len: Optional[float] = None
    amsk_initial_facility: Optional[float] = None
    k_hint: Optional[int] = None

    def __post_init__(self):
        if self.cell_scale <= 0:
            raise ConfigError("cell_scale must be > 0")
        if self.cft_branching < 2:
            raise ConfigError("cft_branching must be >= 2")
        if self.coreset_size < 1:
            raise ConfigError("coreset_size must be >= 1")
        if self.mc_capacity < 2:
            raise ConfigError("mc_capacity must be >= 2")

    @property
    def leaf_threshold(self) -> float:
        return (
            self.cft_threshold
            if self.cft_threshold is not None
            else 2.0 * self.cell_scale
        )

    @property
    def join_radius(self) -> float:
        return (
            self.dpt_join_radius
            if self.dpt_join_radius is not None
            else self.leaf_threshold
        )

    @property
    def dep_cut(self) -> float:
        return (
            self.dpt_dep_cut if self.dpt_dep_cut is not None else 4.0 * self.join_radius
        )

    @property
    def cell_len(self) -> float:
        return (
            self.grid_cell_len if self.grid_cell_len is not None else self.cell_scale
        )

    @property
    def initial_facility(self) -> float:
        return (
            self.amsk_initial_facility
            if self.amsk_initial_facility is not None
            else self.join_radius**2
        )

    def copy(self) -> "StructureParams":
        return replace(self)


class CenterIndex:
    """Dense matrix of cluster centroids supporting nearest queries.

    Rows are recycled through a free list so cluster removal stays O(1);
    the matrix grows geometrically. Lookup is a vectorized linear scan,
    which is exact (structures trade no accuracy for index structure).
    """

    def __init__(self, d: int, capacity: int = 16):
        self.d = d
        self._m = np.zeros((capacity, d))
        self._alive = np.zeros(capacity, dtype=bool)
        self._free: list[int] = list(range(capacity - 1, -1, -1))
        self.size = 0

    def add(self, center: np.ndarray) -> int:
        if not self._free:
            cap = self._m.shape[0]
            grown = np.zeros((cap * 2, self.d))
            grown[:cap] = self._m
            self._m = grown
            self._alive = np.concatenate(
                [self._alive, np.zeros(cap, dtype=bool)]
            )
            self._free = list(range(cap * 2 - 1, cap - 1, -1))
        row = self._free.pop()
        self._m[row] = center
        self._alive[row] = True
        self.size += 1
        return row

    def update(self, row: int, center: np.ndarray) -> None:
        self._m[row] = center

    def remove(self, row: int) -> None:
        self._alive[row] = False
        self._free.append(row)
        self.size -= 1

    def nearest(self, x: np.ndarray, exclude: Optional[int] = None):
        """Return (row, distance) of the nearest live center, or None."""
        if self.size == 0 or (self.size == 1 and exclude is not None):
            alive = np.flatnonzero(self._alive)
            if exclude is not None:
                alive = alive[alive != exclude]
            if alive.size == 0:
                return None
        diff = self._m - x
        d2 = np.einsum("ij,ij->i", diff, diff)
        d2[~self._alive] = np.inf
        if exclude is not None:
            d2[exclude] = np.inf
        row = int(np.argmin(d2))
        if not np.isfinite(d2[row]):
            return None
        return row, float(np.sqrt(d2[row]))

    def min_distance(self, x: np.ndarray) -> Optional[float]:
        hit = self.nearest(x)
        return None if hit is None else hit[1]


class SummaryStructure(abc.ABC):
    """Online summary of the stream seen so far.

    A structure owns its clusters, assigns stable integer ids, and keeps
    the bookkeeping needed by the window (decay, retraction), the outlier
    layer (enumeration, removal, weighted re-insertion) and migration
    (snapshot extraction).
    """

    kind: ClassVar[StructureKind]
    hierarchical: ClassVar[bool]

    def __init__(self, d: int, params: StructureParams, rng: np.random.Generator,
                 id_gen: Optional[Iterator[int]] = None):
        if d < 1:
            raise ConfigError("dimension must be >= 1")
        self.d = d
        self.params = params
        self.rng = rng
        self._id_gen = id_gen if id_gen is not None else itertools.count()

    def _next_id(self) -> int:
        return next(self._id_gen)

    def _check_dim(self, dim: int) -> None:
        if dim != self.d:
            raise StructureError(f"dimension mismatch: structure d={self.d}, got {dim}")

    @abc.abstractmethod
    def insert(self, p: StreamPoint) -> int:
        """Absorb one point; return the id of the cluster that took it."""

    @abc.abstractmethod
    def insert_feature(self, cf: ClusterFeature) -> int:
        """Absorb a whole cluster summary (buffer promotion, migration)."""

    @abc.abstractmethod
    def retract(self, p: StreamPoint, cluster_id: int) -> bool:
        """Remove one point's contribution (sliding window expiry).

        Returns False when the absorbing cluster no longer exists; the
        caller counts the dropped removal.
        """

    @abc.abstractmethod
    def snapshot(self) -> ClusterSnapshot:
        """All temporal clusters as weighted centers; never mutates."""

    @abc.abstractmethod
    def decay_all(self, now: float, alpha: float, lam: float) -> None:
        """Multiply every cluster weight by 2**(-lam * (now - last_update))."""

    @abc.abstractmethod
    def clusters(self) -> list[tuple[int, float, float]]:
        """(id, weight, last_update) for every live cluster."""

    @abc.abstractmethod
    def remove_cluster(self, cluster_id: int) -> ClusterFeature:
        """Detach a cluster and return its summary for buffering."""

    @abc.abstractmethod
    def clear(self) -> None:
        """Drop all clustering information (landmark reset)."""

    @abc.abstractmethod
    def min_center_distance(self, x: np.ndarray) -> Optional[float]:
        """Distance from x to the nearest cluster center; None when empty."""

    def total_weight(self) -> float:
        return float(sum(w for _, w, _ in self.clusters()))

    @staticmethod
    def decay_factor(dt: float, lam: float) -> float:
        return float(2.0 ** (-lam * dt))


def center_point(c: WeightedCenter, point_id: int = -1) -> StreamPoint:
    """A snapshot center viewed as one weighted stream point."""
    return StreamPoint(
        id=point_id,
        values=c.center,
        weight=c.weight,
        timestamp=c.last_update,
    )
