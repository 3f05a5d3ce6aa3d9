"""Outlier mechanisms: distance test, outlier buffer, timer, regular check."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .types import (
    BUFFERED_OUTLIER_KINDS,
    TIMED_OUTLIER_KINDS,
    ClusterFeature,
    OutlierKind,
    StreamPoint,
    Thresholds,
)
from .structures.base import SummaryStructure


@dataclass
class MaintenanceReport:
    """What one regular check did."""

    demoted: list[int] = field(default_factory=list)
    removed: list[int] = field(default_factory=list)
    purged_from_buffer: list[int] = field(default_factory=list)


@dataclass
class OutlierStats:
    buffer_evictions: int = 0
    promotions: int = 0
    demotions: int = 0
    checks: int = 0


class OutlierBuffer:
    """Bounded store of outlier cluster summaries awaiting densification."""

    def __init__(self, capacity: int = 200):
        self.capacity = capacity
        self.clusters: dict[int, ClusterFeature] = {}
        self._next = 0
        self.evictions = 0

    def __len__(self) -> int:
        return len(self.clusters)

    def add(self, cf: ClusterFeature) -> int:
        bid = self._next
        self._next += 1
        self.clusters[bid] = cf
        if len(self.clusters) > self.capacity:
            stale = min(self.clusters, key=lambda b: self.clusters[b].last_update)
            del self.clusters[stale]
            self.evictions += 1
        return bid

    def nearest(self, x: np.ndarray):
        """(buffer id, distance) of the closest buffer cluster, or None."""
        if not self.clusters:
            return None
        bids = list(self.clusters)
        m = np.stack([self.clusters[b].centroid() for b in bids])
        d2 = np.einsum("ij,ij->i", m - x, m - x)
        i = int(np.argmin(d2))
        return bids[i], float(np.sqrt(d2[i]))

    def pop(self, bid: int) -> ClusterFeature:
        return self.clusters.pop(bid)

    def total_weight(self) -> float:
        return float(sum(cf.n for cf in self.clusters.values()))

    def drain(self) -> list[ClusterFeature]:
        out = list(self.clusters.values())
        self.clusters.clear()
        return out

    def clear(self) -> None:
        self.clusters.clear()


def outlier_step(
    mech: OutlierKind,
    p: StreamPoint,
    structure: SummaryStructure,
    buffer: OutlierBuffer,
    thresholds: Thresholds,
    stats: OutlierStats,
) -> bool:
    """Judge one point; buffered mechanisms also track and promote outliers.

    Returns True when the point must not enter the main structure.
    """
    dist = structure.min_center_distance(p.values)
    is_outlier = dist is not None and dist > thresholds.dist_threshold
    if mech in BUFFERED_OUTLIER_KINDS and is_outlier:
        hit = buffer.nearest(p.values)
        if hit is not None and hit[1] <= thresholds.dist_threshold:
            bid = hit[0]
            buffer.clusters[bid].insert(p)
        else:
            bid = buffer.add(ClusterFeature.from_point(p))
        cl = buffer.clusters.get(bid)
        if cl is not None and cl.n >= thresholds.density_threshold:
            structure.insert_feature(buffer.pop(bid))
            stats.promotions += 1
    return is_outlier


def regular_check(
    mech: OutlierKind,
    structure: SummaryStructure,
    buffer: OutlierBuffer,
    thresholds: Thresholds,
    now: float,
    stats: OutlierStats,
) -> MaintenanceReport:
    """Demote or drop sparse inactive clusters; purge a stale buffer."""
    report = MaintenanceReport()
    stats.checks += 1
    use_timer = mech in TIMED_OUTLIER_KINDS
    buffered = mech in BUFFERED_OUTLIER_KINDS
    for cid, weight, last_update in structure.clusters():
        dense = weight >= thresholds.density_threshold
        active = use_timer and (now - last_update <= thresholds.timer_threshold)
        if not dense and not active:
            cf = structure.remove_cluster(cid)
            if buffered:
                buffer.add(cf)
                report.demoted.append(cid)
                stats.demotions += 1
            else:
                report.removed.append(cid)
    if mech is OutlierKind.BUFFER_TIMER:
        stale = [
            bid
            for bid, cf in buffer.clusters.items()
            if now - cf.last_update > thresholds.timer_threshold
        ]
        for bid in stale:
            del buffer.clusters[bid]
            report.purged_from_buffer.append(bid)
    return report
