"""Clustering-quality and efficiency metrics."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence


class MetricError(ValueError):
    pass


def purity(assignments: Sequence[tuple[int, int]]) -> float:
    """Fraction of points matching their cluster's majority true label.

    ``assignments`` holds (true_label, cluster_id) pairs. The reserved
    outlier cluster id -1 is scored like any other cluster. Note the
    degenerate upper bound: all-singleton clusterings score 1.0.
    """
    if not assignments:
        raise MetricError("purity is undefined for an empty assignment list")
    per_cluster: dict[int, Counter] = defaultdict(Counter)
    for label, cid in assignments:
        per_cluster[cid][label] += 1
    hits = sum(counts.most_common(1)[0][1] for counts in per_cluster.values())
    return hits / len(assignments)


@dataclass
class PuritySeries:
    """Per-window purity values plus their population-weighted mean."""

    window_size: int
    values: list[float] = field(default_factory=list)
    populations: list[int] = field(default_factory=list)

    @property
    def global_purity(self) -> Optional[float]:
        total = sum(self.populations)
        if total == 0:
            return None
        return (
            sum(v * n for v, n in zip(self.values, self.populations)) / total
        )


def windowed_purity(
    assignments: Sequence[tuple[int, int]], window_size: int
) -> PuritySeries:
    if window_size < 1:
        raise MetricError("window size must be >= 1")
    series = PuritySeries(window_size=window_size)
    for start in range(0, len(assignments), window_size):
        chunk = assignments[start : start + window_size]
        series.values.append(purity(chunk))
        series.populations.append(len(chunk))
    return series


class PurityAccumulator:
    """Streaming builder of a windowed purity series (collector side)."""

    def __init__(self, window_size: int):
        if window_size < 1:
            raise MetricError("window size must be >= 1")
        self.window_size = window_size
        self._count = 0
        self._current: dict[int, Counter] = defaultdict(Counter)
        self._in_window = 0
        self.series = PuritySeries(window_size=window_size)

    def add(self, true_label: int, cluster_id: int) -> None:
        self._current[cluster_id][true_label] += 1
        self._in_window += 1
        self._count += 1
        if self._in_window == self.window_size:
            self._flush()

    def _flush(self) -> None:
        hits = sum(c.most_common(1)[0][1] for c in self._current.values())
        self.series.values.append(hits / self._in_window)
        self.series.populations.append(self._in_window)
        self._current = defaultdict(Counter)
        self._in_window = 0

    def finalize(self) -> PuritySeries:
        if self._in_window:
            self._flush()
        return self.series

    @property
    def count(self) -> int:
        return self._count


def throughput(points: int, consumer_seconds: float) -> float:
    """Points per second of consumer processing time."""
    if consumer_seconds <= 0:
        raise MetricError("elapsed time must be positive")
    return points / consumer_seconds
