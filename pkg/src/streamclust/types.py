"""Shared domain types for the stream clustering engine.

Everything here is a plain value object: freely copyable, safe to move
between pipeline stages, no hidden shared state.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional

import numpy as np

RADIUS_EPS = 1e-9


class StructureError(ValueError):
    """Structural misuse: dimension mismatch, unknown cluster id, etc."""


class ConfigError(ValueError):
    """Invalid configuration (bad thresholds, missing k_hint, ...)."""


class StructureKind(Enum):
    CFT = "cft"
    CORESET_TREE = "coreset"
    DP_TREE = "dptree"
    MICRO_CLUSTERS = "mcs"
    GRIDS = "grids"
    AM_SKETCH = "amsketch"


class WindowKind(Enum):
    LANDMARK = "landmark"
    SLIDING = "sliding"
    DAMPED = "damped"


class OutlierKind(Enum):
    NONE = "none"
    BASIC = "basic"
    BUFFER = "buffer"
    TIMER = "timer"
    BUFFER_TIMER = "buffertimer"


class RefineKind(Enum):
    NONE = "none"
    ONE_SHOT = "oneshot"
    INCREMENTAL = "incremental"


class Objective(Enum):
    ACCURACY = "accuracy"
    EFFICIENCY = "efficiency"
    BALANCE = "balance"


HIERARCHICAL_KINDS = frozenset(
    {StructureKind.CFT, StructureKind.CORESET_TREE, StructureKind.DP_TREE}
)
BUFFERED_OUTLIER_KINDS = frozenset({OutlierKind.BUFFER, OutlierKind.BUFFER_TIMER})
TIMED_OUTLIER_KINDS = frozenset({OutlierKind.TIMER, OutlierKind.BUFFER_TIMER})


@dataclass
class StreamPoint:
    """One timestamped, optionally labeled tuple of the stream."""

    id: int
    values: np.ndarray
    label: Optional[int] = None
    weight: float = 1.0
    timestamp: Optional[float] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size < 1:
            raise StructureError("point values must be a 1-D vector with d >= 1")
        if self.weight <= 0:
            raise StructureError("point weight must be positive")
        if self.timestamp is None:
            self.timestamp = float(self.id)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass
class ClusterFeature:
    """Additive cluster summary: weight, linear sum, scalar squared sum.

    ``ss`` is the scalar sum of squared norms, which is enough for the
    centroid/radius algebra every structure needs. ``t_sum``/``t_sq``
    summarize update timestamps for recency-aware maintenance.
    """

    n: float
    ls: np.ndarray
    ss: float
    t_sum: float = 0.0
    t_sq: float = 0.0
    last_update: float = 0.0

    def __post_init__(self):
        self.ls = np.asarray(self.ls, dtype=np.float64)

    @classmethod
    def empty(cls, d: int) -> "ClusterFeature":
        return cls(n=0.0, ls=np.zeros(d), ss=0.0)

    @classmethod
    def from_point(cls, p: StreamPoint) -> "ClusterFeature":
        w = p.weight
        return cls(
            n=w,
            ls=w * p.values,
            ss=w * float(p.values @ p.values),
            t_sum=w * p.timestamp,
            t_sq=w * p.timestamp**2,
            last_update=p.timestamp,
        )

    @property
    def dim(self) -> int:
        return self.ls.shape[0]

    def centroid(self) -> np.ndarray:
        if self.n <= 0:
            raise StructureError("centroid undefined for empty cluster feature")
        return self.ls / self.n

    def radius(self) -> float:
        """Root-mean-square deviation of the summarized points.

        Small negative variances from float cancellation are clamped to 0.
        """
        if self.n <= 0:
            return 0.0
        c = self.ls / self.n
        var = self.ss / self.n - float(c @ c)
        if var < 0:
            if var < -RADIUS_EPS * max(1.0, self.ss / self.n):
                raise StructureError(f"negative squared radius {var}")
            var = 0.0
        return float(np.sqrt(var))

    def mean_timestamp(self) -> float:
        return self.t_sum / self.n if self.n > 0 else 0.0

    def merge(self, other: "ClusterFeature") -> "ClusterFeature":
        if self.dim != other.dim:
            raise StructureError(
                f"dimension mismatch: {self.dim} vs {other.dim}"
            )
        return ClusterFeature(
            n=self.n + other.n,
            ls=self.ls + other.ls,
            ss=self.ss + other.ss,
            t_sum=self.t_sum + other.t_sum,
            t_sq=self.t_sq + other.t_sq,
            last_update=max(self.last_update, other.last_update),
        )

    def add(self, other: "ClusterFeature") -> None:
        """In-place merge."""
        if self.dim != other.dim:
            raise StructureError(
                f"dimension mismatch: {self.dim} vs {other.dim}"
            )
        self.n += other.n
        self.ls += other.ls
        self.ss += other.ss
        self.t_sum += other.t_sum
        self.t_sq += other.t_sq
        self.last_update = max(self.last_update, other.last_update)

    def subtract(self, other: "ClusterFeature") -> None:
        """In-place removal of a previously merged contribution."""
        if self.dim != other.dim:
            raise StructureError(
                f"dimension mismatch: {self.dim} vs {other.dim}"
            )
        self.n -= other.n
        self.ls -= other.ls
        self.ss -= other.ss
        self.t_sum -= other.t_sum
        self.t_sq -= other.t_sq

    def insert(self, p: StreamPoint) -> None:
        """Absorb one weighted point (singleton merge)."""
        if self.dim != p.dim:
            raise StructureError(f"dimension mismatch: {self.dim} vs {p.dim}")
        w = p.weight
        self.n += w
        self.ls += w * p.values
        self.ss += w * float(p.values @ p.values)
        self.t_sum += w * p.timestamp
        self.t_sq += w * p.timestamp**2
        self.last_update = max(self.last_update, p.timestamp)

    def scale(self, factor: float) -> None:
        """Multiply every additive field; used by decayed windows."""
        self.n *= factor
        self.ls *= factor
        self.ss *= factor
        self.t_sum *= factor
        self.t_sq *= factor

    def copy(self) -> "ClusterFeature":
        return ClusterFeature(
            n=self.n,
            ls=self.ls.copy(),
            ss=self.ss,
            t_sum=self.t_sum,
            t_sq=self.t_sq,
            last_update=self.last_update,
        )


def cf_merge(a: ClusterFeature, b: ClusterFeature) -> ClusterFeature:
    """Componentwise sum of two cluster features."""
    return a.merge(b)


def cf_insert(cf: ClusterFeature, p: StreamPoint) -> ClusterFeature:
    """New feature equal to ``cf`` plus the singleton feature of ``p``."""
    out = cf.copy()
    out.insert(p)
    return out


@dataclass(frozen=True)
class StreamCharacteristics:
    """The three boolean flags produced by regular detection."""

    high_dimension: bool = False
    frequent_evolution: bool = False
    many_outliers: bool = False

    def as_tuple(self) -> tuple[bool, bool, bool]:
        return (self.high_dimension, self.frequent_evolution, self.many_outliers)


@dataclass
class Thresholds:
    """All tunable thresholds of the engine.

    ``dist_threshold`` is the outlier distance delta. Detection reuses it
    unless ``detect_dist_threshold`` overrides it (the two roles are not
    pinned to a single value by the algorithm definition).
    """

    dim_threshold: int = 30
    dist_threshold: float = 100.0
    detect_dist_threshold: Optional[float] = None
    variance_threshold: float = 1000.0
    queue_capacity: int = 10_000
    density_threshold: float = 4.0
    timer_threshold: float = 3000.0
    check_period: int = 1000
    buffer_capacity: int = 200
    landmark_period: int = 1000
    sliding_size: int = 1000
    decay_alpha: float = 1.0
    decay_lambda: float = 0.001
    incremental_period: Optional[int] = None

    def __post_init__(self):
        if self.queue_capacity < 2:
            raise ConfigError("queue_capacity must be >= 2")
        if self.sliding_size < 1:
            raise ConfigError("sliding_size must be >= 1")
        if self.landmark_period < 1:
            raise ConfigError("landmark_period must be >= 1")
        if self.decay_lambda <= 0:
            raise ConfigError("decay_lambda must be > 0")
        if self.decay_alpha <= 0:
            raise ConfigError("decay_alpha must be > 0")
        if self.dist_threshold <= 0:
            raise ConfigError("dist_threshold must be > 0")
        if self.check_period < 1:
            raise ConfigError("check_period must be >= 1")

    @property
    def detection_distance(self) -> float:
        if self.detect_dist_threshold is not None:
            return self.detect_dist_threshold
        return self.dist_threshold

    @property
    def refine_period(self) -> int:
        return (
            self.incremental_period
            if self.incremental_period is not None
            else self.queue_capacity
        )

    def copy(self) -> "Thresholds":
        return replace(self)


@dataclass
class Configuration:
    """The active 4-tuple of design choices plus thresholds."""

    structure_kind: StructureKind
    window_kind: WindowKind
    outlier_kind: OutlierKind
    refine_kind: RefineKind
    thresholds: Thresholds = field(default_factory=Thresholds)
    k_hint: Optional[int] = None

    def __post_init__(self):
        if self.structure_kind is StructureKind.AM_SKETCH and self.k_hint is None:
            raise ConfigError("AM sketch requires k_hint (predefined cluster count)")

    def kinds(self) -> tuple[StructureKind, WindowKind, OutlierKind, RefineKind]:
        return (
            self.structure_kind,
            self.window_kind,
            self.outlier_kind,
            self.refine_kind,
        )


@dataclass(frozen=True)
class WeightedCenter:
    """One extracted cluster: centroid, total weight, last update time."""

    center: np.ndarray
    weight: float
    last_update: float = 0.0

    def __post_init__(self):
        object.__setattr__(
            self, "center", np.asarray(self.center, dtype=np.float64)
        )
        if self.weight <= 0:
            raise StructureError("snapshot center weight must be positive")

    @property
    def dim(self) -> int:
        return self.center.shape[0]


@dataclass
class ClusterSnapshot:
    """Weighted centers extracted from a structure, with optional outliers."""

    centers: list[WeightedCenter] = field(default_factory=list)
    outliers: Optional[list[WeightedCenter]] = None

    def __bool__(self) -> bool:
        return bool(self.centers)

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def dim(self) -> Optional[int]:
        return self.centers[0].dim if self.centers else None

    def total_weight(self) -> float:
        return float(sum(c.weight for c in self.centers))

    def center_matrix(self) -> np.ndarray:
        if not self.centers:
            return np.empty((0, 0))
        return np.stack([c.center for c in self.centers])

    def weight_vector(self) -> np.ndarray:
        return np.asarray([c.weight for c in self.centers])

    def to_bytes(self) -> bytes:
        """Canonical byte encoding, for exact equality checks."""
        if not self.centers:
            return b""
        order = sorted(
            range(len(self.centers)),
            key=lambda i: self.centers[i].center.tobytes(),
        )
        parts = []
        for i in order:
            c = self.centers[i]
            parts.append(c.center.tobytes())
            parts.append(np.float64(c.weight).tobytes())
        return b"".join(parts)


def min_center_distance(x: np.ndarray, snapshot: ClusterSnapshot) -> Optional[float]:
    """Euclidean distance from ``x`` to the nearest snapshot center."""
    if not snapshot.centers:
        return None
    m = snapshot.center_matrix()
    if m.shape[1] != x.shape[0]:
        raise StructureError(f"dimension mismatch: {m.shape[1]} vs {x.shape[0]}")
    d2 = np.einsum("ij,ij->i", m - x, m - x)
    return float(np.sqrt(d2.min()))


def outlier_distance_test(
    p: StreamPoint, snapshot: ClusterSnapshot, delta: float
) -> bool:
    """True iff ``p`` lies strictly farther than ``delta`` from every center.

    An empty snapshot returns False: the first point founds the first
    cluster rather than being discarded.
    """
    if delta <= 0:
        raise ConfigError("outlier distance threshold must be > 0")
    dist = min_center_distance(p.values, snapshot)
    if dist is None:
        return False
    return dist > delta


def pooled_feature(points: Iterable[StreamPoint]) -> ClusterFeature:
    """Feature of a point set built by repeated insertion (test helper)."""
    pts = list(points)
    if not pts:
        raise StructureError("pooled_feature needs at least one point")
    cf = ClusterFeature.empty(pts[0].dim)
    for p in pts:
        cf.insert(p)
    return cf
