"""Synthetic stream generators and the CSV loader.

Three workload families: one with staged cluster-evolution events of
increasing frequency, one with a staged outlier fraction ending in an
all-outlier half, and one that steps the dimensionality across segments.
All generators are deterministic given (config, seed).
"""

from __future__ import annotations

import csv
import gzip
import io
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .types import ConfigError, StreamPoint

OUTLIER_LABEL = -1


@dataclass
class EvolutionEvent:
    index: int
    kind: str
    components: tuple[int, ...]


@dataclass
class EdsConfig:
    total_points: int = 50_000
    d: int = 2
    n_clusters: int = 5
    seed: int = 0
    mean_box: float = 100.0
    sigma: float = 5.0
    # five stages with strictly increasing event frequency
    stage_lengths: tuple[int, ...] = (10_000,) * 5
    event_periods: tuple[int, ...] = (5000, 2500, 2000, 1250, 1000)

    def __post_init__(self):
        if self.total_points < 1:
            raise ConfigError("total_points must be >= 1")
        if len(self.stage_lengths) != len(self.event_periods):
            raise ConfigError("stage schedule lengths differ")
        if sum(self.stage_lengths) != self.total_points:
            raise ConfigError("stage lengths must sum to total_points")


@dataclass
class OdsConfig:
    total_points: int = 30_000
    d: int = 2
    n_clusters: int = 5
    seed: int = 0
    mean_box: float = 60.0
    sigma: float = 5.0
    outlier_fractions: tuple[float, float, float] = (0.1, 0.3, 1.0)
    stage_bounds: tuple[int, int] = (10_000, 15_000)
    box_inflation: float = 3.0

    def __post_init__(self):
        f1, f2, f3 = self.outlier_fractions
        if not (f1 < f2 < f3):
            raise ConfigError("outlier fractions must be strictly increasing")
        if self.stage_bounds[1] * 2 != self.total_points:
            raise ConfigError("final stage must cover the second half")


@dataclass
class DimConfig:
    dims: tuple[int, ...] = (20, 40, 60, 80, 100)
    points_per_segment: int = 10_000
    n_clusters: int = 50
    seed: int = 0
    sigma: float = 1.0
    mean_box: float = 10.0
    separation: float = 6.0  # minimum pairwise mean distance, in sigmas


@dataclass
class EventLog:
    events: list[EvolutionEvent] = field(default_factory=list)


@dataclass
class Mixture:
    """Live Gaussian components keyed by label id."""

    means: dict[int, np.ndarray]
    sigma: float
    next_label: int

    def live(self) -> list[int]:
        return sorted(self.means)


def _init_mixture(rng, n, d, box, sigma) -> Mixture:
    means = {i: rng.uniform(0.0, box, size=d) for i in range(n)}
    return Mixture(means=means, sigma=sigma, next_label=n)


def _draw(rng, mixture: Mixture) -> tuple[int, np.ndarray]:
    labels = mixture.live()
    label = labels[rng.integers(len(labels))]
    x = rng.normal(mixture.means[label], mixture.sigma)
    return label, x


_EVENTS = ("merge", "split", "appear", "disappear", "drift")


def _apply_event(rng, mixture: Mixture, box: float, index: int) -> EvolutionEvent:
    while True:
        kind = _EVENTS[rng.integers(len(_EVENTS))]
        live = mixture.live()
        if kind in ("merge", "disappear") and len(live) < 2:
            continue
        break
    if kind == "merge":
        a, b = rng.choice(live, size=2, replace=False)
        new = mixture.next_label
        mixture.next_label += 1
        mixture.means[new] = (mixture.means[a] + mixture.means[b]) / 2.0
        del mixture.means[a], mixture.means[b]
        return EvolutionEvent(index, "merge", (int(a), int(b), new))
    if kind == "split":
        a = live[rng.integers(len(live))]
        direction = rng.normal(size=mixture.means[a].shape[0])
        direction /= np.linalg.norm(direction)
        offset = 2.0 * mixture.sigma * direction
        left, right = mixture.next_label, mixture.next_label + 1
        mixture.next_label += 2
        mixture.means[left] = mixture.means[a] + offset
        mixture.means[right] = mixture.means[a] - offset
        del mixture.means[a]
        return EvolutionEvent(index, "split", (int(a), left, right))
    if kind == "appear":
        new = mixture.next_label
        mixture.next_label += 1
        mixture.means[new] = rng.uniform(0.0, box, size=len(next(iter(mixture.means.values()))))
        return EvolutionEvent(index, "appear", (new,))
    if kind == "disappear":
        a = live[rng.integers(len(live))]
        del mixture.means[a]
        return EvolutionEvent(index, "disappear", (int(a),))
    a = live[rng.integers(len(live))]
    direction = rng.normal(size=mixture.means[a].shape[0])
    direction /= np.linalg.norm(direction)
    mixture.means[a] = mixture.means[a] + 3.0 * mixture.sigma * direction
    return EvolutionEvent(index, "drift", (int(a),))


def gen_eds(cfg: EdsConfig, log: Optional[EventLog] = None) -> Iterator[StreamPoint]:
    """Staged stream whose mixture mutates every E_i points in stage i."""
    rng = np.random.default_rng(cfg.seed)
    mixture = _init_mixture(rng, cfg.n_clusters, cfg.d, cfg.mean_box, cfg.sigma)
    index = 0
    for length, period in zip(cfg.stage_lengths, cfg.event_periods):
        stage_start = index
        for local in range(length):
            index = stage_start + local
            if local > 0 and local % period == 0:
                event = _apply_event(rng, mixture, cfg.mean_box, index)
                if log is not None:
                    log.events.append(event)
            label, x = _draw(rng, mixture)
            yield StreamPoint(id=index, values=x, label=label)
        index = stage_start + length


def ods_outlier_box(cfg: OdsConfig) -> tuple[np.ndarray, np.ndarray]:
    """Enclosing box for outliers: the mixture domain inflated about its center.

    The domain box is configuration-defined (mean box padded by 3 sigma),
    so the outlier envelope does not depend on the realized means.
    """
    lo = np.full(cfg.d, -3.0 * cfg.sigma)
    hi = np.full(cfg.d, cfg.mean_box + 3.0 * cfg.sigma)
    center = (lo + hi) / 2.0
    half = (hi - lo) / 2.0 * cfg.box_inflation
    return center - half, center + half


def gen_ods(cfg: OdsConfig) -> Iterator[StreamPoint]:
    """Staged outlier stream; the second half is outliers only."""
    rng = np.random.default_rng(cfg.seed)
    mixture = _init_mixture(rng, cfg.n_clusters, cfg.d, cfg.mean_box, cfg.sigma)
    lo, hi = ods_outlier_box(cfg)
    b1, b2 = cfg.stage_bounds
    f1, f2, f3 = cfg.outlier_fractions
    for i in range(cfg.total_points):
        f = f1 if i < b1 else (f2 if i < b2 else f3)
        if rng.random() < f:
            x = rng.uniform(lo, hi)
            yield StreamPoint(id=i, values=x, label=OUTLIER_LABEL)
        else:
            label, x = _draw(rng, mixture)
            yield StreamPoint(id=i, values=x, label=label)


def _separated_means(rng, n, d, box, min_dist) -> np.ndarray:
    means = rng.uniform(0.0, box, size=(n, d))
    for _ in range(1000):
        diff = means[:, None, :] - means[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        np.fill_diagonal(d2, np.inf)
        i, j = np.unravel_index(np.argmin(d2), d2.shape)
        if d2[i, j] >= min_dist**2:
            return means
        means[i] = rng.uniform(0.0, box, size=d)
    raise ConfigError("could not separate component means; enlarge mean_box")


def gen_dim(cfg: DimConfig) -> Iterator[StreamPoint]:
    """Concatenated fixed-dimension segments with fresh labeled mixtures."""
    rng = np.random.default_rng(cfg.seed)
    index = 0
    for d in cfg.dims:
        means = _separated_means(
            rng, cfg.n_clusters, d, cfg.mean_box, cfg.separation * cfg.sigma
        )
        for _ in range(cfg.points_per_segment):
            label = int(rng.integers(cfg.n_clusters))
            x = rng.normal(means[label], cfg.sigma)
            yield StreamPoint(id=index, values=x, label=label)
            index += 1


def dim_markers(cfg: DimConfig) -> list[int]:
    """Stream offsets at which the dimensionality changes."""
    return [i * cfg.points_per_segment for i in range(1, len(cfg.dims))]


# -- CSV interface ----------------------------------------------------------


def save_csv(points, path, delimiter: str = ",") -> None:
    """Write points as rows of features followed by the label column."""
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wt", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        for p in points:
            row = [format(v, ".17g") for v in p.values]
            row.append("" if p.label is None else str(p.label))
            writer.writerow(row)


def load_csv(
    path,
    label_column: Optional[str | int] = "last",
    delimiter: str = ",",
    has_header: bool = False,
    allow_dim_change: bool = False,
) -> list[StreamPoint]:
    """Read a numeric CSV into stream points, in file order.

    ``label_column`` may be "last", a zero-based column index, or None
    for unlabeled rows. Malformed rows raise with their line number;
    mixed dimensionality raises unless explicitly allowed.
    """
    opener = gzip.open if str(path).endswith(".gz") else open
    points: list[StreamPoint] = []
    expected_dim: Optional[int] = None
    with opener(path, "rt", newline="") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        for lineno, row in enumerate(reader, start=1):
            if has_header and lineno == 1:
                continue
            if not row or all(not c.strip() for c in row):
                continue
            try:
                if label_column is None:
                    feats, label = row, None
                elif label_column == "last":
                    feats, raw = row[:-1], row[-1].strip()
                    label = int(float(raw)) if raw else None
                else:
                    idx = int(label_column)
                    raw = row[idx].strip()
                    label = int(float(raw)) if raw else None
                    feats = row[:idx] + row[idx + 1 :]
                values = np.asarray([float(c) for c in feats])
            except (ValueError, IndexError) as exc:
                raise ConfigError(f"{path}: malformed row at line {lineno}: {exc}")
            if expected_dim is None:
                expected_dim = values.shape[0]
            elif values.shape[0] != expected_dim and not allow_dim_change:
                raise ConfigError(
                    f"{path}: dimension changed at line {lineno} "
                    f"({expected_dim} -> {values.shape[0]}); "
                    "pass --dim-markers to allow"
                )
            points.append(
                StreamPoint(id=len(points), values=values, label=label)
            )
    return points
