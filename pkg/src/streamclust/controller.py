"""Self-optimizing core: characteristic detection, choice selection,
structure migration, and the per-point execution flow tying them together."""

from __future__ import annotations

import itertools
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .outliers import OutlierBuffer, OutlierStats, outlier_step, regular_check
from .refine import RefineConfig, refine
from .structures import init_from_snapshot, make_structure
from .structures.base import StructureParams, SummaryStructure
from .types import (
    BUFFERED_OUTLIER_KINDS,
    ClusterSnapshot,
    ConfigError,
    Configuration,
    Objective,
    OutlierKind,
    RefineKind,
    StreamCharacteristics,
    StreamPoint,
    StructureKind,
    Thresholds,
    WindowKind,
)
from .windows import WindowState, note_insert, window_step

HISTORY_CAP = 32

Kinds = tuple[StructureKind, WindowKind, OutlierKind, RefineKind]
Sink = Callable[[ClusterSnapshot], None]


@dataclass
class ReconfigRecord:
    """One detection event: stream offset, flags, kinds before and after."""

    offset: int
    characteristics: StreamCharacteristics
    old: Kinds
    new: Kinds

    @property
    def changed(self) -> bool:
        return self.old != self.new


def detect(
    points: list[StreamPoint],
    centers_history: list[np.ndarray],
    thresholds: Thresholds,
) -> tuple[StreamCharacteristics, np.ndarray]:
    """Derive the three stream flags from one full detection queue.

    Returns the flags plus the queue mean, which the caller appends to
    the center history. Points whose dimension differs from the queue's
    modal dimension still count toward the dimensionality vote but are
    excluded from the variance and outlier statistics.
    """
    if not points:
        raise ConfigError("detection requires a non-empty queue")
    n = len(points)
    high_dim = sum(1 for p in points if p.dim > thresholds.dim_threshold)

    modal_dim = Counter(p.dim for p in points).most_common(1)[0][0]
    xs = np.stack([p.values for p in points if p.dim == modal_dim])
    k = xs.shape[0]

    # Welford accumulation of the total variance around the running mean
    mean = np.zeros(modal_dim)
    m2 = 0.0
    for i in range(k):
        delta = xs[i] - mean
        mean += delta / (i + 1)
        m2 += float(delta @ (xs[i] - mean))
    variance = m2 / k

    num_outliers = 0
    history = [c for c in centers_history if c.shape[0] == modal_dim]
    if history:
        h = np.stack(history)
        d2 = (
            np.einsum("ij,ij->i", xs, xs)[:, None]
            - 2.0 * xs @ h.T
            + np.einsum("ij,ij->i", h, h)[None, :]
        )
        min_d = np.sqrt(np.maximum(d2.min(axis=1), 0.0))
        num_outliers = int((min_d > thresholds.detection_distance).sum())

    flags = StreamCharacteristics(
        high_dimension=high_dim > n / 2,
        frequent_evolution=variance > thresholds.variance_threshold,
        many_outliers=num_outliers > n / 2,
    )
    return flags, mean


def select(objective: Objective, ch: StreamCharacteristics) -> Kinds:
    """The exact decision table mapping objective and flags to the four kinds."""
    if objective is Objective.ACCURACY:
        struc = (
            StructureKind.MICRO_CLUSTERS
            if ch.frequent_evolution
            else StructureKind.CFT
        )
        if ch.many_outliers:
            win = WindowKind.LANDMARK
            out = OutlierKind.BUFFER_TIMER
        else:
            win = WindowKind.DAMPED
            out = (
                OutlierKind.BUFFER
                if ch.high_dimension
                else OutlierKind.BUFFER_TIMER
            )
        return struc, win, out, RefineKind.INCREMENTAL
    if objective is Objective.EFFICIENCY:
        if ch.frequent_evolution:
            struc, win = StructureKind.DP_TREE, WindowKind.LANDMARK
        else:
            struc, win = StructureKind.GRIDS, WindowKind.SLIDING
        return struc, win, OutlierKind.NONE, RefineKind.NONE
    # balance
    struc = (
        StructureKind.CFT if ch.frequent_evolution else StructureKind.CORESET_TREE
    )
    return struc, WindowKind.LANDMARK, OutlierKind.TIMER, RefineKind.ONE_SHOT


def migrate(
    objective: Objective,
    new_kind: StructureKind,
    structure: SummaryStructure,
    buffer: OutlierBuffer,
    old_outlier_kind: OutlierKind,
    new_outlier_kind: OutlierKind,
    params: StructureParams,
    rng: np.random.Generator,
    sink: Optional[Sink],
    id_gen,
) -> SummaryStructure:
    """Carry state into a structure of a different kind.

    Accuracy and balance transfer the extracted centers (and buffered
    outliers); efficiency sinks the old result and starts blank.
    """
    if new_kind is structure.kind:
        return structure
    if objective is Objective.EFFICIENCY:
        if sink is not None:
            sink(structure.snapshot())
        return make_structure(new_kind, structure.d, params, rng, id_gen)
    snap = structure.snapshot()
    carried = (
        buffer.drain() if old_outlier_kind in BUFFERED_OUTLIER_KINDS else []
    )
    new_structure = init_from_snapshot(
        new_kind, snap, params, rng, d=structure.d, id_gen=id_gen
    )
    if carried:
        if new_outlier_kind in BUFFERED_OUTLIER_KINDS:
            for cf in carried:
                buffer.add(cf)
        else:
            for cf in carried:
                new_structure.insert_feature(cf)
    return new_structure


@dataclass
class EngineStats:
    points: int = 0
    inserted: int = 0
    flagged_outliers: int = 0
    detections: int = 0
    migrations: int = 0
    refinements: int = 0
    dimension_resets: int = 0


class StreamEngine:
    """Per-point execution flow over one configurable clustering pipeline.

    In adaptive mode the engine batches arrivals into a detection queue;
    each time the queue fills it re-detects stream characteristics,
    re-selects the four design choices for the given objective, and
    migrates the structure when the choice changed. A fixed configuration
    disables all of that and just runs the four chosen components.
    """

    def __init__(
        self,
        *,
        objective: Optional[Objective] = None,
        fixed: Optional[Configuration] = None,
        thresholds: Optional[Thresholds] = None,
        params: Optional[StructureParams] = None,
        refine_cfg: Optional[RefineConfig] = None,
        seed: int = 0,
        no_selection: bool = False,
        no_migration: bool = False,
    ):
        if (objective is None) == (fixed is None):
            raise ConfigError("provide exactly one of objective or fixed config")
        self.objective = objective
        self.adaptive = fixed is None
        self.thresholds = (
            thresholds
            if thresholds is not None
            else (fixed.thresholds if fixed is not None else Thresholds())
        )
        self.params = params.copy() if params is not None else StructureParams()
        if fixed is not None and fixed.k_hint is not None:
            self.params.k_hint = fixed.k_hint
        self.rng = np.random.default_rng(seed)
        self.no_selection = no_selection
        self.no_migration = no_migration

        if fixed is not None:
            kinds = fixed.kinds()
        else:
            kinds = select(objective, StreamCharacteristics())
        self.kinds: Kinds = kinds
        if refine_cfg is not None:
            self.refine_cfg = refine_cfg
        else:
            self.refine_cfg = RefineConfig(
                kind=kinds[3],
                k=self.params.k_hint,
                incremental_period=self.thresholds.refine_period,
            )

        self._id_gen = itertools.count()
        self.structure: Optional[SummaryStructure] = None
        self.window = WindowState.from_thresholds(kinds[1], self.thresholds)
        self.buffer = OutlierBuffer(self.thresholds.buffer_capacity)
        self.queue: list[StreamPoint] = []
        self.centers_history: deque = deque(maxlen=HISTORY_CAP)
        self.reconfigs: list[ReconfigRecord] = []
        self.sunk: list[ClusterSnapshot] = []
        self.stats = EngineStats()
        self.outlier_stats = OutlierStats()
        self._since_check = 0
        self._since_refine = 0
        self._finished = False

    # -- plumbing ----------------------------------------------------------

    @property
    def structure_kind(self) -> StructureKind:
        return self.kinds[0]

    @property
    def window_kind(self) -> WindowKind:
        return self.kinds[1]

    @property
    def outlier_kind(self) -> OutlierKind:
        return self.kinds[2]

    @property
    def refine_kind(self) -> RefineKind:
        return self.kinds[3]

    def _sink(self, snapshot: ClusterSnapshot) -> None:
        if snapshot.centers:
            self.sunk.append(snapshot)

    def _ensure_structure(self, p: StreamPoint) -> None:
        if self.structure is not None and p.dim == self.structure.d:
            return
        if self.structure is not None:
            self._sink(self.structure.snapshot())
            self.buffer.clear()
            self.window.fifo.clear()
            self.queue.clear()
            self.centers_history.clear()
            self.stats.dimension_resets += 1
        self.structure = make_structure(
            self.structure_kind, p.dim, self.params, self.rng, self._id_gen
        )

    def _apply_kinds(self, new: Kinds) -> None:
        old = self.kinds
        if new[0] is not old[0]:
            if self.no_migration:
                self._sink(self.structure.snapshot())
                self.structure = make_structure(
                    new[0], self.structure.d, self.params, self.rng, self._id_gen
                )
            else:
                self.structure = migrate(
                    self.objective,
                    new[0],
                    self.structure,
                    self.buffer,
                    old[2],
                    new[2],
                    self.params,
                    self.rng,
                    self._sink,
                    self._id_gen,
                )
            self.stats.migrations += 1
        if new[1] is not old[1]:
            self.window.rekind(new[1])
        if new[2] not in BUFFERED_OUTLIER_KINDS and old[2] in BUFFERED_OUTLIER_KINDS:
            # demoted summaries have no home under an unbuffered mechanism
            self.buffer.clear()
        if new[3] is not old[3]:
            self.refine_cfg.kind = new[3]
        self.kinds = new

    def _detection_round(self) -> None:
        flags, new_center = detect(self.queue, list(self.centers_history), self.thresholds)
        self.centers_history.append(new_center)
        self.stats.detections += 1
        old = self.kinds
        new = old
        if not self.no_selection:
            new = select(self.objective, flags)
            self._apply_kinds(new)
        self.reconfigs.append(
            ReconfigRecord(
                offset=self.stats.points + 1,
                characteristics=flags,
                old=old,
                new=new,
            )
        )
        self.queue.clear()

    def _incremental_tick(self) -> None:
        self._since_refine += 1
        if self._since_refine < self.refine_cfg_period():
            return
        self._since_refine = 0
        snap = self.structure.snapshot()
        if not snap.centers:
            return
        result = refine(snap, self.refine_cfg, self.rng)
        if result.skipped:
            return
        self.stats.refinements += 1
        self.structure = init_from_snapshot(
            self.structure_kind,
            result.snapshot,
            self.params,
            self.rng,
            d=self.structure.d,
            id_gen=self._id_gen,
        )

    def refine_cfg_period(self) -> int:
        if self.refine_cfg.incremental_period is not None:
            return self.refine_cfg.incremental_period
        return self.thresholds.refine_period

    # -- the per-point flow -------------------------------------------------

    def process(self, p: StreamPoint) -> int:
        """Run one point through the pipeline; return its cluster id (-1
        when the point was judged an outlier and kept out of the structure)."""
        if self._finished:
            raise RuntimeError("engine already finished")
        self._ensure_structure(p)

        if self.adaptive:
            self.queue.append(p)
            if len(self.queue) >= self.thresholds.queue_capacity:
                self._detection_round()

        window_step(self.window, self.structure, self._sink, p)

        if self.outlier_kind is OutlierKind.NONE:
            cid = self.structure.insert(p)
            note_insert(self.window, p, cid)
            self.stats.inserted += 1
        else:
            is_out = outlier_step(
                self.outlier_kind, p, self.structure, self.buffer,
                self.thresholds, self.outlier_stats,
            )
            self._since_check += 1
            if self._since_check >= self.thresholds.check_period:
                self._since_check = 0
                regular_check(
                    self.outlier_kind, self.structure, self.buffer,
                    self.thresholds, p.timestamp, self.outlier_stats,
                )
            if is_out:
                cid = -1
                self.stats.flagged_outliers += 1
            else:
                cid = self.structure.insert(p)
                note_insert(self.window, p, cid)
                self.stats.inserted += 1

        if self.refine_kind is RefineKind.INCREMENTAL:
            self._incremental_tick()

        self.stats.points += 1
        return cid

    def finish(self) -> ClusterSnapshot:
        """End-of-stream: apply one-shot refinement if configured."""
        if self._finished:
            raise RuntimeError("engine already finished")
        self._finished = True
        if self.structure is None:
            return ClusterSnapshot()
        snap = self.structure.snapshot()
        if self.refine_kind is RefineKind.ONE_SHOT and snap.centers:
            result = refine(snap, self.refine_cfg, self.rng)
            if not result.skipped:
                self.stats.refinements += 1
                return result.snapshot
        return snap

    @property
    def dropped_removals(self) -> int:
        return self.window.dropped_removals

    @property
    def buffer_evictions(self) -> int:
        return self.buffer.evictions
