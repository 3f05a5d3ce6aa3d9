"""Window models: landmark flushing, per-arrival decay, sliding retraction."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .types import ClusterSnapshot, StreamPoint, Thresholds, WindowKind
from .structures.base import SummaryStructure

Sink = Callable[[ClusterSnapshot], None]


@dataclass
class WindowState:
    """Counter, landmark schedule, FIFO of absorbed points, decay knobs."""

    kind: WindowKind
    landmark_period: int = 1000
    sliding_size: int = 1000
    decay_alpha: float = 1.0
    decay_lambda: float = 0.001
    counter: int = 0
    landmark: int = field(init=False)
    next_landmark: int = field(init=False)
    fifo: deque = field(default_factory=deque)
    dropped_removals: int = 0

    def __post_init__(self):
        self.landmark = self.landmark_period
        self.next_landmark = 2 * self.landmark_period

    @classmethod
    def from_thresholds(cls, kind: WindowKind, th: Thresholds) -> "WindowState":
        return cls(
            kind=kind,
            landmark_period=th.landmark_period,
            sliding_size=th.sliding_size,
            decay_alpha=th.decay_alpha,
            decay_lambda=th.decay_lambda,
        )

    def rekind(self, kind: WindowKind) -> None:
        """Switch the window model, keeping the global counter.

        The landmark schedule restarts one period ahead; retained FIFO
        entries reference clusters of the previous regime and are dropped.
        """
        if kind is self.kind:
            return
        self.kind = kind
        self.fifo.clear()
        self.landmark = self.counter + self.landmark_period
        self.next_landmark = self.landmark + self.landmark_period


def window_step(
    state: WindowState,
    structure: SummaryStructure,
    sink: Optional[Sink],
    p: StreamPoint,
) -> None:
    """Run the window model for one arriving point, before any insertion."""
    state.counter += 1
    if state.kind is WindowKind.LANDMARK:
        if state.counter > state.landmark:
            if sink is not None:
                sink(structure.snapshot())
            structure.clear()
            state.fifo.clear()
            state.landmark = state.next_landmark
            state.next_landmark = state.landmark + state.landmark_period
    elif state.kind is WindowKind.DAMPED:
        structure.decay_all(p.timestamp, state.decay_alpha, state.decay_lambda)
    else:  # sliding
        horizon = state.counter - state.sliding_size
        while state.fifo and state.fifo[0][0] <= horizon:
            _, old_point, cid = state.fifo.popleft()
            if not structure.retract(old_point, cid):
                state.dropped_removals += 1


def note_insert(state: WindowState, p: StreamPoint, cluster_id: int) -> None:
    """Record where an inserted point landed, for later sliding expiry."""
    if state.kind is WindowKind.SLIDING:
        state.fifo.append((state.counter, p, cluster_id))
