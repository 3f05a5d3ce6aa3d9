"""The six summarizing structures behind one uniform interface."""

from __future__ import annotations

from typing import Iterator, Optional

import numpy as np

from ..types import ClusterSnapshot, StreamPoint, StructureError, StructureKind
from .base import StructureParams, SummaryStructure, center_point
from .cftree import CfTreeStructure
from .coreset import CoresetTreeStructure, build_coreset
from .dptree import DependencyTreeStructure
from .grids import GridStructure
from .mcs import MicroClusterStructure
from .meyerson import MeyersonSketchStructure

_KIND_MAP: dict[StructureKind, type[SummaryStructure]] = {
    StructureKind.CFT: CfTreeStructure,
    StructureKind.CORESET_TREE: CoresetTreeStructure,
    StructureKind.DP_TREE: DependencyTreeStructure,
    StructureKind.MICRO_CLUSTERS: MicroClusterStructure,
    StructureKind.GRIDS: GridStructure,
    StructureKind.AM_SKETCH: MeyersonSketchStructure,
}


def make_structure(
    kind: StructureKind,
    d: int,
    params: StructureParams,
    rng: np.random.Generator,
    id_gen: Optional[Iterator[int]] = None,
) -> SummaryStructure:
    return _KIND_MAP[kind](d, params, rng, id_gen)


def init_from_snapshot(
    kind: StructureKind,
    snap: ClusterSnapshot,
    params: StructureParams,
    rng: np.random.Generator,
    d: Optional[int] = None,
    id_gen: Optional[Iterator[int]] = None,
) -> SummaryStructure:
    """Seed a fresh structure with each snapshot center as a weighted point."""
    if d is None:
        d = snap.dim
    if d is None:
        raise StructureError("cannot infer dimension from an empty snapshot")
    structure = make_structure(kind, d, params, rng, id_gen)
    for i, c in enumerate(snap.centers):
        if c.dim != d:
            raise StructureError(f"dimension mismatch: {c.dim} vs {d}")
        structure.insert(center_point(c, point_id=-(i + 1)))
    return structure


__all__ = [
    "CfTreeStructure",
    "CoresetTreeStructure",
    "DependencyTreeStructure",
    "GridStructure",
    "MeyersonSketchStructure",
    "MicroClusterStructure",
    "StructureParams",
    "SummaryStructure",
    "build_coreset",
    "center_point",
    "init_from_snapshot",
    "make_structure",
]
