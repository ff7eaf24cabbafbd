"""Structured initial mappings: min+k partitioning and the four fill heuristics.

The placement heuristics enumerate routers in column-major or row-major order
and fill them either packed (exhaust one router's slots before advancing) or
spread (one slot per router per pass). They serve both as evolution starting
points and as deployment baselines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .arch import Architecture, CoreLocation
from .genome import PartitioningGenotype, PlacementGenotype
from .workload import Workload, minimum_partitioning

COLUMN_MAJOR = "column-major"
ROW_MAJOR = "row-major"
PACKED = "packed"
SPREAD = "spread"


class BudgetError(RuntimeError):
    """Raised when min+k does not fit the core budget."""


@dataclass(frozen=True)
class PlacementHeuristic:
    """One of the four fill strategies: {packed, spread} x {column, row}-major."""

    order: str
    fill: str

    def __post_init__(self):
        if self.order not in (COLUMN_MAJOR, ROW_MAJOR):
            raise ValueError(f"unknown order {self.order!r}")
        if self.fill not in (PACKED, SPREAD):
            raise ValueError(f"unknown fill {self.fill!r}")

    @property
    def name(self) -> str:
        return f"{self.fill}-{self.order}"


# Canonical enumeration order, also the tie-break order during initialization.
ALL_HEURISTICS = (
    PlacementHeuristic(COLUMN_MAJOR, PACKED),
    PlacementHeuristic(ROW_MAJOR, PACKED),
    PlacementHeuristic(COLUMN_MAJOR, SPREAD),
    PlacementHeuristic(ROW_MAJOR, SPREAD),
)


def min_plus_k(workload: Workload, arch: Architecture, k: int,
               minima: tuple[int, ...] | None = None) -> PartitioningGenotype:
    """Uniform partitioning: every layer gets k cores beyond its minimum."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if minima is None:
        minima = minimum_partitioning(workload, arch)
    num_layers = len(minima)
    spare = arch.total_cores - sum(minima)
    if k * num_layers > spare:
        raise BudgetError(
            f"min+{k} needs {sum(minima) + k * num_layers} cores, only "
            f"{arch.total_cores} usable; max feasible k = {spare // num_layers}")
    return PartitioningGenotype((k,) * num_layers, spare - k * num_layers)


def max_feasible_k(workload: Workload, arch: Architecture,
                   minima: tuple[int, ...] | None = None) -> int:
    if minima is None:
        minima = minimum_partitioning(workload, arch)
    return (arch.total_cores - sum(minima)) // len(minima)


def _router_order(arch: Architecture, order: str, transpose: bool):
    """Routers of every chip in the requested sweep order; chips ascending.

    Column-major sweeps x outermost (whole columns in turn); row-major sweeps
    y outermost. The transpose flag exchanges the two axes' roles, which
    mirrors the stripe pattern without touching coordinates.
    """
    column_outer = (order == COLUMN_MAJOR) ^ transpose
    for chip in range(arch.chips):
        if column_outer:
            for x in range(arch.mesh_width):
                for y in range(arch.mesh_height):
                    yield chip, x, y
        else:
            for y in range(arch.mesh_height):
                for x in range(arch.mesh_width):
                    yield chip, x, y


def heuristic_placement(heuristic: PlacementHeuristic, arch: Architecture,
                        transpose: bool = False) -> PlacementGenotype:
    """Full core permutation realizing the heuristic; disabled slots are
    skipped without disturbing the enumeration order."""
    routers = list(_router_order(arch, heuristic.order, transpose))
    cores: list[CoreLocation] = []
    if heuristic.fill == PACKED:
        for chip, x, y in routers:
            for c in range(1, arch.cores_per_router + 1):
                loc = CoreLocation(chip, x, y, c)
                if arch.is_usable(loc):
                    cores.append(loc)
    else:
        for c in range(1, arch.cores_per_router + 1):
            for chip, x, y in routers:
                loc = CoreLocation(chip, x, y, c)
                if arch.is_usable(loc):
                    cores.append(loc)
    return PlacementGenotype(tuple(cores))


def random_placement(arch: Architecture, rng: np.random.Generator) -> PlacementGenotype:
    """Uniform random permutation of the usable cores."""
    idx = rng.permutation(arch.total_cores)
    return PlacementGenotype(tuple(arch.usable_cores[int(i)] for i in idx))
