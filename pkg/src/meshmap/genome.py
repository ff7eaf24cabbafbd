"""Genotype encodings, mapping construction, and search-space counting.

A candidate solution is a pair of genotypes. The partitioning genotype gives
each layer a number of extra cores beyond its minimum, plus an explicit gene
counting the cores left unused, so the global core budget holds by
construction. The placement genotype is one permutation of every usable core;
consecutive blocks of it, cut to each layer's core count, become the layer's
physical cores, and the tail stays unused.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .arch import Architecture, CoreLocation, spec_from_dict, spec_to_dict, build_architecture
from .workload import Workload, is_feasible, minimum_partitioning, workload_from_dict, workload_to_dict


class GenotypeError(ValueError):
    """Raised when a genotype violates its structural invariants."""


class FeasibilityError(RuntimeError):
    """Raised when a structurally valid genotype cannot be realized on the substrate."""


@dataclass(frozen=True)
class PartitioningGenotype:
    """Extra cores per layer plus the explicit unused-core gene.

    Invariant: ``sum(extra) + unused == total_cores - sum(minima)``.
    """

    extra: tuple[int, ...]
    unused: int

    def __post_init__(self):
        if any(e < 0 for e in self.extra) or self.unused < 0:
            raise GenotypeError("partitioning genes must be non-negative")

    def cores_per_layer(self, minima: tuple[int, ...]) -> tuple[int, ...]:
        return tuple(m + e for m, e in zip(minima, self.extra))

    def used_cores(self, minima: tuple[int, ...]) -> int:
        return sum(minima) + sum(self.extra)


@dataclass(frozen=True)
class PlacementGenotype:
    """A permutation of all usable cores of the architecture."""

    order: tuple[CoreLocation, ...]

    def __len__(self) -> int:
        return len(self.order)


def identity_placement(arch: Architecture) -> PlacementGenotype:
    """The identity permutation: the architecture's canonical core order."""
    return PlacementGenotype(arch.usable_cores)


@dataclass(frozen=True)
class Mapping:
    """The deployable phenotype: per-layer core lists plus neuron slices.

    ``neuron_slices[i][j]`` is the half-open neuron index range of layer i's
    j-th core under the balanced natural-order split. Kept immutable so that
    many mappings can be evaluated concurrently.
    """

    workload: Workload
    minima: tuple[int, ...]
    partitioning: PartitioningGenotype
    placement: PlacementGenotype
    layer_cores: tuple[tuple[CoreLocation, ...], ...]
    unused_cores: tuple[CoreLocation, ...]
    neuron_slices: tuple[tuple[tuple[int, int], ...], ...]

    def used_cores(self) -> int:
        return sum(len(block) for block in self.layer_cores)

    def neurons_on(self, layer_index: int, core_index: int) -> int:
        lo, hi = self.neuron_slices[layer_index][core_index]
        return hi - lo


def balanced_slices(neurons: int, cores: int) -> tuple[tuple[int, int], ...]:
    """Most-uniform natural-order split of ``neurons`` into ``cores`` ranges."""
    return tuple((neurons * j // cores, neurons * (j + 1) // cores)
                 for j in range(cores))


def build_mapping(partitioning: PartitioningGenotype, placement: PlacementGenotype,
                  workload: Workload, arch: Architecture,
                  minima: tuple[int, ...] | None = None) -> Mapping:
    """Combine the two genotypes into a mapping.

    Layer 1 takes the first block of the permutation, layer 2 the next, and so
    on; the remaining entries stay unused. Errors name the violated constraint
    (budget identity, permutation validity, or per-layer feasibility).
    """
    if minima is None:
        minima = minimum_partitioning(workload, arch)
    violations = validate(partitioning, placement, workload, arch, minima)
    if violations:
        structural = [v for v in violations if not v.startswith("layer")]
        if structural:
            raise GenotypeError("; ".join(structural))
        raise FeasibilityError("; ".join(violations))

    blocks = []
    slices = []
    cursor = 0
    for layer, cores in zip(workload.layers, partitioning.cores_per_layer(minima)):
        blocks.append(tuple(placement.order[cursor:cursor + cores]))
        slices.append(balanced_slices(layer.neurons, cores))
        cursor += cores
    unused = tuple(placement.order[cursor:])
    return Mapping(workload=workload, minima=minima, partitioning=partitioning,
                   placement=placement, layer_cores=tuple(blocks),
                   unused_cores=unused, neuron_slices=tuple(slices))


def validate(partitioning: PartitioningGenotype, placement: PlacementGenotype,
             workload: Workload, arch: Architecture,
             minima: tuple[int, ...] | None = None) -> list[str]:
    """Collect every constraint violation; empty means build_mapping will succeed."""
    if minima is None:
        minima = minimum_partitioning(workload, arch)
    violations = []
    if len(partitioning.extra) != len(workload.layers):
        violations.append(f"budget: genotype has {len(partitioning.extra)} genes "
                          f"for {len(workload.layers)} layers")
        return violations
    spare = arch.total_cores - sum(minima)
    if sum(partitioning.extra) + partitioning.unused != spare:
        violations.append(
            f"budget: sum(extra) + unused = {sum(partitioning.extra) + partitioning.unused} "
            f"!= total - minimum = {spare}")
    order = placement.order
    if len(order) != arch.total_cores or set(order) != set(arch.usable_cores):
        violations.append("permutation: placement is not a bijection onto the usable cores")
    for index, (layer, cores) in enumerate(
            zip(workload.layers, partitioning.cores_per_layer(minima))):
        if not is_feasible(layer, cores, arch):
            violations.append(f"layer {index + 1}: infeasible at {cores} cores")
    return violations


# -- search-space counting ----------------------------------------------------

def count_partitionings(total_cores: int, minimum_total: int, num_layers: int) -> int:
    """Number of admissible partitionings: C(total - minimum + L, L), exactly."""
    if num_layers < 1:
        raise GenotypeError("num_layers must be >= 1")
    if total_cores < minimum_total:
        raise FeasibilityError(
            f"total cores {total_cores} below minimum requirement {minimum_total}")
    return math.comb(total_cores - minimum_total + num_layers, num_layers)


def count_placements(total_cores: int, used_cores: int) -> int:
    """Number of distinct placements for ``used_cores`` cores: the falling
    factorial total!/(total-used)!, exactly (unused-core order is irrelevant)."""
    if not 0 <= used_cores <= total_cores:
        raise GenotypeError("used_cores must lie in [0, total_cores]")
    return math.perm(total_cores, used_cores)


# -- mapping file ------------------------------------------------------------

def mapping_to_dict(mapping: Mapping, arch: Architecture, fitness: dict | None = None) -> dict:
    """Self-contained JSON form: substrate, workload, genotypes, phenotype."""

    def core(loc: CoreLocation) -> list[int]:
        return [loc.chip, loc.x, loc.y, loc.c]

    data = {
        "architecture": spec_to_dict(arch.spec),
        "workload": workload_to_dict(mapping.workload),
        "minima": list(mapping.minima),
        "partitioning": {"extra": list(mapping.partitioning.extra),
                         "unused": mapping.partitioning.unused},
        "placement": [core(loc) for loc in mapping.placement.order],
        "layer_cores": [[core(loc) for loc in block] for block in mapping.layer_cores],
        "unused_cores": [core(loc) for loc in mapping.unused_cores],
    }
    if fitness is not None:
        data["fitness"] = fitness
    return data


def mapping_from_dict(data: dict) -> tuple[Mapping, Architecture]:
    if not isinstance(data, dict):
        raise GenotypeError("mapping file must hold a JSON object")
    for field in ("architecture", "workload", "partitioning", "placement"):
        if field not in data:
            raise GenotypeError(f"mapping file missing field {field!r}")
    arch = build_architecture(spec_from_dict(data["architecture"]))
    workload = workload_from_dict(data["workload"])
    part = data["partitioning"]
    if "extra" not in part or "unused" not in part:
        raise GenotypeError("mapping file field 'partitioning' needs 'extra' and 'unused'")
    partitioning = PartitioningGenotype(tuple(int(v) for v in part["extra"]),
                                        int(part["unused"]))
    placement = PlacementGenotype(tuple(CoreLocation(*map(int, entry))
                                        for entry in data["placement"]))
    minima = tuple(int(v) for v in data["minima"]) if "minima" in data else None
    mapping = build_mapping(partitioning, placement, workload, arch, minima=minima)
    return mapping, arch


def save_mapping(mapping: Mapping, arch: Architecture, path: str,
                 fitness: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(mapping_to_dict(mapping, arch, fitness), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_mapping(path: str) -> tuple[Mapping, Architecture]:
    with open(path, "r", encoding="utf-8") as fh:
        return mapping_from_dict(json.load(fh))
