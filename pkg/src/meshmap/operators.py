"""Feasibility-preserving mutation operators and the placement-reordering transfer.

All operators are pure functions of (input, random stream): they never touch
shared state and always return fresh genotypes, so offspring can be produced
in parallel from independently derived streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .genome import PartitioningGenotype, PlacementGenotype


@dataclass(frozen=True)
class PartitionMutationParams:
    """Per-gene mutation probability, addition-vs-redistribution split, and step cap."""

    p_mut: float = 0.3
    p_add: float = 0.5
    delta_max: int = 2

    def __post_init__(self):
        if not 0.0 <= self.p_mut <= 1.0 or not 0.0 <= self.p_add <= 1.0:
            raise ValueError("mutation probabilities must lie in [0, 1]")
        if self.delta_max < 1:
            raise ValueError("delta_max must be >= 1")


@dataclass(frozen=True)
class PlacementMutationParams:
    """Operator-selection probabilities (scramble takes the remainder) and the
    magnitude fraction ``alpha`` that scales mutation size with active cores."""

    p_swap: float = 0.4
    p_inverse: float = 0.3
    alpha: float = 0.25

    def __post_init__(self):
        if self.p_swap < 0 or self.p_inverse < 0 or self.p_swap + self.p_inverse > 1.0:
            raise ValueError("need p_swap, p_inverse >= 0 and p_swap + p_inverse <= 1")
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")


def mutate_partitioning(genotype: PartitioningGenotype,
                        params: PartitionMutationParams,
                        rng: np.random.Generator) -> PartitioningGenotype:
    """Mutate layer genes in a random visiting order; the unused gene is only
    ever touched as the source or target of a move, keeping the core budget
    identity exact.

    Each visited gene mutates independently with probability ``p_mut``:
    either it gains cores drawn from the unused pool (resource addition), or
    it sheds cores to a uniformly chosen other layer or the pool (resource
    redistribution). Move sizes are uniform on {1..delta_max}, capped by what
    the source actually holds, so genes never go negative.
    """
    num_layers = len(genotype.extra)
    extra = list(genotype.extra)
    unused = genotype.unused
    for gene in rng.permutation(num_layers):
        gene = int(gene)
        if rng.random() >= params.p_mut:
            continue
        add = rng.random() < params.p_add
        delta = int(rng.integers(1, params.delta_max + 1))
        if add:
            moved = min(delta, unused)
            extra[gene] += moved
            unused -= moved
        else:
            moved = min(delta, extra[gene])
            # target: one of the other layers, or the unused pool
            target = int(rng.integers(0, num_layers))
            extra[gene] -= moved
            if target == gene:
                unused += moved
            else:
                extra[target] += moved
    return PartitioningGenotype(tuple(extra), unused)


def mutate_placement(placement: PlacementGenotype, used_cores: int,
                     params: PlacementMutationParams,
                     rng: np.random.Generator) -> PlacementGenotype:
    """Apply exactly one of active-global swap, inversion, or scramble.

    The magnitude k is uniform on {1..floor(alpha * used_cores)} (floored at
    1). Swaps pair an active position with any other position, so material can
    enter or leave the active prefix; inversion and scramble rearrange a
    window of length k anchored in the active prefix, truncated at the end of
    the permutation rather than wrapping.
    """
    total = len(placement.order)
    if not 1 <= used_cores <= total:
        raise ValueError(f"used_cores {used_cores} outside [1, {total}]")
    order = list(placement.order)
    k_max = max(1, math.floor(params.alpha * used_cores))
    choice = rng.random()
    k = int(rng.integers(1, k_max + 1))
    if choice < params.p_swap:
        for _ in range(math.ceil(k / 2)):
            i = int(rng.integers(0, used_cores))
            j = int(rng.integers(0, total - 1))
            if j >= i:
                j += 1
            order[i], order[j] = order[j], order[i]
    else:
        start = int(rng.integers(0, used_cores))
        stop = min(start + k, total)
        if choice < params.p_swap + params.p_inverse:
            order[start:stop] = order[start:stop][::-1]
        else:
            window = order[start:stop]
            idx = rng.permutation(len(window))
            order[start:stop] = [window[int(i)] for i in idx]
    return PlacementGenotype(tuple(order))


def reorder_placement(placement: PlacementGenotype,
                      old: PartitioningGenotype,
                      new: PartitioningGenotype,
                      minima: tuple[int, ...]) -> PlacementGenotype:
    """Transfer a placement onto a different partitioning with maximal overlap.

    Every layer keeps as many of its previously assigned physical cores as its
    new size allows: a shrinking layer retains the leading cores of its old
    block and releases the rest, a growing layer keeps its old block whole and
    fills the deficit from the unallocated pool. The pool is consumed in
    placement order, with newly released cores queued behind the pre-existing
    unused cores. The result lists the layer blocks consecutively, then the
    remaining pool.
    """
    old_sizes = old.cores_per_layer(minima)
    new_sizes = new.cores_per_layer(minima)

    blocks = []
    cursor = 0
    for size in old_sizes:
        blocks.append(list(placement.order[cursor:cursor + size]))
        cursor += size
    pool = list(placement.order[cursor:])

    kept = []
    for block, new_size in zip(blocks, new_sizes):
        kept.append(block[:new_size])
        pool.extend(block[new_size:])

    result = []
    taken = 0
    for partial, new_size in zip(kept, new_sizes):
        deficit = new_size - len(partial)
        if deficit > 0:
            partial = partial + pool[taken:taken + deficit]
            taken += deficit
        result.extend(partial)
    result.extend(pool[taken:])
    return PlacementGenotype(tuple(result))
