"""Genotypes, mapping construction, and search-space counting."""

import math
from itertools import permutations

import pytest

from meshmap.arch import ArchitectureSpec, build_architecture, default_spec
from meshmap.genome import (FeasibilityError, GenotypeError, Mapping,
                            PartitioningGenotype, PlacementGenotype, balanced_slices,
                            build_mapping, count_partitionings, count_placements,
                            identity_placement, mapping_from_dict, mapping_to_dict,
                            validate)
from meshmap.heuristics import min_plus_k
from meshmap.workload import Layer, MlpSpec, Workload, generate_sparse_mlp, minimum_partitioning

DEFAULT_ARCH = build_architecture(default_spec())


def tiny_arch(total=4):
    # a 1 x total strip of single-core routers
    return build_architecture(ArchitectureSpec(
        mesh_width=total, mesh_height=1, cores_per_router=1))


def layer_workload(*neurons, fan_in=0):
    layers = []
    prev = fan_in
    for n in neurons:
        layers.append(Layer(neurons=n, fan_in=prev))
        prev = n
    return Workload(tuple(layers), input_size=fan_in)


class TestBuildMapping:
    def test_one_layer_two_cores(self):
        arch = tiny_arch(4)
        w = layer_workload(10_000)  # needs 2 cores under the neuron cap
        x = PartitioningGenotype((0,), 2)
        mapping = build_mapping(x, identity_placement(arch), w, arch)
        assert mapping.layer_cores == (tuple(arch.usable_cores[:2]),)
        assert mapping.unused_cores == tuple(arch.usable_cores[2:])

    def test_two_layers_block_cut(self):
        arch = tiny_arch(4)
        w = layer_workload(8, 8)
        x = PartitioningGenotype((1, 0), 1)
        mapping = build_mapping(x, identity_placement(arch), w, arch)
        a, b, c, d = arch.usable_cores
        assert mapping.layer_cores == ((a, b), (c,))
        assert mapping.unused_cores == (d,)

    def test_min_plus_2_core_accounting(self):
        w = generate_sparse_mlp(MlpSpec(name="sparsemlp-1"))
        minima = minimum_partitioning(w, DEFAULT_ARCH)
        x = min_plus_k(w, DEFAULT_ARCH, 2, minima=minima)
        mapping = build_mapping(x, identity_placement(DEFAULT_ARCH), w, DEFAULT_ARCH,
                                minima=minima)
        assert mapping.used_cores() == sum(minima) + 12
        assert len(mapping.unused_cores) == 152 - sum(minima) - 12

    def test_budget_violation_raises_genotype_error(self):
        arch = tiny_arch(4)
        w = layer_workload(8)
        with pytest.raises(GenotypeError, match="budget"):
            build_mapping(PartitioningGenotype((1,), 5), identity_placement(arch), w, arch)

    def test_infeasible_layer_raises_feasibility_error(self):
        arch = tiny_arch(4)
        w = layer_workload(20_000)  # 3 cores minimum; force 2
        with pytest.raises(FeasibilityError, match="layer 1"):
            build_mapping(PartitioningGenotype((0,), 2), identity_placement(arch), w,
                          arch, minima=(2,))

    def test_slices_cover_layer_in_order(self):
        assert balanced_slices(10, 3) == ((0, 3), (3, 6), (6, 10))
        assert balanced_slices(4, 4) == ((0, 1), (1, 2), (2, 3), (3, 4))


class TestValidate:
    def test_valid_inputs_no_violations(self):
        arch = tiny_arch(4)
        w = layer_workload(8)
        assert validate(PartitioningGenotype((1,), 2), identity_placement(arch),
                        w, arch) == []

    def test_duplicate_core_flagged(self):
        arch = tiny_arch(4)
        w = layer_workload(8)
        order = list(arch.usable_cores)
        order[1] = order[0]
        bad = PlacementGenotype(tuple(order))
        violations = validate(PartitioningGenotype((0,), 3), bad, w, arch)
        assert any("permutation" in v for v in violations)

    def test_budget_identity_flagged(self):
        arch = tiny_arch(4)
        w = layer_workload(8)
        violations = validate(PartitioningGenotype((0,), 1), identity_placement(arch),
                              w, arch)
        assert any("budget" in v for v in violations)


class TestCounting:
    def test_partitionings_match_enumeration(self):
        # oracle: count non-negative integer solutions of sum(x) + u = spare
        def brute(spare, layers):
            def count(remaining, slots):
                if slots == 0:
                    return 1
                return sum(count(remaining - v, slots - 1) for v in range(remaining + 1))
            return count(spare, layers)  # the final slot is the unused gene

        for spare in range(0, 7):
            for layers in range(1, 5):
                assert count_partitionings(10 + spare, 10, layers) == brute(spare, layers)

    def test_partitionings_examples(self):
        assert count_partitionings(4, 2, 2) == 6
        assert count_partitionings(152, 152, 9) == 1
        assert count_partitionings(152, 10, 10) > 10 ** 13

    def test_placements_match_enumeration(self):
        for total in range(0, 7):
            for used in range(0, total + 1):
                brute = sum(1 for _ in permutations(range(total), used))
                assert count_placements(total, used) == brute

    def test_placements_examples(self):
        assert count_placements(4, 2) == 12
        assert 267 <= math.log10(count_placements(152, 152)) < 268
        assert 155 < math.log10(count_placements(152, 76)) < 157

    def test_error_cases(self):
        with pytest.raises(FeasibilityError):
            count_partitionings(5, 9, 2)
        with pytest.raises(GenotypeError):
            count_placements(4, 5)


class TestMappingFile:
    def test_round_trip_preserves_phenotype(self):
        w = generate_sparse_mlp(MlpSpec(name="sparsemlp-1"))
        minima = minimum_partitioning(w, DEFAULT_ARCH)
        x = min_plus_k(w, DEFAULT_ARCH, 1, minima=minima)
        mapping = build_mapping(x, identity_placement(DEFAULT_ARCH), w, DEFAULT_ARCH,
                                minima=minima)
        data = mapping_to_dict(mapping, DEFAULT_ARCH, fitness={"latency_us": 1.0})
        again, arch2 = mapping_from_dict(data)
        assert again.layer_cores == mapping.layer_cores
        assert again.unused_cores == mapping.unused_cores
        assert arch2.total_cores == DEFAULT_ARCH.total_cores

    def test_missing_field_named(self):
        with pytest.raises(GenotypeError, match="placement"):
            mapping_from_dict({"architecture": {}, "workload": {}, "partitioning": {}})


class TestInvariantPrefixCover:
    def test_blocks_are_disjoint_prefix_of_permutation(self):
        w = generate_sparse_mlp(MlpSpec(name="sparsemlp-1"))
        minima = minimum_partitioning(w, DEFAULT_ARCH)
        x = min_plus_k(w, DEFAULT_ARCH, 3, minima=minima)
        omega = identity_placement(DEFAULT_ARCH)
        mapping = build_mapping(x, omega, w, DEFAULT_ARCH, minima=minima)
        flat = [core for block in mapping.layer_cores for core in block]
        assert flat == list(omega.order[:len(flat)])
        assert len(set(flat)) == len(flat)
        assert set(flat) | set(mapping.unused_cores) == set(DEFAULT_ARCH.usable_cores)
