"""min+k partitioning and the structured placement heuristics."""

from collections import Counter

import numpy as np
import pytest

from meshmap.arch import ArchitectureSpec, CoreLocation, build_architecture, default_spec
from meshmap.heuristics import (ALL_HEURISTICS, COLUMN_MAJOR, PACKED, ROW_MAJOR,
                                SPREAD, BudgetError, PlacementHeuristic,
                                heuristic_placement, max_feasible_k, min_plus_k,
                                random_placement)
from meshmap.workload import MlpSpec, generate_sparse_mlp, minimum_partitioning

DEFAULT_ARCH = build_architecture(default_spec())


def mesh_2x2x2():
    return build_architecture(ArchitectureSpec(mesh_width=2, mesh_height=2,
                                               cores_per_router=2))


class TestMinPlusK:
    def setup_method(self):
        self.workload = generate_sparse_mlp(MlpSpec(name="sparsemlp-1"))
        self.minima = minimum_partitioning(self.workload, DEFAULT_ARCH)

    def test_k0_is_minimum_partitioning(self):
        x = min_plus_k(self.workload, DEFAULT_ARCH, 0, minima=self.minima)
        assert x.extra == (0,) * 6
        assert x.unused == 152 - sum(self.minima)

    def test_k2_adds_twelve_cores(self):
        x = min_plus_k(self.workload, DEFAULT_ARCH, 2, minima=self.minima)
        assert sum(x.extra) == 12
        assert x.cores_per_layer(self.minima) == tuple(m + 2 for m in self.minima)

    def test_oversized_k_reports_max_feasible(self):
        spare = 152 - sum(self.minima)
        too_big = spare // 6 + 1
        with pytest.raises(BudgetError, match=f"max feasible k = {spare // 6}"):
            min_plus_k(self.workload, DEFAULT_ARCH, too_big, minima=self.minima)
        assert max_feasible_k(self.workload, DEFAULT_ARCH, minima=self.minima) == spare // 6


class TestHeuristicPlacement:
    def test_packed_column_major_unrolled(self):
        arch = mesh_2x2x2()
        omega = heuristic_placement(PlacementHeuristic(COLUMN_MAJOR, PACKED), arch)
        assert omega.order == tuple(CoreLocation(0, x, y, c)
                                    for x in range(2) for y in range(2)
                                    for c in (1, 2))

    def test_spread_column_major_unrolled(self):
        arch = mesh_2x2x2()
        omega = heuristic_placement(PlacementHeuristic(COLUMN_MAJOR, SPREAD), arch)
        assert omega.order == tuple(CoreLocation(0, x, y, c)
                                    for c in (1, 2)
                                    for x in range(2) for y in range(2))

    def test_row_major_sweeps_y_outermost(self):
        arch = mesh_2x2x2()
        omega = heuristic_placement(PlacementHeuristic(ROW_MAJOR, PACKED), arch)
        assert omega.order == tuple(CoreLocation(0, x, y, c)
                                    for y in range(2) for x in range(2)
                                    for c in (1, 2))

    def test_transpose_flag_swaps_axes(self):
        arch = mesh_2x2x2()
        assert (heuristic_placement(PlacementHeuristic(COLUMN_MAJOR, PACKED), arch,
                                    transpose=True).order
                == heuristic_placement(PlacementHeuristic(ROW_MAJOR, PACKED), arch).order)

    @pytest.mark.parametrize("heuristic", ALL_HEURISTICS, ids=lambda h: h.name)
    def test_all_heuristics_are_permutations(self, heuristic):
        omega = heuristic_placement(heuristic, DEFAULT_ARCH)
        assert Counter(omega.order) == Counter(DEFAULT_ARCH.usable_cores)

    @pytest.mark.parametrize("order", [COLUMN_MAJOR, ROW_MAJOR])
    def test_spread_prefix_one_core_per_router(self, order):
        omega = heuristic_placement(PlacementHeuristic(order, SPREAD), DEFAULT_ARCH)
        usable_routers = len({core.router() for core in DEFAULT_ARCH.usable_cores})
        for prefix in range(1, usable_routers + 1):
            seen = [core.router() for core in omega.order[:prefix]]
            assert len(set(seen)) == prefix

    @pytest.mark.parametrize("order", [COLUMN_MAJOR, ROW_MAJOR])
    def test_packed_prefix_occupies_ceil_quarter_routers(self, order):
        # the default profile disables whole routers, so every enumerated
        # router contributes its full 4 slots
        omega = heuristic_placement(PlacementHeuristic(order, PACKED), DEFAULT_ARCH)
        for prefix in range(1, DEFAULT_ARCH.total_cores + 1):
            seen = {core.router() for core in omega.order[:prefix]}
            assert len(seen) == -(-prefix // 4)

    def test_disabled_slots_skipped_in_order(self):
        arch = build_architecture(ArchitectureSpec(
            mesh_width=2, mesh_height=1, cores_per_router=2,
            disabled_cores=(CoreLocation(0, 0, 0, 2),)))
        omega = heuristic_placement(PlacementHeuristic(COLUMN_MAJOR, PACKED), arch)
        assert omega.order == (CoreLocation(0, 0, 0, 1), CoreLocation(0, 1, 0, 1),
                               CoreLocation(0, 1, 0, 2))


class TestRandomPlacement:
    def test_same_seed_identical(self):
        a = random_placement(DEFAULT_ARCH, np.random.default_rng(5))
        b = random_placement(DEFAULT_ARCH, np.random.default_rng(5))
        assert a == b

    def test_is_bijection(self):
        omega = random_placement(DEFAULT_ARCH, np.random.default_rng(1))
        assert Counter(omega.order) == Counter(DEFAULT_ARCH.usable_cores)

    def test_first_position_uniform(self):
        # Monte Carlo: each of 4 cores opens the permutation ~25% of the time
        arch = build_architecture(ArchitectureSpec(mesh_width=1, mesh_height=1))
        rng = np.random.default_rng(7)
        counts = Counter(random_placement(arch, rng).order[0] for _ in range(10_000))
        for core in arch.usable_cores:
            assert abs(counts[core] / 10_000 - 0.25) < 0.02
