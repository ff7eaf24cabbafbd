"""Traffic accounting, stage-time bounds, energy model, and the exact oracle."""

import math
from dataclasses import replace

import numpy as np
import pytest

from meshmap.arch import ArchitectureSpec, build_architecture, default_spec
from meshmap.fitness import (NoiseConfig, evaluate, energy_power, link_loads,
                             simulate_exact, stage_times, traffic_matrix)
from meshmap.genome import (PartitioningGenotype, PlacementGenotype, build_mapping,
                            identity_placement)
from meshmap.heuristics import min_plus_k, random_placement
from meshmap.workload import (Layer, MlpSpec, Workload, generate_sparse_mlp,
                              minimum_partitioning)

DEFAULT_ARCH = build_architecture(default_spec())


def strip_arch(total, **kwargs):
    return build_architecture(ArchitectureSpec(
        mesh_width=total, mesh_height=1, cores_per_router=1, **kwargs))


def chain_workload(*specs, input_size=0, input_activity=1.0):
    """specs: (neurons, activation_sparsity) tuples without weight sparsity."""
    layers, prev = [], input_size
    for neurons, act in specs:
        layers.append(Layer(neurons=neurons, fan_in=prev, activation_sparsity=act))
        prev = neurons
    return Workload(tuple(layers), input_size=input_size, input_activity=input_activity)


def simple_mapping(workload, arch, extra=None, order=None):
    minima = minimum_partitioning(workload, arch)
    spare = arch.total_cores - sum(minima)
    if extra is None:
        extra = (0,) * len(minima)
    x = PartitioningGenotype(tuple(extra), spare - sum(extra))
    omega = PlacementGenotype(tuple(order)) if order else identity_placement(arch)
    return build_mapping(x, omega, workload, arch, minima=minima)


class TestTrafficMatrix:
    def test_inactive_layer_emits_nothing(self):
        arch = strip_arch(4)
        w = chain_workload((10, 1.0), (10, 0.0))
        assert traffic_matrix(simple_mapping(w, arch)) == {}

    def test_replication_per_destination_core(self):
        arch = strip_arch(4)
        w = chain_workload((100, 0.0), (30, 0.0))
        mapping = simple_mapping(w, arch, extra=(0, 2))
        traffic = traffic_matrix(mapping)
        src = mapping.layer_cores[0][0]
        assert len(traffic) == 3
        assert all(traffic[(src, dst)] == 100 for dst in mapping.layer_cores[1])

    def test_first_ramp_level_packet_count(self):
        # a 512-neuron core at 15% activation sparsity emits ceil(512 * 0.85)
        arch = strip_arch(4)
        w = chain_workload((512, 0.15), (10, 0.0))
        mapping = simple_mapping(w, arch)
        traffic = traffic_matrix(mapping)
        src = mapping.layer_cores[0][0]
        dst = mapping.layer_cores[1][0]
        assert traffic[(src, dst)] == math.ceil(512 * 0.85) == 436

    def test_output_layer_emits_nothing(self):
        arch = strip_arch(4)
        w = chain_workload((10, 0.0))
        assert traffic_matrix(simple_mapping(w, arch)) == {}


class TestLinkLoads:
    def test_same_router_no_router_links(self):
        arch = build_architecture(ArchitectureSpec(mesh_width=1, mesh_height=1))
        w = chain_workload((4, 0.0), (4, 0.0))
        loads, _ = link_loads(simple_mapping(w, arch), arch)
        assert all(link.kind == "core-router" for link in loads)

    def test_three_link_route_carries_full_count(self):
        arch = strip_arch(4)
        w = chain_workload((10, 0.0), (10, 0.0))
        order = [arch.usable_cores[0], arch.usable_cores[3]] + list(arch.usable_cores[1:3])
        mapping = simple_mapping(w, arch, order=order)
        loads, peak = link_loads(mapping, arch)
        router_links = {l: v for l, v in loads.items() if l.kind == "router-router"}
        assert len(router_links) == 3
        assert set(router_links.values()) == {10}
        assert peak == 10

    def test_conservation_of_source_egress(self):
        w = generate_sparse_mlp(MlpSpec(name="sparsemlp-1"))
        minima = minimum_partitioning(w, DEFAULT_ARCH)
        mapping = build_mapping(min_plus_k(w, DEFAULT_ARCH, 2, minima=minima),
                                random_placement(DEFAULT_ARCH, np.random.default_rng(3)),
                                w, DEFAULT_ARCH, minima=minima)
        traffic = traffic_matrix(mapping)
        loads, _ = link_loads(mapping, DEFAULT_ARCH)
        sources = {src for src, _ in traffic}
        egress = sum(v for l, v in loads.items()
                     if l.kind == "core-router" and len(l.src) == 4 and
                     (l.src[0], l.src[1], l.src[2], l.src[3]) in
                     {(c.chip, c.x, c.y, c.c) for c in sources})
        assert egress == sum(traffic.values())


class TestSimulateExactOracle:
    def test_empty_traffic_all_zero(self):
        arch = strip_arch(4)
        w = chain_workload((10, 1.0), (10, 0.0))
        assert simulate_exact(simple_mapping(w, arch), arch) == {}

    def test_oracle_matches_link_loads_on_random_instances(self):
        rng = np.random.default_rng(2024)
        checked = 0
        meshes = [(1, 1, 4), (2, 1, 2), (2, 2, 2), (2, 2, 4)]
        while checked < 100:
            width, height, cores = meshes[checked % len(meshes)]
            arch = build_architecture(ArchitectureSpec(
                mesh_width=width, mesh_height=height, cores_per_router=cores))
            num_layers = int(rng.integers(1, 4))
            specs = [(int(rng.integers(1, 40)), float(rng.uniform(0, 1)))
                     for _ in range(num_layers)]
            w = chain_workload(*specs)
            minima = minimum_partitioning(w, arch)
            spare = arch.total_cores - sum(minima)
            extra = [0] * num_layers
            for _ in range(int(rng.integers(0, spare + 1))):
                extra[int(rng.integers(0, num_layers))] += 1
                if sum(extra) >= spare:
                    break
            x = PartitioningGenotype(tuple(extra), spare - sum(extra))
            omega = random_placement(arch, rng)
            mapping = build_mapping(x, omega, w, arch, minima=minima)
            loads, _ = link_loads(mapping, arch)
            assert simulate_exact(mapping, arch) == loads
            checked += 1

    def test_oracle_matches_on_two_chip_instance(self):
        arch = build_architecture(ArchitectureSpec(
            chips=2, mesh_width=2, mesh_height=1, cores_per_router=2))
        w = chain_workload((12, 0.25), (8, 0.5))
        # layer 1 on the first chip-0 core, layer 2 on the first chip-1 core
        chip0 = [c for c in arch.usable_cores if c.chip == 0]
        chip1 = [c for c in arch.usable_cores if c.chip == 1]
        order = [chip0[0], chip1[0]] + chip0[1:] + chip1[1:]
        mapping = simple_mapping(w, arch, extra=(0, 0), order=order)
        loads, _ = link_loads(mapping, arch)
        assert any(l.kind == "inter-chip" for l in loads)
        assert simulate_exact(mapping, arch) == loads

    def test_size_guard_refuses_large_instances(self):
        w = generate_sparse_mlp(MlpSpec(name="sparsemlp-1"))
        minima = minimum_partitioning(w, DEFAULT_ARCH)
        mapping = build_mapping(min_plus_k(w, DEFAULT_ARCH, 2, minima=minima),
                                identity_placement(DEFAULT_ARCH), w, DEFAULT_ARCH,
                                minima=minima)
        from meshmap.fitness import OracleSizeError
        with pytest.raises(OracleSizeError):
            simulate_exact(mapping, DEFAULT_ARCH, max_packet_hops=10_000)


class TestStageTimes:
    def test_zero_activation_zeroes_traffic_stages(self):
        arch = strip_arch(6)
        w = chain_workload((10, 1.0), (10, 1.0), input_size=8, input_activity=0.0)
        stages = stage_times(simple_mapping(w, arch), arch)
        assert stages.synops_us == 0.0
        assert stages.synmem_us == 0.0
        assert stages.link_us == 0.0
        assert stages.dendops_us == 10 / arch.rates.dendops_rate

    def test_doubling_cores_never_increases_dendops(self):
        arch = strip_arch(8)
        w = chain_workload((16, 0.0), (16, 0.0))
        narrow = stage_times(simple_mapping(w, arch, extra=(0, 0)), arch)
        wide = stage_times(simple_mapping(w, arch, extra=(1, 1)), arch)
        assert wide.dendops_us <= narrow.dendops_us

    def test_synops_scale_with_incoming_activity(self):
        arch = strip_arch(4)
        quiet = chain_workload((100, 0.9), (10, 0.0), input_size=0)
        loud = chain_workload((100, 0.0), (10, 0.0), input_size=0)
        s_quiet = stage_times(simple_mapping(quiet, arch), arch)
        s_loud = stage_times(simple_mapping(loud, arch), arch)
        assert s_loud.synops_us == pytest.approx(10 * s_quiet.synops_us)


class TestEvaluate:
    def test_noise_free_is_deterministic(self):
        w = generate_sparse_mlp(MlpSpec(name="sparsemlp-1"))
        minima = minimum_partitioning(w, DEFAULT_ARCH)
        mapping = build_mapping(min_plus_k(w, DEFAULT_ARCH, 2, minima=minima),
                                identity_placement(DEFAULT_ARCH), w, DEFAULT_ARCH,
                                minima=minima)
        assert evaluate(mapping, DEFAULT_ARCH) == evaluate(mapping, DEFAULT_ARCH)

    def test_latency_at_least_barrier(self):
        arch = strip_arch(4)
        w = chain_workload((4, 1.0), input_size=0, input_activity=0.0)
        report = evaluate(simple_mapping(w, arch), arch)
        assert report.latency_us >= arch.rates.barrier_overhead_us

    def test_noise_produces_spread_across_placements(self):
        w = generate_sparse_mlp(MlpSpec(name="sparsemlp-1"))
        minima = minimum_partitioning(w, DEFAULT_ARCH)
        x = min_plus_k(w, DEFAULT_ARCH, 2, minima=minima)
        rng = np.random.default_rng(11)
        latencies = []
        for index in range(50):
            omega = random_placement(DEFAULT_ARCH, rng)
            mapping = build_mapping(x, omega, w, DEFAULT_ARCH, minima=minima)
            report = evaluate(mapping, DEFAULT_ARCH, noise=NoiseConfig(sigma=0.05),
                              seed=index)
            latencies.append(report.latency_us)
        assert max(latencies) - min(latencies) > 0.0
        assert len(set(latencies)) > 10

    def test_noise_bounded_by_three_sigma(self):
        arch = strip_arch(4)
        w = chain_workload((10, 0.5), (10, 0.5))
        mapping = simple_mapping(w, arch)
        base = evaluate(mapping, arch).latency_us
        sigma = 0.05
        for seed in range(200):
            noisy = evaluate(mapping, arch, noise=NoiseConfig(sigma=sigma), seed=seed)
            assert abs(noisy.latency_us / base - 1.0) <= 3.0 * sigma + 1e-12

    def test_router_local_relabel_keeps_latency(self):
        arch = build_architecture(ArchitectureSpec(mesh_width=2, mesh_height=2))
        w = chain_workload((40, 0.3), (40, 0.3), (20, 0.1))
        mapping = simple_mapping(w, arch)
        order = list(mapping.placement.order)
        a = order.index(next(c for c in arch.usable_cores if c.c == 1))
        router = order[a].router()
        b = order.index(next(c for c in arch.usable_cores
                             if c.router() == router and c.c == 2))
        order[a], order[b] = order[b], order[a]
        relabeled = simple_mapping(w, arch, order=order)
        assert evaluate(relabeled, arch).latency_us == pytest.approx(
            evaluate(mapping, arch).latency_us)


class TestEnergyPower:
    def _mapping(self):
        w = generate_sparse_mlp(MlpSpec(name="sparsemlp-1"))
        minima = minimum_partitioning(w, DEFAULT_ARCH)
        return build_mapping(min_plus_k(w, DEFAULT_ARCH, 2, minima=minima),
                             identity_placement(DEFAULT_ARCH), w, DEFAULT_ARCH,
                             minima=minima)

    def test_energy_identity(self):
        report = evaluate(self._mapping(), DEFAULT_ARCH)
        assert report.energy_per_step_uj == pytest.approx(
            report.power_w * report.latency_us, rel=1e-9)

    def test_zero_dynamic_coefficients_leave_static_times_latency(self):
        mapping = self._mapping()
        rates = replace(DEFAULT_ARCH.rates, e_synop_j=0.0, e_packet_hop_j=0.0,
                        e_neuron_update_j=0.0)
        power, energy = energy_power(mapping, DEFAULT_ARCH, 10.0, rates=rates)
        assert energy == pytest.approx(power * 10.0)
        assert power == pytest.approx(
            DEFAULT_ARCH.rates.chip_idle_power_w * mapping.used_cores() / 152)

    def test_lower_latency_lowers_energy(self):
        mapping = self._mapping()
        _, fast = energy_power(mapping, DEFAULT_ARCH, 10.0)
        _, slow = energy_power(mapping, DEFAULT_ARCH, 20.0)
        assert fast < slow

    def test_more_cores_more_power_at_equal_latency(self):
        w = generate_sparse_mlp(MlpSpec(name="sparsemlp-1"))
        minima = minimum_partitioning(w, DEFAULT_ARCH)
        narrow = build_mapping(min_plus_k(w, DEFAULT_ARCH, 0, minima=minima),
                               identity_placement(DEFAULT_ARCH), w, DEFAULT_ARCH,
                               minima=minima)
        wide = build_mapping(min_plus_k(w, DEFAULT_ARCH, 4, minima=minima),
                             identity_placement(DEFAULT_ARCH), w, DEFAULT_ARCH,
                             minima=minima)
        p_narrow, _ = energy_power(narrow, DEFAULT_ARCH, 30.0)
        p_wide, _ = energy_power(wide, DEFAULT_ARCH, 30.0)
        assert p_wide > p_narrow
