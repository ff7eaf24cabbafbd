"""Analytical fitness model: traffic, stage-time bounds, latency, power, energy.

Evaluating a mapping resolves four per-step stage bounds, each an upper bound
on the time one pipeline stage needs:

* synaptic ops  - worst core's incoming active synapses / synops rate,
* synaptic mem  - worst core's touched synapse words / memory rate,
* dendrite ops  - worst core's neuron updates / update rate,
* link transfer - worst link's packet load / that link's bandwidth.

Stages overlap, so the step latency is the maximum bound plus a fixed barrier
overhead. Fitness for the optimizer is the negated latency.

Traffic model: every active source neuron emits one packet per destination
core of the next layer (multicast replicated per destination), routed XY.
Synaptic work is counted in expectation from the sparsity fractions, keeping
the model deterministic. ``simulate_exact`` recomputes link loads by walking
every single packet hop by hop with its own routing logic; it exists purely
as an independent cross-check for ``link_loads``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .arch import INTER_CHIP, Architecture, Link, ModelRates
from .genome import Mapping


class OracleSizeError(RuntimeError):
    """Raised when simulate_exact is asked to materialize too many packet-hops."""


@dataclass(frozen=True)
class NoiseConfig:
    """Multiplicative measurement noise: latency scales by (1 + eps) with
    eps ~ Normal(0, sigma) clipped to +/- 3 sigma. sigma=0 disables it."""

    sigma: float = 0.0

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("noise sigma must be >= 0")


@dataclass(frozen=True)
class StageTimes:
    synops_us: float
    synmem_us: float
    dendops_us: float
    link_us: float

    def as_dict(self) -> dict:
        return {"synops_us": self.synops_us, "synmem_us": self.synmem_us,
                "dendops_us": self.dendops_us, "link_us": self.link_us}

    def bound_us(self) -> float:
        return max(self.synops_us, self.synmem_us, self.dendops_us, self.link_us)


@dataclass(frozen=True)
class FitnessReport:
    latency_us: float
    stage_times: StageTimes
    power_w: float
    energy_per_step_uj: float
    used_cores: int
    max_link_load: int
    evaluation_seed: int | None = None

    @property
    def fitness(self) -> float:
        return -self.latency_us

    def as_dict(self) -> dict:
        return {
            "latency_us": self.latency_us,
            "stage_times": self.stage_times.as_dict(),
            "power_w": self.power_w,
            "energy_per_step_uj": self.energy_per_step_uj,
            "used_cores": self.used_cores,
            "max_link_load": self.max_link_load,
            "evaluation_seed": self.evaluation_seed,
        }


def _active_per_core(mapping: Mapping, layer_index: int) -> list[int]:
    """Active output neurons per core of a layer (ceil of the active fraction)."""
    layer = mapping.workload.layers[layer_index]
    out = []
    for lo, hi in mapping.neuron_slices[layer_index]:
        out.append(math.ceil((hi - lo) * (1.0 - layer.activation_sparsity)))
    return out


def traffic_matrix(mapping: Mapping) -> dict[tuple, int]:
    """Per-(source core, destination core) packets per step.

    Only consecutive layers exchange traffic; each source core emits its
    active-neuron count to every destination core. The output layer emits
    nothing; external input enters off-mesh and produces no link traffic.
    """
    traffic: dict[tuple, int] = {}
    for i in range(len(mapping.layer_cores) - 1):
        active = _active_per_core(mapping, i)
        dst_cores = mapping.layer_cores[i + 1]
        for src, packets in zip(mapping.layer_cores[i], active):
            if packets == 0:
                continue
            for dst in dst_cores:
                traffic[(src, dst)] = packets
    return traffic


def link_loads(mapping: Mapping, arch: Architecture) -> tuple[dict[Link, int], int]:
    """Accumulate the traffic matrix over XY routes; returns (load map, max load)."""
    loads: dict[Link, int] = {}
    for (src, dst), packets in traffic_matrix(mapping).items():
        for link in arch.route(src, dst):
            loads[link] = loads.get(link, 0) + packets
    return loads, max(loads.values(), default=0)


def simulate_exact(mapping: Mapping, arch: Architecture,
                   max_packet_hops: int = 5_000_000) -> dict[Link, int]:
    """Independent link-load oracle: walk every packet one hop at a time.

    Materializes each (source core, destination core, packet) triple
    individually and steps it across the mesh with self-contained
    dimension-order logic (x first, then y, bridges between chips). Refuses
    instances whose packet-hop volume exceeds the guard.
    """
    total_packets = 0
    for i in range(len(mapping.layer_cores) - 1):
        active = _active_per_core(mapping, i)
        total_packets += sum(active) * len(mapping.layer_cores[i + 1])
    worst_route = arch.chips * (arch.mesh_width + arch.mesh_height + 4)
    if total_packets * worst_route > max_packet_hops:
        raise OracleSizeError(
            f"instance would walk up to {total_packets * worst_route} packet-hops, "
            f"guard is {max_packet_hops}")

    loads: dict[Link, int] = {}

    def bump(src_node, dst_node, kind):
        link = Link(src_node, dst_node, kind)
        loads[link] = loads.get(link, 0) + 1

    def walk_one(src, dst):
        # leave the source core
        bump((src.chip, src.x, src.y, src.c), (src.chip, src.x, src.y), "core-router")
        chip, x, y = src.chip, src.x, src.y
        while chip != dst.chip:
            bridge = arch.bridge_between(chip, dst.chip)
            if bridge is None:
                raise RuntimeError(f"no bridge between chips {chip} and {dst.chip}")
            here = bridge.router_a() if bridge.chip_a == chip else bridge.router_b()
            there = bridge.router_b() if bridge.chip_a == chip else bridge.router_a()
            while x != here[1]:
                nx = x + (1 if here[1] > x else -1)
                bump((chip, x, y), (chip, nx, y), "router-router")
                x = nx
            while y != here[2]:
                ny = y + (1 if here[2] > y else -1)
                bump((chip, x, y), (chip, x, ny), "router-router")
                y = ny
            bump(here, there, "inter-chip")
            chip, x, y = there
        while x != dst.x:
            nx = x + (1 if dst.x > x else -1)
            bump((chip, x, y), (chip, nx, y), "router-router")
            x = nx
        while y != dst.y:
            ny = y + (1 if dst.y > y else -1)
            bump((chip, x, y), (chip, x, ny), "router-router")
            y = ny
        bump((chip, x, y), (chip, x, y, dst.c), "core-router")

    for i in range(len(mapping.layer_cores) - 1):
        active = _active_per_core(mapping, i)
        for src, packets in zip(mapping.layer_cores[i], active):
            for dst in mapping.layer_cores[i + 1]:
                if src == dst:
                    continue
                for _ in range(packets):
                    walk_one(src, dst)
    return loads


@dataclass
class _Accounting:
    """Shared intermediates of the stage and energy computations."""

    synops_per_core: dict = field(default_factory=dict)
    synmem_words_per_core: dict = field(default_factory=dict)
    total_synops: float = 0.0
    total_packet_hops: int = 0
    total_neurons: int = 0
    loads: dict = field(default_factory=dict)
    max_link_load: int = 0


def _account(mapping: Mapping, arch: Architecture) -> _Accounting:
    acc = _Accounting()
    workload = mapping.workload
    acc.total_neurons = sum(layer.neurons for layer in workload.layers)

    for i, layer in enumerate(workload.layers):
        if i == 0:
            incoming_active = math.ceil(workload.input_size * workload.input_activity)
        else:
            incoming_active = sum(_active_per_core(mapping, i - 1))
        for core, (lo, hi) in zip(mapping.layer_cores[i], mapping.neuron_slices[i]):
            # expected active synapses landing on this core per step
            synops = incoming_active * (1.0 - layer.weight_sparsity) * (hi - lo)
            acc.synops_per_core[core] = synops
            acc.synmem_words_per_core[core] = synops * layer.weight_words_per_synapse
            acc.total_synops += synops

    for (src, dst), packets in traffic_matrix(mapping).items():
        route = arch.route(src, dst)
        hops = 0
        for link in route:
            acc.loads[link] = acc.loads.get(link, 0) + packets
            if link.kind != "core-router":
                hops += 1
        acc.total_packet_hops += packets * hops
    acc.max_link_load = max(acc.loads.values(), default=0)
    return acc


def stage_times(mapping: Mapping, arch: Architecture,
                rates: ModelRates | None = None) -> StageTimes:
    """Per-stage upper-bound times in microseconds (each the worst core/link)."""
    rates = rates or arch.rates
    acc = _account(mapping, arch)
    return _stage_times_from(acc, mapping, arch, rates)


def _stage_times_from(acc: _Accounting, mapping: Mapping, arch: Architecture,
                      rates: ModelRates) -> StageTimes:
    synops_us = max(acc.synops_per_core.values(), default=0.0) / rates.synops_rate
    synmem_us = max(acc.synmem_words_per_core.values(), default=0.0) / rates.synmem_rate
    dendops_us = max(
        (hi - lo
         for slices in mapping.neuron_slices for (lo, hi) in slices),
        default=0) / rates.dendops_rate
    link_us = 0.0
    for link, load in acc.loads.items():
        bandwidth = rates.interchip_bandwidth if link.kind == INTER_CHIP else rates.link_bandwidth
        link_us = max(link_us, load / bandwidth)
    return StageTimes(synops_us, synmem_us, dendops_us, link_us)


def energy_power(mapping: Mapping, arch: Architecture, latency_us: float,
                 rates: ModelRates | None = None,
                 acc: _Accounting | None = None) -> tuple[float, float]:
    """Power draw (W) and energy per step (uJ) at the given step latency.

    Static power is the idle power of every chip the mapping touches, scaled
    by that chip's core utilization, plus an optional per-used-core term.
    Dynamic energy charges synaptic ops, packet-hops (router and chip hops,
    attach links are free), and neuron updates.
    """
    if latency_us <= 0:
        raise ValueError("latency_us must be > 0")
    rates = rates or arch.rates
    if acc is None:
        acc = _account(mapping, arch)

    used_by_chip: dict[int, int] = {}
    for block in mapping.layer_cores:
        for core in block:
            used_by_chip[core.chip] = used_by_chip.get(core.chip, 0) + 1
    static_w = sum(
        rates.chip_idle_power_w * used / arch.usable_on_chip(chip)
        for chip, used in used_by_chip.items())
    static_w += rates.static_power_per_core_w * sum(used_by_chip.values())

    dynamic_j = (rates.e_synop_j * acc.total_synops
                 + rates.e_packet_hop_j * acc.total_packet_hops
                 + rates.e_neuron_update_j * acc.total_neurons)
    power_w = static_w + dynamic_j / (latency_us * 1e-6)
    energy_uj = power_w * latency_us
    return power_w, energy_uj


def evaluate(mapping: Mapping, arch: Architecture,
             noise: NoiseConfig | None = None,
             rates: ModelRates | None = None,
             seed: int | None = None) -> FitnessReport:
    """Full evaluation: stage bounds, latency, power/energy, link peak.

    Noise-free evaluation is a pure function of (mapping, rates). With noise
    enabled, the latency multiplier is drawn from the stream seeded by
    ``seed``, which the report records.
    """
    rates = rates or arch.rates
    noise = noise or NoiseConfig()
    acc = _account(mapping, arch)
    stages = _stage_times_from(acc, mapping, arch, rates)
    latency_us = stages.bound_us() + rates.barrier_overhead_us
    if noise.sigma > 0.0:
        rng = np.random.default_rng(seed)
        eps = float(np.clip(rng.normal(0.0, noise.sigma),
                            -3.0 * noise.sigma, 3.0 * noise.sigma))
        latency_us *= (1.0 + eps)
    power_w, energy_uj = energy_power(mapping, arch, latency_us, rates, acc)
    return FitnessReport(latency_us=latency_us, stage_times=stages,
                         power_w=power_w, energy_per_step_uj=energy_uj,
                         used_cores=mapping.used_cores(),
                         max_link_load=acc.max_link_load,
                         evaluation_seed=seed if noise.sigma > 0.0 else None)
