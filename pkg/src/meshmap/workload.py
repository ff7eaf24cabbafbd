"""Layered workloads, per-core resource accounting, and benchmark generators.

A workload is an ordered list of layers; layer i feeds layer i+1 densely up to
the stated weight sparsity. Resource accounting answers one question per layer:
what does one core need if the layer is split uniformly (natural neuron order)
across a given number of cores, and how few cores make that split fit.

Rounding discipline: the nonzero-synapse count uses round-half-up; every
per-core split uses ceiling, so capacity is never understated.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .arch import Architecture

DEFAULT_STATE_WORDS_PER_NEURON = 2
DEFAULT_WEIGHT_WORDS_PER_SYNAPSE = 1
SPIKE_BUFFER_BITS_PER_WORD = 32


class WorkloadError(ValueError):
    """Raised for malformed workload descriptions."""


class InfeasibleWorkloadError(RuntimeError):
    """Raised when some layer cannot fit the substrate at any core count."""


def round_half_up(value: float) -> int:
    return math.floor(value + 0.5)


@dataclass(frozen=True)
class Layer:
    """One layer: output neurons, dense fan-in, and sparsity/footprint metadata.

    ``weight_sparsity`` is the zero fraction of the incoming weight matrix;
    ``activation_sparsity`` the expected inactive fraction of this layer's own
    outputs per step.
    """

    neurons: int
    fan_in: int
    weight_sparsity: float = 0.0
    activation_sparsity: float = 0.0
    state_words_per_neuron: int = DEFAULT_STATE_WORDS_PER_NEURON
    weight_words_per_synapse: int = DEFAULT_WEIGHT_WORDS_PER_SYNAPSE

    def __post_init__(self):
        if self.neurons <= 0:
            raise WorkloadError("layer neurons must be > 0")
        if self.fan_in < 0:
            raise WorkloadError("layer fan_in must be >= 0")
        if not 0.0 <= self.weight_sparsity < 1.0:
            raise WorkloadError("weight_sparsity must lie in [0, 1)")
        if not 0.0 <= self.activation_sparsity <= 1.0:
            raise WorkloadError("activation_sparsity must lie in [0, 1]")

    def nonzero_synapses(self) -> int:
        return round_half_up(self.neurons * self.fan_in * (1.0 - self.weight_sparsity))

    def active_neurons(self) -> int:
        """Upper bound on active outputs per step."""
        return math.ceil(self.neurons * (1.0 - self.activation_sparsity))


@dataclass(frozen=True)
class Workload:
    """Ordered layers with a consistent fan-in chain."""

    layers: tuple[Layer, ...]
    name: str = "workload"
    input_size: int = 0
    input_activity: float = 1.0  # active fraction of the external input

    def __post_init__(self):
        if len(self.layers) == 0:
            raise WorkloadError("workload needs at least one layer")
        if self.layers[0].fan_in != self.input_size:
            raise WorkloadError("layer 1 fan_in must equal input_size")
        for i in range(1, len(self.layers)):
            if self.layers[i].fan_in != self.layers[i - 1].neurons:
                raise WorkloadError(
                    f"layer {i + 1} fan_in {self.layers[i].fan_in} != "
                    f"layer {i} neurons {self.layers[i - 1].neurons}")

    def __len__(self) -> int:
        return len(self.layers)

    def neuron_counts(self) -> tuple[int, ...]:
        return tuple(layer.neurons for layer in self.layers)

    def dense_parameters(self) -> int:
        return sum(layer.neurons * layer.fan_in for layer in self.layers)


@dataclass(frozen=True)
class CoreBudget:
    """Worst-core resource needs of one layer at a given split width."""

    neurons_on_core: int
    synapse_words: int
    state_words: int
    buffer_words: int

    def memory_words(self) -> int:
        return self.synapse_words + self.state_words + self.buffer_words


def core_requirements(layer: Layer, cores: int, arch: Architecture) -> CoreBudget:
    """Per-core budget for splitting ``layer`` uniformly over ``cores`` cores.

    The spike buffer sizes for the worst case of every fan-in input arriving
    in one step: ceil(fan_in / 32) one-bit slots packed into 32-bit words.
    """
    if cores < 1:
        raise WorkloadError("cores must be >= 1")
    neurons_on_core = math.ceil(layer.neurons / cores)
    synapse_words = math.ceil(layer.nonzero_synapses() / cores) * layer.weight_words_per_synapse
    state_words = neurons_on_core * layer.state_words_per_neuron
    buffer_words = math.ceil(layer.fan_in / SPIKE_BUFFER_BITS_PER_WORD)
    return CoreBudget(neurons_on_core, synapse_words, state_words, buffer_words)


def is_feasible(layer: Layer, cores: int, arch: Architecture) -> bool:
    """True iff the split respects both the neuron cap and the memory cap."""
    budget = core_requirements(layer, cores, arch)
    return (budget.neurons_on_core <= arch.max_neurons_per_core
            and budget.memory_words() <= arch.core_memory_words)


def minimum_cores(layer: Layer, arch: Architecture) -> int:
    """Smallest core count at which the layer is feasible.

    Feasibility is monotone in the core count (every budget field weakly
    shrinks as cores grow), so we bracket by doubling and finish with a
    binary search.
    """
    lo = max(1, math.ceil(layer.neurons / arch.max_neurons_per_core))
    if is_feasible(layer, lo, arch):
        return lo
    hi = lo
    while not is_feasible(layer, hi, arch):
        hi *= 2
        if hi > arch.total_cores * 2 and hi > layer.neurons:
            raise InfeasibleWorkloadError(
                f"layer with {layer.neurons} neurons and "
                f"{layer.nonzero_synapses()} synapses fits no core count "
                f"(memory cap {arch.core_memory_words} words)")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if is_feasible(layer, mid, arch):
            hi = mid
        else:
            lo = mid
    return hi


def minimum_partitioning(workload: Workload, arch: Architecture) -> tuple[int, ...]:
    """Per-layer minimum core counts; errors if the totals exceed the substrate."""
    minima = []
    for index, layer in enumerate(workload.layers):
        try:
            cores = minimum_cores(layer, arch)
        except InfeasibleWorkloadError as exc:
            raise InfeasibleWorkloadError(f"layer {index + 1}: {exc}") from exc
        if cores > arch.total_cores:
            raise InfeasibleWorkloadError(
                f"layer {index + 1} needs {cores} cores, only {arch.total_cores} usable")
        minima.append(cores)
    total = sum(minima)
    if total > arch.total_cores:
        raise InfeasibleWorkloadError(
            f"minimum partitioning needs {total} cores, only {arch.total_cores} usable")
    return tuple(minima)


# -- benchmark generators -----------------------------------------------------

# Frozen hidden-dimension lists. Dense parameter totals: 16,777,216 and
# 33,554,432, i.e. within 0.14% of the 16.8M / 33.6M targets.
SPARSE_MLP_1_DIMS = (768, 1024, 2048, 4096, 1024, 512)
SPARSE_MLP_2_DIMS = (1024, 2048, 4096, 2048, 1024, 1280, 1536, 1280, 2048, 1024, 1024, 512)
SPARSE_MLP_INPUT = 1024
SPARSE_MLP_WEIGHT_SPARSITY = 0.85
ACTIVATION_SPARSITY_FIRST = 0.15
ACTIVATION_SPARSITY_LAST = 0.80


@dataclass(frozen=True)
class MlpSpec:
    """Benchmark MLP description: a known name, or explicit dimensions."""

    name: str = ""
    input_size: int = SPARSE_MLP_INPUT
    dims: tuple[int, ...] = ()
    weight_sparsity: float = SPARSE_MLP_WEIGHT_SPARSITY
    hidden_range: tuple[int, int] | None = None


def activation_ramp(num_layers: int,
                    first: float = ACTIVATION_SPARSITY_FIRST,
                    last: float = ACTIVATION_SPARSITY_LAST) -> tuple[float, ...]:
    """Linear per-layer activation sparsity from ``first`` to ``last``."""
    if num_layers == 1:
        return (first,)
    step = (last - first) / (num_layers - 1)
    return tuple(first + step * k for k in range(num_layers))


def generate_sparse_mlp(spec: MlpSpec) -> Workload:
    """Build one of the benchmark sparse MLPs, or a custom one from explicit dims.

    SparseMLP-1: 6 layers, input 1024, output 512, hidden within [512, 4096].
    SparseMLP-2: 12 layers, input 1024, output 512, hidden within [1024, 4096].
    Both carry 85% weight sparsity and the linear activation-sparsity ramp
    from 15% (first layer) to 80% (last layer).
    """
    name = spec.name.lower().replace("_", "-")
    if name in ("sparsemlp-1", "sparse-mlp-1", "mlp-1"):
        dims, hidden_range, label = SPARSE_MLP_1_DIMS, (512, 4096), "SparseMLP-1"
    elif name in ("sparsemlp-2", "sparse-mlp-2", "mlp-2"):
        dims, hidden_range, label = SPARSE_MLP_2_DIMS, (1024, 4096), "SparseMLP-2"
    elif spec.dims:
        dims, hidden_range, label = spec.dims, spec.hidden_range, (spec.name or "custom-mlp")
    else:
        raise WorkloadError(f"unknown workload name {spec.name!r} and no explicit dims")

    if hidden_range is not None:
        lo, hi = hidden_range
        for d in dims[:-1]:
            if not lo <= d <= hi:
                raise WorkloadError(f"hidden dimension {d} outside allowed range [{lo}, {hi}]")
    ramp = activation_ramp(len(dims))
    layers = []
    fan_in = spec.input_size
    for width, act in zip(dims, ramp):
        layers.append(Layer(neurons=width, fan_in=fan_in,
                            weight_sparsity=spec.weight_sparsity,
                            activation_sparsity=act))
        fan_in = width
    return Workload(tuple(layers), name=label, input_size=spec.input_size)


# -- JSON workload file -------------------------------------------------------

_LAYER_FIELDS = {"neurons", "weight_sparsity", "activation_sparsity",
                 "state_words_per_neuron", "weight_words_per_synapse"}


def workload_to_dict(workload: Workload) -> dict:
    return {
        "name": workload.name,
        "input_size": workload.input_size,
        "input_activity": workload.input_activity,
        "layers": [
            {"neurons": layer.neurons,
             "weight_sparsity": layer.weight_sparsity,
             "activation_sparsity": layer.activation_sparsity,
             "state_words_per_neuron": layer.state_words_per_neuron,
             "weight_words_per_synapse": layer.weight_words_per_synapse}
            for layer in workload.layers],
    }


def workload_from_dict(data: dict) -> Workload:
    if not isinstance(data, dict):
        raise WorkloadError("workload file must hold a JSON object")
    unknown = set(data) - {"name", "input_size", "input_activity", "layers"}
    if unknown:
        raise WorkloadError(f"unknown workload fields: {sorted(unknown)}")
    if "layers" not in data or not data["layers"]:
        raise WorkloadError("workload file lists no layers")
    layers = []
    fan_in = int(data.get("input_size", 0))
    for i, entry in enumerate(data["layers"]):
        unknown = set(entry) - _LAYER_FIELDS
        if unknown:
            raise WorkloadError(f"layer {i + 1}: unknown fields {sorted(unknown)}")
        kwargs = {k: entry[k] for k in _LAYER_FIELDS & set(entry)}
        kwargs["neurons"] = int(kwargs["neurons"])
        layers.append(Layer(fan_in=fan_in, **kwargs))
        fan_in = layers[-1].neurons
    return Workload(tuple(layers), name=str(data.get("name", "workload")),
                    input_size=int(data.get("input_size", 0)),
                    input_activity=float(data.get("input_activity", 1.0)))


def save_workload(workload: Workload, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(workload_to_dict(workload), fh, indent=2)
        fh.write("\n")


def load_workload(path: str) -> Workload:
    with open(path, "r", encoding="utf-8") as fh:
        return workload_from_dict(json.load(fh))


def slice_layers(workload: Workload, start: int, stop: int, name: str | None = None) -> Workload:
    """Contiguous sub-workload covering layers ``start``..``stop-1`` (0-based).

    The slice's input is whatever feeds its first layer, so fan-in chains and
    input activity stay consistent with the parent workload.
    """
    if not 0 <= start < stop <= len(workload.layers):
        raise WorkloadError(f"invalid layer slice [{start}, {stop})")
    layers = workload.layers[start:stop]
    if start == 0:
        input_size = workload.input_size
        input_activity = workload.input_activity
    else:
        prev = workload.layers[start - 1]
        input_size = prev.neurons
        input_activity = 1.0 - prev.activation_sparsity
    return Workload(layers, name=name or f"{workload.name}[{start}:{stop}]",
                    input_size=input_size, input_activity=input_activity)
