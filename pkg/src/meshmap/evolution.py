"""Nested bilevel (1+lambda) evolution of partitioning and placement.

Each generation runs two stages against a shared evaluation budget. The
partitioning stage mutates the core-allocation genotype and re-evaluates each
offspring with a placement aligned to it (the reordering transfer), keeping
the winner's placement. The placement stage then mutates that placement under
the fixed new partitioning. The partitioning stage can be made non-elitist
for ablation; the placement stage is always elitist.

Budget, traces, and randomness are engineered for exact reproducibility: all
random streams derive from (seed, purpose, generation, offspring index), so a
generation's offspring may be evaluated concurrently and still commit trace
events in a deterministic order.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .arch import Architecture, ArchitectureSpec, CoreLocation, build_architecture
from .fitness import FitnessReport, NoiseConfig, evaluate
from .genome import (Mapping, PartitioningGenotype, PlacementGenotype,
                     build_mapping, validate)
from .heuristics import (ALL_HEURISTICS, BudgetError, heuristic_placement,
                         max_feasible_k, min_plus_k, random_placement)
from .operators import (PartitionMutationParams, PlacementMutationParams,
                        mutate_partitioning, mutate_placement, reorder_placement)
from .workload import InfeasibleWorkloadError, Workload, minimum_partitioning, slice_layers

log = logging.getLogger("meshmap.evolution")

LEVEL_INIT = "init"
LEVEL_PARTITIONING = "partitioning"
LEVEL_PLACEMENT = "placement"

STRATEGIES = ("single", "global", "chipwise")

# stream tags for seed derivation
_TAG_INIT = 0
_TAG_PART = 1
_TAG_PLACE = 2
_TAG_NOISE = 3
_TAG_SEGMENT = 4

_RESAMPLE_CAP = 10


class ConfigError(ValueError):
    """Raised for invalid evolution configurations."""


@dataclass(frozen=True)
class EsConfig:
    lambda_part: int = 4
    lambda_place: int = 4
    budget: int = 125
    elitist_partitioning: bool = True
    use_reordering: bool = True
    seed: int = 0
    strategy: str = "single"
    k_init: int = 2
    charge_init_to_budget: bool = True
    partition_params: PartitionMutationParams = field(default_factory=PartitionMutationParams)
    placement_params: PlacementMutationParams = field(default_factory=PlacementMutationParams)
    noise: NoiseConfig = field(default_factory=NoiseConfig)

    def __post_init__(self):
        if self.lambda_part < 1 or self.lambda_place < 1:
            raise ConfigError("lambda_part and lambda_place must be >= 1")
        if self.budget < self.lambda_part + self.lambda_place:
            raise ConfigError("budget must cover at least one full generation")
        if self.charge_init_to_budget and self.budget < 5:
            raise ConfigError("budget must cover the 5 initialization evaluations")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}")
        if self.k_init < 0:
            raise ConfigError("k_init must be >= 0")


@dataclass(frozen=True)
class TraceEvent:
    eval_index: int
    generation: int
    level: str
    latency_us: float
    accepted: bool
    best_so_far_us: float


@dataclass
class RunResult:
    """Best mapping found plus its noise-free evaluation and the full trace."""

    best_mapping: Mapping
    best_report: FitnessReport
    trace: list[TraceEvent]
    config: EsConfig
    minima: tuple[int, ...]

    @property
    def best_latency_us(self) -> float:
        return self.best_report.latency_us


def _derive_rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *key]))


def _derive_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([seed, *key]).generate_state(1)[0])


class _Engine:
    """Run state: budget accounting, trace log, incumbent, and best-ever.

    ``pair_evaluator`` maps (partitioning, placement, noise seed) to a
    FitnessReport; the default evaluates the pair as a standalone mapping.
    The chip-wise strategy substitutes an evaluator that scores the pair
    inside the full multi-chip system.
    """

    def __init__(self, workload: Workload, arch: Architecture, cfg: EsConfig,
                 on_event=None, max_workers: int = 1, pair_evaluator=None):
        self.workload = workload
        self.arch = arch
        self.cfg = cfg
        self.on_event = on_event
        self.max_workers = max(1, max_workers)
        self.minima = minimum_partitioning(workload, arch)
        self.trace: list[TraceEvent] = []
        self.eval_index = 0
        self.charged = 0
        self.best_ever: tuple[float, PartitioningGenotype, PlacementGenotype] | None = None
        self.parent_x: PartitioningGenotype | None = None
        self.parent_omega: PlacementGenotype | None = None
        self.parent_latency = float("inf")
        self.pair_evaluator = pair_evaluator or self._evaluate_standalone

    def _evaluate_standalone(self, x: PartitioningGenotype, omega: PlacementGenotype,
                             seed: int) -> FitnessReport:
        mapping = build_mapping(x, omega, self.workload, self.arch, minima=self.minima)
        return evaluate(mapping, self.arch, noise=self.cfg.noise, seed=seed)

    # -- budget ----------------------------------------------------------

    def remaining(self) -> int:
        return self.cfg.budget - self.charged

    # -- evaluation ------------------------------------------------------

    def _evaluate_batch(self, pairs: list[tuple[PartitioningGenotype, PlacementGenotype]]
                        ) -> list[FitnessReport]:
        """Evaluate candidates, charge the budget, and stage trace events in
        candidate order regardless of completion order."""
        first_index = self.eval_index + 1
        seeds = [_derive_seed(self.cfg.seed, _TAG_NOISE, first_index + i)
                 for i in range(len(pairs))]

        def run(args):
            (x, omega), seed = args
            return self.pair_evaluator(x, omega, seed)

        if self.max_workers > 1 and len(pairs) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                reports = list(pool.map(run, zip(pairs, seeds)))
        else:
            reports = [run(args) for args in zip(pairs, seeds)]

        for (x, omega), report in zip(pairs, reports):
            self.eval_index += 1
            self.charged += 1
            if self.best_ever is None or report.latency_us < self.best_ever[0]:
                self.best_ever = (report.latency_us, x, omega)
        self._pending = list(zip(pairs, reports, range(first_index, self.eval_index + 1)))
        return reports

    def _commit_events(self, level: str, generation: int,
                       accepted_flags: list[bool]) -> None:
        horizon = self.parent_latency
        for ((_, _), report, index), accepted in zip(self._pending, accepted_flags):
            horizon = min(horizon, report.latency_us)
            event = TraceEvent(eval_index=index, generation=generation, level=level,
                               latency_us=report.latency_us, accepted=accepted,
                               best_so_far_us=horizon)
            self.trace.append(event)
            if self.on_event is not None:
                self.on_event(event)
        self._pending = []

    # -- stages ------------------------------------------------------------

    def initialize(self) -> None:
        """Evaluate the min+k partitioning under the four fill heuristics plus
        one random placement; the argmin becomes the initial parent (ties fall
        to the earliest candidate)."""
        cfg = self.cfg
        k = cfg.k_init
        try:
            x0 = min_plus_k(self.workload, self.arch, k, minima=self.minima)
        except BudgetError:
            k = max_feasible_k(self.workload, self.arch, minima=self.minima)
            log.warning("min+%d infeasible, falling back to min+%d", cfg.k_init, k)
            x0 = min_plus_k(self.workload, self.arch, k, minima=self.minima)

        candidates = [heuristic_placement(h, self.arch) for h in ALL_HEURISTICS]
        candidates.append(random_placement(self.arch, _derive_rng(cfg.seed, _TAG_INIT)))
        pairs = [(x0, omega) for omega in candidates]
        reports = self._evaluate_batch(pairs)
        if not cfg.charge_init_to_budget:
            self.charged -= len(pairs)

        best = min(range(len(reports)), key=lambda i: reports[i].latency_us)
        accepted, incumbent = [], float("inf")
        for report in reports:
            accepted.append(report.latency_us < incumbent)
            incumbent = min(incumbent, report.latency_us)
        self.parent_x = x0
        self.parent_omega = candidates[best]
        self._commit_events(LEVEL_INIT, 0, accepted)
        self.parent_latency = reports[best].latency_us

    def partitioning_step(self, generation: int) -> None:
        """Mutate the partitioning up to lambda_part times, align each
        offspring's placement, select, and keep the winner's placement."""
        cfg = self.cfg
        count = min(cfg.lambda_part, self.remaining())
        if count <= 0:
            return
        pairs = []
        for idx in range(count):
            rng = _derive_rng(cfg.seed, _TAG_PART, generation, idx)
            child_x = None
            for _ in range(_RESAMPLE_CAP):
                candidate = mutate_partitioning(self.parent_x, cfg.partition_params, rng)
                bad = [v for v in validate(candidate, self.parent_omega, self.workload,
                                           self.arch, self.minima)
                       if v.startswith("layer")]
                if not bad:
                    child_x = candidate
                    break
            if child_x is None:
                log.warning("generation %d: partitioning offspring %d infeasible "
                            "after %d resamples, skipped", generation, idx, _RESAMPLE_CAP)
                continue
            if cfg.use_reordering:
                child_omega = reorder_placement(self.parent_omega, self.parent_x,
                                                child_x, self.minima)
            else:
                # ablation baseline: re-cut layer blocks from the raw permutation
                child_omega = self.parent_omega
            pairs.append((child_x, child_omega))

        if not pairs:
            if not cfg.elitist_partitioning:
                log.warning("generation %d: no feasible partitioning offspring, "
                            "parent kept despite non-elitist selection", generation)
            return
        reports = self._evaluate_batch(pairs)

        best = min(range(len(reports)), key=lambda i: reports[i].latency_us)
        if cfg.elitist_partitioning and self.parent_latency <= reports[best].latency_us:
            winner = None  # parent retained
        else:
            winner = best
        self._commit_events(LEVEL_PARTITIONING, generation,
                            [i == winner for i in range(len(reports))])
        if winner is not None:
            self.parent_x, self.parent_omega = pairs[winner]
            self.parent_latency = reports[winner].latency_us

    def placement_step(self, generation: int) -> None:
        """Mutate the placement up to lambda_place times under the fixed
        partitioning; elitist selection always applies at this level."""
        cfg = self.cfg
        count = min(cfg.lambda_place, self.remaining())
        if count <= 0:
            return
        used = self.parent_x.used_cores(self.minima)
        pairs = []
        for idx in range(count):
            rng = _derive_rng(cfg.seed, _TAG_PLACE, generation, idx)
            child = mutate_placement(self.parent_omega, used, cfg.placement_params, rng)
            pairs.append((self.parent_x, child))
        reports = self._evaluate_batch(pairs)

        best = min(range(len(reports)), key=lambda i: reports[i].latency_us)
        winner = best if reports[best].latency_us < self.parent_latency else None
        self._commit_events(LEVEL_PLACEMENT, generation,
                            [i == winner for i in range(len(reports))])
        if winner is not None:
            self.parent_omega = pairs[winner][1]
            self.parent_latency = reports[winner].latency_us

    # -- result ------------------------------------------------------------

    def result(self) -> RunResult:
        _, best_x, best_omega = self.best_ever
        mapping = build_mapping(best_x, best_omega, self.workload, self.arch,
                                minima=self.minima)
        report = evaluate(mapping, self.arch)  # noise-free reference evaluation
        return RunResult(best_mapping=mapping, best_report=report,
                         trace=self.trace, config=self.cfg, minima=self.minima)


def initialize(workload: Workload, arch: Architecture, cfg: EsConfig,
               on_event=None) -> tuple[PartitioningGenotype, PlacementGenotype, list[TraceEvent]]:
    """Standalone initialization: returns the chosen parent pair and its trace."""
    engine = _Engine(workload, arch, cfg, on_event=on_event)
    engine.initialize()
    return engine.parent_x, engine.parent_omega, engine.trace


def _run_generations(engine: _Engine) -> None:
    engine.initialize()
    generation = 1
    while engine.remaining() > 0:
        engine.partitioning_step(generation)
        if engine.remaining() > 0:
            engine.placement_step(generation)
        generation += 1


def evolve(workload: Workload, arch: Architecture, cfg: EsConfig,
           on_event=None, max_workers: int = 1) -> RunResult:
    """Run the nested strategy until the evaluation budget is exhausted.

    Alternates partitioning and placement stages after the 5-evaluation
    initialization; final generations may be partial. Deterministic for a
    fixed (config, seed), including under concurrent offspring evaluation.
    """
    engine = _Engine(workload, arch, cfg, on_event=on_event, max_workers=max_workers)
    _run_generations(engine)
    return engine.result()


# -- multi-chip strategies ----------------------------------------------------


@dataclass(frozen=True)
class WorkloadSegment:
    """A contiguous layer range assigned to one chip."""

    start: int
    stop: int
    chip: int
    workload: Workload
    min_cores: int


def segment_workload(workload: Workload, arch: Architecture,
                     n_chips: int) -> list[WorkloadSegment]:
    """Split the layers into contiguous per-chip segments.

    Chooses the split minimizing the largest per-segment minimum-core total
    (ties: most even split by sum of squares) via dynamic programming, then
    checks each segment fits its chip.
    """
    num_layers = len(workload.layers)
    if n_chips < 1:
        raise ConfigError("n_chips must be >= 1")
    if n_chips > num_layers:
        raise InfeasibleWorkloadError(
            f"cannot split {num_layers} layers into {n_chips} non-empty segments")
    minima = minimum_partitioning(workload, arch)
    prefix = [0]
    for m in minima:
        prefix.append(prefix[-1] + m)

    def seg_sum(a: int, b: int) -> int:
        return prefix[b] - prefix[a]

    INF = (float("inf"), float("inf"))
    best: dict[tuple[int, int], tuple] = {(0, 0): (0, 0)}
    choice: dict[tuple[int, int], int] = {}
    for k in range(1, n_chips + 1):
        for i in range(k, num_layers + 1):
            best_cost, best_j = INF, None
            for j in range(k - 1, i):
                prev = best.get((j, k - 1))
                if prev is None:
                    continue
                s = seg_sum(j, i)
                cost = (max(prev[0], s), prev[1] + s * s)
                if cost < best_cost:
                    best_cost, best_j = cost, j
            if best_j is not None:
                best[(i, k)] = best_cost
                choice[(i, k)] = best_j

    if (num_layers, n_chips) not in best:
        raise InfeasibleWorkloadError("no feasible contiguous segmentation")
    bounds = [num_layers]
    k = n_chips
    while k > 0:
        bounds.append(choice[(bounds[-1], k)])
        k -= 1
    bounds.reverse()

    segments = []
    for chip, (a, b) in enumerate(zip(bounds[:-1], bounds[1:])):
        cores = seg_sum(a, b)
        chip_capacity = arch.usable_on_chip(chip)
        if cores > chip_capacity:
            raise InfeasibleWorkloadError(
                f"segment layers {a + 1}..{b} needs {cores} cores, chip {chip} "
                f"has {chip_capacity}")
        segments.append(WorkloadSegment(
            start=a, stop=b, chip=chip,
            workload=slice_layers(workload, a, b, name=f"{workload.name}#chip{chip}"),
            min_cores=cores))
    return segments


def _restrict_to_chip(arch: Architecture, chip: int) -> Architecture:
    """The same substrate with every core outside ``chip`` disabled."""
    extra_disabled = [
        CoreLocation(other, x, y, c)
        for other in range(arch.chips) if other != chip
        for x in range(arch.mesh_width)
        for y in range(arch.mesh_height)
        for c in range(1, arch.cores_per_router + 1)]
    spec = arch.spec
    disabled = tuple(spec.disabled_cores) + tuple(
        d for d in extra_disabled if d not in arch.disabled)
    return build_architecture(ArchitectureSpec(
        chips=spec.chips, mesh_width=spec.mesh_width, mesh_height=spec.mesh_height,
        cores_per_router=spec.cores_per_router, disabled_cores=disabled,
        max_neurons_per_core=spec.max_neurons_per_core,
        core_memory_words=spec.core_memory_words,
        interchip_hop_penalty=spec.interchip_hop_penalty,
        rates=spec.rates, interchip_links=spec.interchip_links))


def split_budget(budget: int, weights: list[int]) -> list[int]:
    """Integer budget split proportional to weights; remainder to the largest."""
    total = sum(weights)
    shares = [budget * w // total for w in weights]
    remainder = budget - sum(shares)
    shares[max(range(len(weights)), key=lambda i: weights[i])] += remainder
    return shares


def _combine_segments(workload: Workload, arch: Architecture, minima: tuple[int, ...],
                      segments: list[WorkloadSegment],
                      states: list[tuple[PartitioningGenotype, PlacementGenotype]]
                      ) -> Mapping:
    """Stitch per-segment genotypes into one full-system mapping."""
    order: list[CoreLocation] = []
    extra: list[int] = []
    for seg, (x, omega) in zip(segments, states):
        seg_minima = minima[seg.start:seg.stop]
        cursor = 0
        for cores in x.cores_per_layer(seg_minima):
            order.extend(omega.order[cursor:cursor + cores])
            cursor += cores
        extra.extend(x.extra)
    used = set(order)
    order.extend(core for core in arch.usable_cores if core not in used)
    combined_x = PartitioningGenotype(tuple(extra),
                                      arch.total_cores - sum(minima) - sum(extra))
    return build_mapping(combined_x, PlacementGenotype(tuple(order)),
                         workload, arch, minima=minima)


def evolve_chipwise(workload: Workload, arch: Architecture, cfg: EsConfig,
                    on_event=None, max_workers: int = 1) -> RunResult:
    """Divide-and-conquer multi-chip strategy.

    The layers are segmented across chips, and each segment runs its own
    nested search over its chip's cores only, on a budget share proportional
    to its minimum core demand. Every candidate is scored in the context of
    the full system (the other segments pinned at their current state, later
    ones at their structured initial mapping), mirroring in-the-loop
    measurement where a partial network cannot run alone. Segments are
    optimized in layer order, each seeding its own reproducible stream.
    """
    segments = segment_workload(workload, arch, arch.chips)
    if len(segments) == 1:
        return evolve(workload, arch, cfg, on_event=on_event, max_workers=max_workers)
    budgets = split_budget(cfg.budget, [seg.min_cores for seg in segments])
    minima = minimum_partitioning(workload, arch)

    sub_arches = [_restrict_to_chip(arch, seg.chip) for seg in segments]
    states: list[tuple[PartitioningGenotype, PlacementGenotype]] = []
    for seg, sub_arch in zip(segments, sub_arches):
        seg_minima = minima[seg.start:seg.stop]
        k = min(cfg.k_init, max_feasible_k(seg.workload, sub_arch, minima=seg_minima))
        states.append((min_plus_k(seg.workload, sub_arch, k, minima=seg_minima),
                       heuristic_placement(ALL_HEURISTICS[0], sub_arch)))

    trace: list[TraceEvent] = []
    offset = 0
    for index, (seg, sub_arch, sub_budget) in enumerate(zip(segments, sub_arches, budgets)):
        sub_cfg = replace(cfg, budget=sub_budget, strategy="single",
                          seed=_derive_seed(cfg.seed, _TAG_SEGMENT, seg.chip))

        def shifted(event, _offset=offset):
            moved = replace(event, eval_index=event.eval_index + _offset)
            trace.append(moved)
            if on_event is not None:
                on_event(moved)

        def combined_evaluator(x, omega, seed, _index=index):
            trial = list(states)
            trial[_index] = (x, omega)
            mapping = _combine_segments(workload, arch, minima, segments, trial)
            return evaluate(mapping, arch, noise=cfg.noise, seed=seed)

        engine = _Engine(seg.workload, sub_arch, sub_cfg, on_event=shifted,
                         max_workers=max_workers, pair_evaluator=combined_evaluator)
        _run_generations(engine)
        states[index] = (engine.parent_x, engine.parent_omega)
        offset += len(engine.trace)

    combined = _combine_segments(workload, arch, minima, segments, states)
    report = evaluate(combined, arch)
    return RunResult(best_mapping=combined, best_report=report, trace=trace,
                     config=cfg, minima=minima)


def run_strategy(workload: Workload, arch: Architecture, cfg: EsConfig,
                 on_event=None, max_workers: int = 1) -> RunResult:
    """Dispatch on the configured multi-chip strategy."""
    if cfg.strategy == "chipwise":
        return evolve_chipwise(workload, arch, cfg, on_event=on_event,
                               max_workers=max_workers)
    return evolve(workload, arch, cfg, on_event=on_event, max_workers=max_workers)
