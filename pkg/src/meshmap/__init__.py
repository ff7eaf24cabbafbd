"""meshmap: evolutionary partitioning and placement of layered sparse
workloads onto 2D-mesh spatial accelerators, driven by an analytical
stage-time fitness model."""

__version__ = "0.1.0"

from .arch import (Architecture, ArchitectureSpec, CoreLocation, InterChipLink,
                   Link, ModelRates, build_architecture, default_spec)
from .evolution import EsConfig, RunResult, TraceEvent, evolve, evolve_chipwise, run_strategy
from .fitness import FitnessReport, NoiseConfig, StageTimes, evaluate
from .genome import (Mapping, PartitioningGenotype, PlacementGenotype, build_mapping,
                     count_partitionings, count_placements)
from .heuristics import ALL_HEURISTICS, PlacementHeuristic, heuristic_placement, min_plus_k
from .operators import (PartitionMutationParams, PlacementMutationParams,
                        mutate_partitioning, mutate_placement, reorder_placement)
from .workload import (CoreBudget, Layer, MlpSpec, Workload, generate_sparse_mlp,
                       is_feasible, minimum_partitioning)

__all__ = [
    "Architecture", "ArchitectureSpec", "CoreLocation", "InterChipLink", "Link",
    "ModelRates", "build_architecture", "default_spec",
    "EsConfig", "RunResult", "TraceEvent", "evolve", "evolve_chipwise", "run_strategy",
    "FitnessReport", "NoiseConfig", "StageTimes", "evaluate",
    "Mapping", "PartitioningGenotype", "PlacementGenotype", "build_mapping",
    "count_partitionings", "count_placements",
    "ALL_HEURISTICS", "PlacementHeuristic", "heuristic_placement", "min_plus_k",
    "PartitionMutationParams", "PlacementMutationParams",
    "mutate_partitioning", "mutate_placement", "reorder_placement",
    "CoreBudget", "Layer", "MlpSpec", "Workload", "generate_sparse_mlp",
    "is_feasible", "minimum_partitioning",
]
