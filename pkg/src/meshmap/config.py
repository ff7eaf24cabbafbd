"""Run configuration: one JSON file describing workload, substrate, operators,
evolution settings, and model rates/noise.

Sections (all optional except workload):

    workload:     {"name": "sparsemlp-1"} or {"file": "path.json"}
    architecture: {"file": "path.json"} or an inline architecture object
    operators:    {"partitioning": {...}, "placement": {...}}
    es:           {lambda_part, lambda_place, budget, elitist_partitioning,
                   use_reordering, seed, strategy, k_init, charge_init_to_budget}
    model:        {"rates": {...field overrides...}, "noise": {"sigma": s}}

Relative file paths resolve against the config file's directory. Unknown
fields anywhere are rejected, with the failing field path in the message.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

from .arch import (Architecture, ConfigurationError, ModelRates, build_architecture,
                   default_spec, spec_from_dict, spec_to_dict)
from .evolution import ConfigError, EsConfig
from .fitness import NoiseConfig
from .operators import PartitionMutationParams, PlacementMutationParams
from .workload import (MlpSpec, Workload, WorkloadError, generate_sparse_mlp,
                       load_workload, workload_from_dict, workload_to_dict)

_TOP_FIELDS = {"workload", "architecture", "operators", "es", "model"}
_ES_FIELDS = {"lambda_part", "lambda_place", "budget", "elitist_partitioning",
              "use_reordering", "seed", "strategy", "k_init", "charge_init_to_budget"}
_PART_OP_FIELDS = {"p_mut", "p_add", "delta_max"}
_PLACE_OP_FIELDS = {"p_swap", "p_inverse", "alpha"}
_RATE_FIELDS = set(ModelRates.__dataclass_fields__)


@dataclass
class RunConfig:
    """Everything one run needs, resolved and validated."""

    workload: Workload
    arch: Architecture
    es: EsConfig
    source: dict

    def echo_dict(self) -> dict:
        """Fully resolved config for reproducibility output."""
        return {
            "workload": workload_to_dict(self.workload),
            "architecture": spec_to_dict(self.arch.spec),
            "operators": {
                "partitioning": {
                    "p_mut": self.es.partition_params.p_mut,
                    "p_add": self.es.partition_params.p_add,
                    "delta_max": self.es.partition_params.delta_max,
                },
                "placement": {
                    "p_swap": self.es.placement_params.p_swap,
                    "p_inverse": self.es.placement_params.p_inverse,
                    "alpha": self.es.placement_params.alpha,
                },
            },
            "es": {
                "lambda_part": self.es.lambda_part,
                "lambda_place": self.es.lambda_place,
                "budget": self.es.budget,
                "elitist_partitioning": self.es.elitist_partitioning,
                "use_reordering": self.es.use_reordering,
                "seed": self.es.seed,
                "strategy": self.es.strategy,
                "k_init": self.es.k_init,
                "charge_init_to_budget": self.es.charge_init_to_budget,
            },
            "model": {"rates": {k: getattr(self.arch.rates, k) for k in sorted(_RATE_FIELDS)},
                      "noise": {"sigma": self.es.noise.sigma}},
        }


def _reject_unknown(section: dict, allowed: set, path: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"{path}: unknown fields {unknown}")


def _load_workload_section(section, base_dir: str) -> Workload:
    if not isinstance(section, dict):
        raise ConfigError("workload: must be an object")
    if "file" in section:
        _reject_unknown(section, {"file"}, "workload")
        return load_workload(os.path.join(base_dir, section["file"]))
    if "layers" in section:
        return workload_from_dict(section)
    if "name" in section:
        _reject_unknown(section, {"name"}, "workload")
        return generate_sparse_mlp(MlpSpec(name=section["name"]))
    raise ConfigError("workload: needs 'name', 'file', or inline 'layers'")


def _load_arch_section(section, base_dir: str):
    if section is None:
        return default_spec()
    if not isinstance(section, dict):
        raise ConfigError("architecture: must be an object")
    if "file" in section:
        _reject_unknown(section, {"file"}, "architecture")
        with open(os.path.join(base_dir, section["file"]), "r", encoding="utf-8") as fh:
            return spec_from_dict(json.load(fh))
    return spec_from_dict(section)


def config_from_dict(data: dict, base_dir: str = ".") -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: must be a JSON object")
    _reject_unknown(data, _TOP_FIELDS, "config")
    if "workload" not in data:
        raise ConfigError("config: missing 'workload' section")

    try:
        workload = _load_workload_section(data["workload"], base_dir)
        arch_spec = _load_arch_section(data.get("architecture"), base_dir)
    except WorkloadError as exc:
        raise ConfigError(f"workload: {exc}") from exc
    except ConfigurationError as exc:
        raise ConfigError(f"architecture: {exc}") from exc

    model = data.get("model", {})
    _reject_unknown(model, {"rates", "noise"}, "model")
    if "rates" in model:
        _reject_unknown(model["rates"], _RATE_FIELDS, "model.rates")
        arch_spec = replace(arch_spec, rates=replace(
            arch_spec.rates, **{k: float(v) for k, v in model["rates"].items()}))
    noise = NoiseConfig()
    if "noise" in model:
        _reject_unknown(model["noise"], {"sigma"}, "model.noise")
        noise = NoiseConfig(sigma=float(model["noise"].get("sigma", 0.0)))

    operators = data.get("operators", {})
    _reject_unknown(operators, {"partitioning", "placement"}, "operators")
    part_section = operators.get("partitioning", {})
    _reject_unknown(part_section, _PART_OP_FIELDS, "operators.partitioning")
    place_section = operators.get("placement", {})
    _reject_unknown(place_section, _PLACE_OP_FIELDS, "operators.placement")

    es_section = data.get("es", {})
    _reject_unknown(es_section, _ES_FIELDS, "es")

    try:
        arch = build_architecture(arch_spec)
        es = EsConfig(
            partition_params=PartitionMutationParams(**part_section),
            placement_params=PlacementMutationParams(**place_section),
            noise=noise,
            **es_section)
    except ConfigurationError as exc:
        raise ConfigError(f"architecture: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return RunConfig(workload=workload, arch=arch, es=es, source=data)


def load_config(path: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return config_from_dict(data, base_dir=os.path.dirname(os.path.abspath(path)))
