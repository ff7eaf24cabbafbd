"""Command-line interface.

Subcommands: generate, heuristics, optimize, evaluate, render, ablate.
Every subcommand is deterministic given (args, config, seed). Run outputs go
to --out: delimited traces and reports (CSV, flushed per event so interrupted
runs keep valid partial traces), JSON artifacts, and SVG figures rendered
next to the data they summarize.

Exit codes: 0 success, 2 usage or config error, 3 infeasibility, 4 I/O error.
The MESHMAP_THREADS environment variable caps parallel fitness evaluations.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys

import numpy as np

from . import __version__
from .arch import ConfigurationError
from .config import ConfigError, RunConfig, config_from_dict, load_config
from .evolution import EsConfig, RunResult, TraceEvent, run_strategy
from .fitness import FitnessReport, NoiseConfig, evaluate
from .genome import (FeasibilityError, GenotypeError, build_mapping, load_mapping,
                     save_mapping)
from .heuristics import (ALL_HEURISTICS, BudgetError, heuristic_placement,
                         min_plus_k, random_placement)
from .render import (band_plot, convergence_plot, histogram_plot, render_mapping,
                     text_diagram)
from .workload import (InfeasibleWorkloadError, MlpSpec, WorkloadError,
                       generate_sparse_mlp, minimum_partitioning,
                       save_workload)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4

TRACE_COLUMNS = ("eval_index", "generation", "level", "latency_us", "accepted",
                 "best_so_far_us")
REPORT_COLUMNS = ("latency_us", "synops_us", "synmem_us", "dendops_us", "link_us",
                  "power_w", "energy_per_step_uj", "used_cores", "max_link_load")


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def max_workers_from_env() -> int:
    raw = os.environ.get("MESHMAP_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


class _TraceWriter:
    """Streams trace events to CSV, flushing per event for durability."""

    def __init__(self, path: str):
        self._fh = open(path, "w", encoding="utf-8", newline="")
        self._writer = csv.writer(self._fh)
        self._writer.writerow(TRACE_COLUMNS)
        self._fh.flush()

    def __call__(self, event: TraceEvent) -> None:
        self._writer.writerow((event.eval_index, event.generation, event.level,
                               _fmt(event.latency_us), str(event.accepted).lower(),
                               _fmt(event.best_so_far_us)))
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def _report_row(report: FitnessReport) -> list[str]:
    s = report.stage_times
    return [_fmt(report.latency_us), _fmt(s.synops_us), _fmt(s.synmem_us),
            _fmt(s.dendops_us), _fmt(s.link_us), _fmt(report.power_w),
            _fmt(report.energy_per_step_uj), str(report.used_cores),
            str(report.max_link_load)]


def _write_manifest(out_dir: str, args: argparse.Namespace, seed: int) -> None:
    manifest = {
        "tool": "meshmap",
        "version": __version__,
        "command": args.command,
        "config": getattr(args, "config", None),
        "output_dir": os.path.abspath(out_dir),
        "seed": seed,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _summary_text(result: RunResult, workload_name: str) -> str:
    report = result.best_report
    stages = report.stage_times
    init_events = [e for e in result.trace if e.level == "init"]
    init_best = min((e.latency_us for e in init_events), default=float("nan"))
    lines = [
        f"workload:            {workload_name}",
        f"evaluations:         {len(result.trace)}",
        f"initial best:        {_fmt(init_best)} us",
        f"final best:          {_fmt(report.latency_us)} us",
        f"improvement:         {_fmt(100.0 * (1.0 - report.latency_us / init_best))} %",
        f"used cores:          {report.used_cores}",
        f"max link load:       {report.max_link_load} packets/step",
        f"power:               {_fmt(report.power_w)} W",
        f"energy per step:     {_fmt(report.energy_per_step_uj)} uJ",
        "stage bounds (us):   "
        f"synops={_fmt(stages.synops_us)} synmem={_fmt(stages.synmem_us)} "
        f"dendops={_fmt(stages.dendops_us)} link={_fmt(stages.link_us)}",
        "cores per layer:     " + " ".join(
            str(len(block)) for block in result.best_mapping.layer_cores),
    ]
    return "\n".join(lines) + "\n"


def _best_so_far_series(trace: list[TraceEvent]) -> list[tuple[int, float]]:
    return [(e.eval_index, e.best_so_far_us) for e in trace]


def _no_improvement_fraction(trace: list[TraceEvent]) -> float:
    """Fraction of partitioning generations in which no offspring was accepted."""
    generations: dict[int, bool] = {}
    for event in trace:
        if event.level != "partitioning":
            continue
        generations[event.generation] = generations.get(event.generation, False) or event.accepted
    if not generations:
        return 0.0
    stalled = sum(1 for improved in generations.values() if not improved)
    return stalled / len(generations)


# -- subcommands ---------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    if args.dims:
        dims = tuple(int(v) for v in args.dims.split(","))
        spec = MlpSpec(name=args.name, input_size=args.input_size, dims=dims,
                       weight_sparsity=args.weight_sparsity)
    else:
        spec = MlpSpec(name=args.name)
    workload = generate_sparse_mlp(spec)
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, f"{workload.name.lower()}.json")
    save_workload(workload, path)
    print(f"{workload.name}: {len(workload)} layers, "
          f"{workload.dense_parameters():,} dense parameters")
    print(f"wrote {path}")
    return EXIT_OK


def _heuristic_table(cfg: RunConfig, k: int, seed: int):
    arch, workload = cfg.arch, cfg.workload
    minima = minimum_partitioning(workload, arch)
    partitioning = min_plus_k(workload, arch, k, minima=minima)
    rows = []
    candidates = [(h.name, heuristic_placement(h, arch)) for h in ALL_HEURISTICS]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    candidates.append(("random", random_placement(arch, rng)))
    for name, omega in candidates:
        mapping = build_mapping(partitioning, omega, workload, arch, minima=minima)
        rows.append((name, evaluate(mapping, arch)))
    rows.sort(key=lambda item: item[1].latency_us)
    return rows


def cmd_heuristics(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args)
    k = args.k if args.k is not None else cfg.es.k_init
    seed = args.seed if args.seed is not None else cfg.es.seed
    rows = _heuristic_table(cfg, k, seed)

    header = f"{'placement':24s} {'latency_us':>12s} {'used':>5s}"
    print(header)
    for name, report in rows:
        print(f"{name:24s} {report.latency_us:12.6f} {report.used_cores:5d}")

    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "heuristics.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("placement",) + REPORT_COLUMNS)
        for name, report in rows:
            writer.writerow([name] + _report_row(report))
    convergence_plot(
        {name: [(0, report.latency_us), (1, report.latency_us)] for name, report in rows},
        os.path.join(args.out, "heuristics.svg"),
        title=f"heuristic latencies, min+{k}")
    print(f"wrote {csv_path}")
    return EXIT_OK


def _run_trials(cfg: RunConfig, trials: int, out_dir: str, workers: int):
    """Run N seeded trials, streaming each trace to its own directory."""
    results = []
    for trial in range(trials):
        trial_dir = os.path.join(out_dir, f"trial_{trial:02d}")
        os.makedirs(trial_dir, exist_ok=True)
        es = EsConfig(**{**_es_kwargs(cfg.es), "seed": cfg.es.seed + trial})
        writer = _TraceWriter(os.path.join(trial_dir, "trace.csv"))
        try:
            result = run_strategy(cfg.workload, cfg.arch, es,
                                  on_event=writer, max_workers=workers)
        finally:
            writer.close()
        save_mapping(result.best_mapping, cfg.arch,
                     os.path.join(trial_dir, "best_mapping.json"),
                     fitness=result.best_report.as_dict())
        with open(os.path.join(trial_dir, "summary.txt"), "w", encoding="utf-8") as fh:
            fh.write(_summary_text(result, cfg.workload.name))
        results.append(result)
    return results


def _es_kwargs(es: EsConfig) -> dict:
    return {
        "lambda_part": es.lambda_part, "lambda_place": es.lambda_place,
        "budget": es.budget, "elitist_partitioning": es.elitist_partitioning,
        "use_reordering": es.use_reordering, "seed": es.seed,
        "strategy": es.strategy, "k_init": es.k_init,
        "charge_init_to_budget": es.charge_init_to_budget,
        "partition_params": es.partition_params,
        "placement_params": es.placement_params, "noise": es.noise,
    }


def _write_aggregate(results: list[RunResult], path: str) -> tuple[list[int], list[list[float]]]:
    """Per-evaluation best-so-far across trials: per-trial columns plus
    min/mean/max aggregate columns."""
    series = [_best_so_far_series(r.trace) for r in results]
    length = min(len(s) for s in series)
    xs = [series[0][i][0] for i in range(length)]
    columns = [[s[i][1] for i in range(length)] for s in series]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["eval_index"] + [f"trial_{t:02d}_best_us" for t in range(len(results))]
        header += ["best_min_us", "best_mean_us", "best_max_us"]
        writer.writerow(header)
        for i in range(length):
            values = [col[i] for col in columns]
            writer.writerow([xs[i]] + [_fmt(v) for v in values]
                            + [_fmt(min(values)),
                               _fmt(sum(values) / len(values)),
                               _fmt(max(values))])
    return xs, columns


def cmd_optimize(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args, require_config=True)
    trials = args.trials
    out_dir = args.out
    os.makedirs(out_dir, exist_ok=True)
    workers = max_workers_from_env()

    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        json.dump(cfg.echo_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(out_dir, args, cfg.es.seed)

    results = _run_trials(cfg, trials, out_dir, workers)
    xs, columns = _write_aggregate(results, os.path.join(out_dir, "aggregate.csv"))
    if trials == 1:
        convergence_plot({"trial_00": list(zip(xs, columns[0]))},
                         os.path.join(out_dir, "convergence.svg"),
                         title=f"{cfg.workload.name}: best latency")
    else:
        mean = [sum(col[i] for col in columns) / len(columns) for i in range(len(xs))]
        low = [min(col[i] for col in columns) for i in range(len(xs))]
        high = [max(col[i] for col in columns) for i in range(len(xs))]
        band_plot(xs, mean, low, high, os.path.join(out_dir, "convergence.svg"),
                  label=f"mean of {trials} trials",
                  title=f"{cfg.workload.name}: best latency")

    best = min(results, key=lambda r: r.best_report.latency_us)
    print(f"best latency over {trials} trial(s): {_fmt(best.best_report.latency_us)} us")
    print(f"outputs in {out_dir}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    mapping, arch = load_mapping(args.mapping)
    noise = NoiseConfig(sigma=args.sigma)
    report = evaluate(mapping, arch, noise=noise,
                      seed=args.seed if args.seed is not None else 0)
    for column, value in zip(REPORT_COLUMNS, _report_row(report)):
        print(f"{column:20s} {value}")
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "report.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        writer.writerow(_report_row(report))
    with open(os.path.join(args.out, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    mapping, arch = load_mapping(args.mapping)
    os.makedirs(args.out, exist_ok=True)
    svg_path = os.path.join(args.out, "mapping.svg")
    txt_path = os.path.join(args.out, "mapping.txt")
    render_mapping(mapping, arch, svg_path, heat=args.heat,
                   title=mapping.workload.name)
    diagram = text_diagram(mapping, arch)
    with open(txt_path, "w", encoding="utf-8") as fh:
        fh.write(diagram)
    print(diagram)
    print(f"wrote {svg_path} and {txt_path}")
    return EXIT_OK


_ABLATIONS = ("reordering", "elitism", "lambdas", "variance")


def _ablation_arms(which: str, es: EsConfig) -> dict[str, EsConfig]:
    base = _es_kwargs(es)
    if which == "reordering":
        return {"reordering-on": EsConfig(**{**base, "use_reordering": True}),
                "reordering-off": EsConfig(**{**base, "use_reordering": False})}
    if which == "elitism":
        return {"elitist": EsConfig(**{**base, "elitist_partitioning": True}),
                "non-elitist": EsConfig(**{**base, "elitist_partitioning": False})}
    if which == "lambdas":
        arms = {}
        for lp in (1, 4, 8):
            for lq in (1, 4, 8):
                arms[f"lpart{lp}-lplace{lq}"] = EsConfig(
                    **{**base, "lambda_part": lp, "lambda_place": lq})
        return arms
    raise ConfigError(f"unknown ablation {which!r}")


def _run_variance_study(cfg: RunConfig, out_dir: str, placements: int = 50,
                        k: int | None = None) -> int:
    """Evaluate one fixed partitioning under N random placements."""
    arch, workload = cfg.arch, cfg.workload
    minima = minimum_partitioning(workload, arch)
    partitioning = min_plus_k(workload, arch, k if k is not None else cfg.es.k_init,
                              minima=minima)
    latencies = []
    csv_path = os.path.join(out_dir, "variance.csv")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("placement_index", "latency_us"))
        for index in range(placements):
            rng = np.random.default_rng(np.random.SeedSequence([cfg.es.seed, 5, index]))
            omega = random_placement(arch, rng)
            mapping = build_mapping(partitioning, omega, workload, arch, minima=minima)
            report = evaluate(mapping, arch, noise=cfg.es.noise,
                              seed=int(np.random.SeedSequence([cfg.es.seed, 6, index])
                                       .generate_state(1)[0]))
            latencies.append(report.latency_us)
            writer.writerow((index, _fmt(report.latency_us)))
    histogram_plot(latencies, os.path.join(out_dir, "variance.svg"),
                   title=f"{workload.name}: latency across {placements} random placements")
    spread = max(latencies) - min(latencies)
    print(f"{placements} placements: min {_fmt(min(latencies))} us, "
          f"max {_fmt(max(latencies))} us, spread {_fmt(spread)} us")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _resolve_config(args, require_config=True)
    os.makedirs(args.out, exist_ok=True)
    _write_manifest(args.out, args, cfg.es.seed)
    if args.which == "variance":
        return _run_variance_study(cfg, args.out, placements=args.placements, k=args.k)

    arms = _ablation_arms(args.which, cfg.es)
    workers = max_workers_from_env()
    comparison_rows = []
    curves = {}
    for arm_name, arm_es in arms.items():
        arm_dir = os.path.join(args.out, arm_name)
        os.makedirs(arm_dir, exist_ok=True)
        arm_cfg = RunConfig(workload=cfg.workload, arch=cfg.arch, es=arm_es,
                            source=cfg.source)
        results = _run_trials(arm_cfg, args.trials, arm_dir, workers)
        xs, columns = _write_aggregate(results, os.path.join(arm_dir, "aggregate.csv"))
        mean = [sum(col[i] for col in columns) / len(columns) for i in range(len(xs))]
        curves[arm_name] = list(zip(xs, mean))
        for trial, result in enumerate(results):
            comparison_rows.append(
                (arm_name, trial, result.best_report.latency_us,
                 _no_improvement_fraction(result.trace)))

    comparison_path = os.path.join(args.out, "comparison.csv")
    with open(comparison_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("arm", "trial", "final_best_us", "no_improvement_fraction"))
        for arm_name, trial, final, frac in comparison_rows:
            writer.writerow((arm_name, trial, _fmt(final), _fmt(frac)))
    convergence_plot(curves, os.path.join(args.out, f"{args.which}.svg"),
                     title=f"{cfg.workload.name}: {args.which} ablation "
                           f"(mean of {args.trials} trials)")

    print(f"{'arm':20s} {'mean final (us)':>16s} {'no-improve frac':>16s}")
    for arm_name in arms:
        rows = [r for r in comparison_rows if r[0] == arm_name]
        mean_final = sum(r[2] for r in rows) / len(rows)
        mean_frac = sum(r[3] for r in rows) / len(rows)
        print(f"{arm_name:20s} {mean_final:16.6f} {mean_frac:16.6f}")
    print(f"wrote {comparison_path}")
    return EXIT_OK


# -- argument plumbing ---------------------------------------------------------


def _resolve_config(args: argparse.Namespace, require_config: bool = False) -> RunConfig:
    """Load --config if given, else build a config from direct flags."""
    if getattr(args, "config", None):
        cfg = load_config(args.config)
    elif require_config:
        raise ConfigError("this command requires --config")
    else:
        data = {}
        if getattr(args, "workload", None):
            data["workload"] = {"file": os.path.abspath(args.workload)}
        elif getattr(args, "name", None):
            data["workload"] = {"name": args.name}
        else:
            raise ConfigError("need --config, --workload FILE, or --name NAME")
        if getattr(args, "arch", None):
            data["architecture"] = {"file": os.path.abspath(args.arch)}
        cfg = config_from_dict(data)

    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "budget", None) is not None:
        overrides["budget"] = args.budget
    if overrides:
        cfg = RunConfig(workload=cfg.workload, arch=cfg.arch,
                        es=EsConfig(**{**_es_kwargs(cfg.es), **overrides}),
                        source=cfg.source)
    return cfg


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="run configuration JSON")
    parser.add_argument("--seed", type=int, default=None, help="seed override")
    parser.add_argument("--out", default="meshmap_out", help="output directory")
    parser.add_argument("--trials", type=int, default=1,
                        help="number of independently seeded trials")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="meshmap",
        description="Evolutionary partitioning and placement of layered sparse "
                    "workloads onto 2D-mesh accelerators.")
    parser.add_argument("--version", action="version", version=f"meshmap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a benchmark workload file")
    p.add_argument("name", help="sparsemlp-1, sparsemlp-2, or a label for --dims")
    p.add_argument("--dims", help="comma-separated layer widths for a custom MLP")
    p.add_argument("--input-size", type=int, default=1024)
    p.add_argument("--weight-sparsity", type=float, default=0.85)
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("heuristics", help="rank the placement heuristics for a workload")
    p.add_argument("--workload", help="workload JSON file")
    p.add_argument("--name", help="benchmark workload name")
    p.add_argument("--arch", help="architecture JSON file")
    p.add_argument("--k", type=int, default=None, help="extra cores per layer (min+k)")
    _add_common(p)
    p.set_defaults(func=cmd_heuristics)

    p = sub.add_parser("optimize", help="run the nested evolution strategy")
    p.add_argument("--budget", type=int, default=None, help="evaluation budget override")
    _add_common(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("evaluate", help="evaluate a mapping file under the model")
    p.add_argument("--mapping", required=True, help="mapping JSON file")
    p.add_argument("--sigma", type=float, default=0.0, help="measurement noise sigma")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("render", help="draw a mapping as SVG and text diagrams")
    p.add_argument("--mapping", required=True, help="mapping JSON file")
    p.add_argument("--heat", action="store_true", help="overlay per-link load heat")
    _add_common(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("ablate", help="run a controlled component comparison")
    p.add_argument("which", choices=_ABLATIONS)
    p.add_argument("--budget", type=int, default=None, help="evaluation budget override")
    p.add_argument("--placements", type=int, default=50,
                   help="random placements for the variance study")
    p.add_argument("--k", type=int, default=None,
                   help="min+k partitioning for the variance study")
    _add_common(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError, WorkloadError, GenotypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleWorkloadError, BudgetError, FeasibilityError) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
