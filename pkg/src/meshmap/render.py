"""Mapping diagrams and experiment figures.

Mesh diagrams show every router with its core slots colored by layer, unused
slots hollow, and optionally a per-link load heat overlay. SVG output is
byte-deterministic for a fixed input: the hash salt is pinned and no date
metadata is written, so diagrams can be diffed and golden-tested.
"""

from __future__ import annotations

import string

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib import colormaps
from matplotlib.lines import Line2D
from matplotlib.patches import Circle, Rectangle

from .arch import Architecture, CoreLocation
from .fitness import link_loads
from .genome import Mapping

_SVG_SALT = "meshmap"

# slot offsets inside a router cell, for up to 4 cores per router
_SLOT_OFFSETS = ((-0.28, -0.28), (0.28, -0.28), (-0.28, 0.28), (0.28, 0.28))

_LAYER_CHARS = string.digits[1:] + string.ascii_lowercase + string.ascii_uppercase


def _save_svg(fig, path: str) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _layer_of(mapping: Mapping) -> dict[CoreLocation, int]:
    owner = {}
    for index, block in enumerate(mapping.layer_cores):
        for core in block:
            owner[core] = index
    return owner


def _slot_xy(arch: Architecture, core: CoreLocation, chip_dx: float):
    if arch.cores_per_router <= 4:
        ox, oy = _SLOT_OFFSETS[core.c - 1]
    else:
        ox = -0.3 + 0.6 * ((core.c - 1) % 2)
        oy = -0.3 + 0.6 * ((core.c - 1) // 2) / max(1, (arch.cores_per_router - 1) // 2)
    return core.x + ox + core.chip * chip_dx, core.y + oy


def render_mapping(mapping: Mapping, arch: Architecture, path: str,
                   heat: bool = False, title: str | None = None) -> int:
    """Draw the mesh diagram to an SVG file; returns the peak link load drawn
    (0 when the heat overlay is off)."""
    plt.rcParams["svg.hashsalt"] = _SVG_SALT
    owner = _layer_of(mapping)
    num_layers = len(mapping.layer_cores)
    cmap = colormaps["tab20"]
    chip_dx = arch.mesh_width + 1.0

    width = arch.chips * chip_dx
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * width), max(3.2, 1.1 * arch.mesh_height)))
    ax.set_aspect("equal")
    ax.axis("off")

    max_load = 0
    if heat:
        loads, max_load = link_loads(mapping, arch)
        router_loads = {}
        for link, load in loads.items():
            if link.kind == "core-router":
                continue
            key = (link.src[:3], link.dst[:3]) if link.src[:3] <= link.dst[:3] \
                else (link.dst[:3], link.src[:3])
            router_loads[key] = router_loads.get(key, 0) + load
        peak = max(router_loads.values(), default=1)
        hot = colormaps["inferno"]
        for (a, b), load in sorted(router_loads.items()):
            xa = a[1] + a[0] * chip_dx
            xb = b[1] + b[0] * chip_dx
            ax.add_line(Line2D([xa, xb], [a[2], b[2]],
                               linewidth=1.0 + 5.0 * load / peak,
                               color=hot(load / peak), zorder=1))

    for chip in range(arch.chips):
        for y in range(arch.mesh_height):
            for x in range(arch.mesh_width):
                ax.add_patch(Circle((x + chip * chip_dx, y), 0.12,
                                    facecolor="white", edgecolor="black",
                                    linewidth=0.8, zorder=3))
                for c in range(1, arch.cores_per_router + 1):
                    core = CoreLocation(chip, x, y, c)
                    cx, cy = _slot_xy(arch, core, chip_dx)
                    if core in arch.disabled:
                        ax.plot([cx - 0.08, cx + 0.08], [cy - 0.08, cy + 0.08],
                                color="lightgray", linewidth=1.0, zorder=2)
                        ax.plot([cx - 0.08, cx + 0.08], [cy + 0.08, cy - 0.08],
                                color="lightgray", linewidth=1.0, zorder=2)
                        continue
                    layer = owner.get(core)
                    if layer is None:
                        face, edge = "white", "gray"
                    else:
                        face, edge = cmap(layer % 20), "black"
                    ax.add_patch(Rectangle((cx - 0.1, cy - 0.1), 0.2, 0.2,
                                           facecolor=face, edgecolor=edge,
                                           linewidth=0.6, zorder=4))

    handles = [Rectangle((0, 0), 1, 1, facecolor=cmap(i % 20), edgecolor="black")
               for i in range(num_layers)]
    labels = [f"layer {i + 1} ({len(mapping.layer_cores[i])} cores)"
              for i in range(num_layers)]
    ax.legend(handles, labels, loc="center left", bbox_to_anchor=(1.02, 0.5),
              fontsize=7, frameon=False)
    ax.set_xlim(-0.8, width - 0.2)
    ax.set_ylim(-0.8, arch.mesh_height - 0.2)
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    _save_svg(fig, path)
    return max_load


def text_diagram(mapping: Mapping, arch: Architecture) -> str:
    """Terminal rendering: one block per chip, one cell per router, core slots
    shown as the owning layer's digit, '.' for unused, 'x' for disabled."""
    owner = _layer_of(mapping)
    lines = []
    for chip in range(arch.chips):
        lines.append(f"chip {chip}")
        for y in range(arch.mesh_height - 1, -1, -1):
            cells = []
            for x in range(arch.mesh_width):
                slots = []
                for c in range(1, arch.cores_per_router + 1):
                    core = CoreLocation(chip, x, y, c)
                    if core in arch.disabled:
                        slots.append("x")
                    elif core in owner:
                        slots.append(_LAYER_CHARS[owner[core] % len(_LAYER_CHARS)])
                    else:
                        slots.append(".")
                cells.append("".join(slots))
            lines.append(" ".join(cells))
        lines.append("")
    return "\n".join(lines)


def convergence_plot(traces: dict[str, list[tuple[int, float]]], path: str,
                     title: str = "best latency vs evaluations") -> None:
    """Best-so-far latency curves, one line per labeled trial/arm; multiple
    series with the same label are drawn as mean with a min/max band."""
    plt.rcParams["svg.hashsalt"] = _SVG_SALT
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    for label in sorted(traces):
        series = traces[label]
        xs = [p[0] for p in series]
        ys = [p[1] for p in series]
        ax.step(xs, ys, where="post", label=label, linewidth=1.2)
    ax.set_xlabel("fitness evaluations")
    ax.set_ylabel("best latency (us)")
    ax.set_title(title, fontsize=9)
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    _save_svg(fig, path)


def band_plot(x: list[int], mean: list[float], low: list[float], high: list[float],
              path: str, label: str = "mean of trials",
              title: str = "best latency vs evaluations") -> None:
    """Aggregate curve across trials with a min/max band."""
    plt.rcParams["svg.hashsalt"] = _SVG_SALT
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.fill_between(x, low, high, alpha=0.3, linewidth=0)
    ax.step(x, mean, where="post", label=label, linewidth=1.4)
    ax.set_xlabel("fitness evaluations")
    ax.set_ylabel("best latency (us)")
    ax.set_title(title, fontsize=9)
    ax.legend(fontsize=7, frameon=False)
    fig.tight_layout()
    _save_svg(fig, path)


def histogram_plot(values: list[float], path: str, xlabel: str = "latency (us)",
                   title: str = "latency across random placements") -> None:
    plt.rcParams["svg.hashsalt"] = _SVG_SALT
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.hist(values, bins=min(20, max(5, len(values) // 4)),
            edgecolor="black", linewidth=0.5)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("placements")
    ax.set_title(title, fontsize=9)
    fig.tight_layout()
    _save_svg(fig, path)
