"""Multi-chip 2D-mesh substrate: core coordinates, links, and XY routing.

The substrate is a set of chips, each an identical ``mesh_width x mesh_height``
grid of routers with ``cores_per_router`` core slots attached to every router.
Traffic accounting relies on the deterministic dimension-order (XY) routes
produced here: a packet leaves its source core, travels the full x-distance,
then the full y-distance, and enters the destination core. Adjacent chips are
bridged by explicitly declared inter-chip links.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

CORE_ROUTER = "core-router"
ROUTER_ROUTER = "router-router"
INTER_CHIP = "inter-chip"


class ConfigurationError(ValueError):
    """Raised for invalid substrate descriptions (bad bounds, no usable cores)."""


class RoutingError(RuntimeError):
    """Raised when no route exists between two cores (missing chip bridge)."""


@dataclass(frozen=True, order=True)
class CoreLocation:
    """A core slot: chip index, router column x, router row y, slot c in 1..cores_per_router."""

    chip: int
    x: int
    y: int
    c: int

    def router(self) -> tuple[int, int, int]:
        return (self.chip, self.x, self.y)

    def label(self) -> str:
        return f"{self.chip}:{self.x},{self.y}#{self.c}"


@dataclass(frozen=True)
class Link:
    """A directed link. Endpoints are router nodes ``(chip, x, y)`` or core nodes
    ``(chip, x, y, c)``; ``kind`` is one of core-router, router-router, inter-chip."""

    src: tuple
    dst: tuple
    kind: str


@dataclass(frozen=True)
class InterChipLink:
    """Bidirectional bridge between one boundary router on each of two chips."""

    chip_a: int
    x_a: int
    y_a: int
    chip_b: int
    x_b: int
    y_b: int

    def router_a(self) -> tuple[int, int, int]:
        return (self.chip_a, self.x_a, self.y_a)

    def router_b(self) -> tuple[int, int, int]:
        return (self.chip_b, self.x_b, self.y_b)


@dataclass(frozen=True)
class ModelRates:
    """Throughput, overhead, and energy coefficients of the analytical stage-time model.

    Rates are per-microsecond unit counts; energies are joules per event. The
    defaults are calibration constants chosen so that a mid-size sparse MLP on
    the default 152-core chip lands in the tens-of-microseconds regime; they
    are knobs, not silicon ground truth.
    """

    synops_rate: float = 2500.0          # synaptic ops / us / core
    synmem_rate: float = 2000.0          # memory words / us / core
    dendops_rate: float = 400.0          # neuron updates / us / core
    link_bandwidth: float = 200.0        # packets / us / on-chip link
    interchip_bandwidth: float = 200.0   # packets / us / chip bridge
    barrier_overhead_us: float = 5.0     # fixed per-step synchronization cost
    static_power_per_core_w: float = 0.0
    chip_idle_power_w: float = 0.9
    e_synop_j: float = 5.0e-12
    e_packet_hop_j: float = 2.0e-12
    e_neuron_update_j: float = 10.0e-12

    def validate(self) -> None:
        for name in ("synops_rate", "synmem_rate", "dendops_rate",
                     "link_bandwidth", "interchip_bandwidth"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"rates.{name} must be > 0")
        for name in ("barrier_overhead_us", "static_power_per_core_w",
                     "chip_idle_power_w", "e_synop_j", "e_packet_hop_j",
                     "e_neuron_update_j"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"rates.{name} must be >= 0")


@dataclass(frozen=True)
class ArchitectureSpec:
    """Declarative substrate description, loadable from JSON."""

    chips: int = 1
    mesh_width: int = 8
    mesh_height: int = 5
    cores_per_router: int = 4
    disabled_cores: tuple[CoreLocation, ...] = ()
    max_neurons_per_core: int = 8192
    core_memory_words: int = 2 ** 17
    interchip_hop_penalty: int = 1
    rates: ModelRates = field(default_factory=ModelRates)
    interchip_links: tuple[InterChipLink, ...] | None = None  # None -> default bridges


def default_disabled_cores(mesh_width: int = 8, mesh_height: int = 5,
                           cores_per_router: int = 4, chips: int = 1) -> tuple[CoreLocation, ...]:
    """Default non-usable slots: every slot of the two highest-order routers per chip.

    On the default 8x5 grid this removes 8 slots per chip, leaving 152 usable
    cores per chip.
    """
    out = []
    for chip in range(chips):
        for x in (mesh_width - 2, mesh_width - 1):
            for c in range(1, cores_per_router + 1):
                out.append(CoreLocation(chip, x, mesh_height - 1, c))
    return tuple(out)


def default_spec(chips: int = 1) -> ArchitectureSpec:
    """The default substrate profile: 8x5 routers x 4 slots, 152 usable cores per chip."""
    return ArchitectureSpec(chips=chips, disabled_cores=default_disabled_cores(chips=chips))


class Architecture:
    """Immutable substrate: usable core set, link set, and routing.

    Construction freezes a canonical total ordering of usable cores
    (ascending ``(chip, y, x, c)``); heuristics and permutation identities are
    defined against that order. Safe for concurrent reads.
    """

    def __init__(self, spec: ArchitectureSpec):
        self.spec = spec
        self.chips = spec.chips
        self.mesh_width = spec.mesh_width
        self.mesh_height = spec.mesh_height
        self.cores_per_router = spec.cores_per_router
        self.max_neurons_per_core = spec.max_neurons_per_core
        self.core_memory_words = spec.core_memory_words
        self.rates = spec.rates
        self.disabled = frozenset(spec.disabled_cores)

        if spec.interchip_links is None:
            links = tuple(_default_bridges(spec))
        else:
            links = tuple(spec.interchip_links)
        self.interchip_links = links
        self._bridge_by_chips = {}
        for link in links:
            self._bridge_by_chips[(link.chip_a, link.chip_b)] = link
            self._bridge_by_chips[(link.chip_b, link.chip_a)] = link

        self.usable_cores: tuple[CoreLocation, ...] = tuple(
            CoreLocation(chip, x, y, c)
            for chip in range(self.chips)
            for y in range(self.mesh_height)
            for x in range(self.mesh_width)
            for c in range(1, self.cores_per_router + 1)
            if CoreLocation(chip, x, y, c) not in self.disabled
        )
        self._usable_set = frozenset(self.usable_cores)
        self.total_cores = len(self.usable_cores)
        self._links = self._build_link_set()

    # -- construction -----------------------------------------------------

    def _build_link_set(self) -> frozenset[Link]:
        links = []
        for chip in range(self.chips):
            for y in range(self.mesh_height):
                for x in range(self.mesh_width):
                    router = (chip, x, y)
                    for c in range(1, self.cores_per_router + 1):
                        core = (chip, x, y, c)
                        links.append(Link(core, router, CORE_ROUTER))
                        links.append(Link(router, core, CORE_ROUTER))
                    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        nx, ny = x + dx, y + dy
                        if 0 <= nx < self.mesh_width and 0 <= ny < self.mesh_height:
                            links.append(Link(router, (chip, nx, ny), ROUTER_ROUTER))
        for bridge in self.interchip_links:
            links.append(Link(bridge.router_a(), bridge.router_b(), INTER_CHIP))
            links.append(Link(bridge.router_b(), bridge.router_a(), INTER_CHIP))
        return frozenset(links)

    @property
    def links(self) -> frozenset[Link]:
        return self._links

    def cores_per_chip(self) -> int:
        return self.mesh_width * self.mesh_height * self.cores_per_router

    def usable_on_chip(self, chip: int) -> int:
        return sum(1 for core in self.usable_cores if core.chip == chip)

    def is_usable(self, core: CoreLocation) -> bool:
        return core in self._usable_set

    def in_bounds(self, core: CoreLocation) -> bool:
        return (0 <= core.chip < self.chips
                and 0 <= core.x < self.mesh_width
                and 0 <= core.y < self.mesh_height
                and 1 <= core.c <= self.cores_per_router)

    # -- routing ----------------------------------------------------------

    def route(self, a: CoreLocation, b: CoreLocation) -> list[Link]:
        """Deterministic XY route from core a to core b as an ordered link list.

        Same core yields an empty route. Cross-chip routes go XY to the source
        chip's bridge router, cross the bridge, then XY to the destination.
        """
        if a == b:
            return []
        if a.chip == b.chip:
            links = [Link((a.chip, a.x, a.y, a.c), (a.chip, a.x, a.y), CORE_ROUTER)]
            links.extend(self._xy_links(a.chip, (a.x, a.y), (b.x, b.y)))
            links.append(Link((b.chip, b.x, b.y), (b.chip, b.x, b.y, b.c), CORE_ROUTER))
            return links
        bridge = self._bridge_by_chips.get((a.chip, b.chip))
        if bridge is None:
            raise RoutingError(f"no inter-chip link declared between chips {a.chip} and {b.chip}")
        if bridge.chip_a == a.chip:
            exit_router, entry_router = bridge.router_a(), bridge.router_b()
        else:
            exit_router, entry_router = bridge.router_b(), bridge.router_a()
        links = [Link((a.chip, a.x, a.y, a.c), (a.chip, a.x, a.y), CORE_ROUTER)]
        links.extend(self._xy_links(a.chip, (a.x, a.y), exit_router[1:]))
        links.append(Link(exit_router, entry_router, INTER_CHIP))
        links.extend(self._xy_links(b.chip, entry_router[1:], (b.x, b.y)))
        links.append(Link((b.chip, b.x, b.y), (b.chip, b.x, b.y, b.c), CORE_ROUTER))
        return links

    def _xy_links(self, chip: int, src: tuple[int, int], dst: tuple[int, int]) -> list[Link]:
        links = []
        x, y = src
        step = 1 if dst[0] > x else -1
        while x != dst[0]:
            links.append(Link((chip, x, y), (chip, x + step, y), ROUTER_ROUTER))
            x += step
        step = 1 if dst[1] > y else -1
        while y != dst[1]:
            links.append(Link((chip, x, y), (chip, x, y + step), ROUTER_ROUTER))
            y += step
        return links

    def hop_distance(self, a: CoreLocation, b: CoreLocation) -> int:
        """Router-router hops between the cores' routers (Manhattan distance).

        Core-attach links count zero. Cross-chip pairs add the declared
        inter-chip hop penalty on top of the two on-chip segments.
        """
        if a.chip == b.chip:
            return abs(a.x - b.x) + abs(a.y - b.y)
        bridge = self._bridge_by_chips.get((a.chip, b.chip))
        if bridge is None:
            raise RoutingError(f"no inter-chip link declared between chips {a.chip} and {b.chip}")
        if bridge.chip_a == a.chip:
            ra, rb = bridge.router_a(), bridge.router_b()
        else:
            ra, rb = bridge.router_b(), bridge.router_a()
        return (abs(a.x - ra[1]) + abs(a.y - ra[2])
                + self.spec.interchip_hop_penalty
                + abs(b.x - rb[1]) + abs(b.y - rb[2]))

    def link_capacity(self, link: Link) -> float:
        """Bandwidth in packets/us for a link of this kind."""
        if link.kind == INTER_CHIP:
            return self.rates.interchip_bandwidth
        return self.rates.link_bandwidth

    def bridge_between(self, chip_a: int, chip_b: int) -> InterChipLink | None:
        return self._bridge_by_chips.get((chip_a, chip_b))


def _default_bridges(spec: ArchitectureSpec):
    """One bridge per adjacent chip pair, attached at the easternmost-middle router."""
    x = spec.mesh_width - 1
    y = spec.mesh_height // 2
    for chip in range(spec.chips - 1):
        yield InterChipLink(chip, x, y, chip + 1, x, y)


def build_architecture(spec: ArchitectureSpec) -> Architecture:
    """Validate a spec and freeze it into an Architecture.

    Rejects non-positive dimensions, out-of-bounds or duplicated disabled
    cores, invalid bridge endpoints, and configurations with zero usable cores.
    """
    if spec.chips < 1:
        raise ConfigurationError("chips must be >= 1")
    if spec.mesh_width < 1 or spec.mesh_height < 1:
        raise ConfigurationError("mesh dimensions must be positive")
    if spec.cores_per_router < 1:
        raise ConfigurationError("cores_per_router must be >= 1")
    if spec.max_neurons_per_core < 1:
        raise ConfigurationError("max_neurons_per_core must be >= 1")
    if spec.core_memory_words < 1:
        raise ConfigurationError("core_memory_words must be >= 1")
    spec.rates.validate()

    seen = set()
    for core in spec.disabled_cores:
        if core in seen:
            raise ConfigurationError(f"duplicate disabled core {core.label()}")
        seen.add(core)

    arch = Architecture(spec)
    for core in spec.disabled_cores:
        if not arch.in_bounds(core):
            raise ConfigurationError(f"disabled core {core.label()} outside architecture bounds")
    for link in arch.interchip_links:
        for chip, x, y in (link.router_a(), link.router_b()):
            if not (0 <= chip < spec.chips and 0 <= x < spec.mesh_width
                    and 0 <= y < spec.mesh_height):
                raise ConfigurationError(f"inter-chip link endpoint ({chip},{x},{y}) out of bounds")
    if arch.total_cores == 0:
        raise ConfigurationError("configuration has zero usable cores")
    return arch


# -- JSON spec file ---------------------------------------------------------

_SPEC_FIELDS = {"chips", "mesh_width", "mesh_height", "cores_per_router",
                "disabled_cores", "max_neurons_per_core", "core_memory_words",
                "interchip_hop_penalty", "rates", "interchip_links"}
_RATE_FIELDS = {f for f in ModelRates.__dataclass_fields__}


def spec_from_dict(data: dict) -> ArchitectureSpec:
    """Parse the JSON architecture schema. Unknown fields are rejected."""
    if not isinstance(data, dict):
        raise ConfigurationError("architecture spec must be a JSON object")
    unknown = set(data) - _SPEC_FIELDS
    if unknown:
        raise ConfigurationError(f"unknown architecture fields: {sorted(unknown)}")
    kwargs = {}
    for key in ("chips", "mesh_width", "mesh_height", "cores_per_router",
                "max_neurons_per_core", "core_memory_words", "interchip_hop_penalty"):
        if key in data:
            kwargs[key] = int(data[key])
    if "disabled_cores" in data:
        kwargs["disabled_cores"] = tuple(
            CoreLocation(int(d["chip"]), int(d["x"]), int(d["y"]), int(d["c"]))
            for d in data["disabled_cores"])
    if "rates" in data:
        unknown = set(data["rates"]) - _RATE_FIELDS
        if unknown:
            raise ConfigurationError(f"unknown rate fields: {sorted(unknown)}")
        kwargs["rates"] = ModelRates(**{k: float(v) for k, v in data["rates"].items()})
    if "interchip_links" in data:
        kwargs["interchip_links"] = tuple(
            InterChipLink(int(d["chip_a"]), int(d["x_a"]), int(d["y_a"]),
                          int(d["chip_b"]), int(d["x_b"]), int(d["y_b"]))
            for d in data["interchip_links"])
    return ArchitectureSpec(**kwargs)


def spec_to_dict(spec: ArchitectureSpec) -> dict:
    data = {
        "chips": spec.chips,
        "mesh_width": spec.mesh_width,
        "mesh_height": spec.mesh_height,
        "cores_per_router": spec.cores_per_router,
        "disabled_cores": [{"chip": d.chip, "x": d.x, "y": d.y, "c": d.c}
                           for d in spec.disabled_cores],
        "max_neurons_per_core": spec.max_neurons_per_core,
        "core_memory_words": spec.core_memory_words,
        "interchip_hop_penalty": spec.interchip_hop_penalty,
        "rates": {k: getattr(spec.rates, k) for k in _RATE_FIELDS},
    }
    if spec.interchip_links is not None:
        data["interchip_links"] = [
            {"chip_a": l.chip_a, "x_a": l.x_a, "y_a": l.y_a,
             "chip_b": l.chip_b, "x_b": l.x_b, "y_b": l.y_b}
            for l in spec.interchip_links]
    return data


def load_spec(path: str) -> ArchitectureSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh))


def with_rates(arch: Architecture, rates: ModelRates) -> Architecture:
    """A copy of the architecture with different model rates."""
    return build_architecture(replace(arch.spec, rates=rates))
