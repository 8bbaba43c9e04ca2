from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Literal, Mapping

import networkx as nx

from .errors import CoOrientationConflict, InvariantError, UnknownElement


logger = logging.getLogger(__name__)

BusId = int | str
SubgridKind = Literal["AC", "DC"]
Orientation = Literal["ac_to_dc", "dc_to_ac", "unassigned"]
LocalLoop = Literal["reactive_power", "dc_voltage", "power_transfer_dc_side", "power_transfer_ac_side"]
InferredDirection = Literal["ac_to_dc", "dc_to_ac", "free_choice", "not_orientable"]

LOCAL_LOOPS: tuple[LocalLoop, ...] = (
    "reactive_power",
    "dc_voltage",
    "power_transfer_dc_side",
    "power_transfer_ac_side",
)

# where each loop takes its measurement decides which way information crosses the converter
LOOP_DIRECTION: dict[str, Orientation] = {
    "reactive_power": "ac_to_dc",
    "dc_voltage": "dc_to_ac",
    "power_transfer_dc_side": "dc_to_ac",
    "power_transfer_ac_side": "ac_to_dc",
}


def bus_sort_key(bus: BusId) -> tuple[int, int | str]:
    if isinstance(bus, int):
        return (0, bus)
    return (1, str(bus))


@dataclass(frozen=True)
class Converter:
    id: str
    ac_bus: BusId
    dc_bus: BusId
    orientation: Orientation = "unassigned"
    local_loops: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if self.orientation not in ("ac_to_dc", "dc_to_ac", "unassigned"):
            raise InvariantError(f"Converter {self.id}: unknown orientation '{self.orientation}'")
        unknown = set(self.local_loops) - set(LOCAL_LOOPS)
        if unknown:
            raise InvariantError(f"Converter {self.id}: unknown local loops {sorted(unknown)}")

    @property
    def is_oriented(self) -> bool:
        return self.orientation != "unassigned"

    @property
    def source_bus(self) -> BusId:
        return self.dc_bus if self.orientation == "dc_to_ac" else self.ac_bus

    @property
    def target_bus(self) -> BusId:
        return self.ac_bus if self.orientation == "dc_to_ac" else self.dc_bus

    def pair_label(self) -> str:
        """Compact pair name: '12' for bus 1 -> bus 2."""
        if self.orientation == "unassigned":
            return f"{self.ac_bus}-{self.dc_bus}"
        return f"{self.source_bus}{self.target_bus}"


@dataclass(frozen=True)
class GridGraph:
    ac_buses: frozenset[BusId] = frozenset()
    dc_buses: frozenset[BusId] = frozenset()
    ac_lines: tuple[tuple[BusId, BusId], ...] = ()
    dc_lines: tuple[tuple[BusId, BusId], ...] = ()
    converters: tuple[Converter, ...] = ()
    name: str = ""

    def __post_init__(self) -> None:
        overlap = self.ac_buses & self.dc_buses
        if overlap:
            raise InvariantError(f"Bus identifiers shared between AC and DC: {sorted(overlap, key=bus_sort_key)}")

        _check_lines(self.ac_lines, self.ac_buses, "AC")
        _check_lines(self.dc_lines, self.dc_buses, "DC")

        seen_ids: set[str] = set()
        seen_pairs: set[tuple[BusId, BusId]] = set()
        for conv in self.converters:
            if conv.id in seen_ids:
                raise InvariantError(f"Duplicate converter id '{conv.id}'")
            seen_ids.add(conv.id)
            if conv.ac_bus not in self.ac_buses or conv.dc_bus not in self.dc_buses:
                raise InvariantError(
                    f"Converter {conv.id} must join one AC bus and one DC bus (got {conv.ac_bus}, {conv.dc_bus})"
                )
            pair = (conv.ac_bus, conv.dc_bus)
            if pair in seen_pairs:
                raise InvariantError(f"More than one converter between buses {pair[0]} and {pair[1]}")
            seen_pairs.add(pair)

    def converter(self, converter_id: str) -> Converter:
        for conv in self.converters:
            if conv.id == converter_id:
                return conv
        raise UnknownElement(f"Unknown converter '{converter_id}'")

    def with_orientations(self, orientations: Mapping[str, Orientation]) -> GridGraph:
        unknown = set(orientations) - {c.id for c in self.converters}
        if unknown:
            raise UnknownElement(f"Unknown converters {sorted(unknown)}")
        converters = tuple(
            replace(c, orientation=orientations[c.id]) if c.id in orientations else c for c in self.converters
        )
        return replace(self, converters=converters)

    @property
    def is_fully_oriented(self) -> bool:
        return all(c.is_oriented for c in self.converters)


def _check_lines(lines: Iterable[tuple[BusId, BusId]], buses: frozenset[BusId], kind: str) -> None:
    seen: set[frozenset] = set()
    for a, b in lines:
        if a not in buses or b not in buses:
            raise InvariantError(f"{kind} line {a}-{b} must connect two {kind} buses")
        if a == b:
            raise InvariantError(f"{kind} line {a}-{b} is a self-loop")
        key = frozenset((a, b))
        if key in seen:
            raise InvariantError(f"Duplicate {kind} line {a}-{b}")
        seen.add(key)


@dataclass(frozen=True, order=True)
class Subgrid:
    index: int
    kind: SubgridKind

    @property
    def label(self) -> str:
        return f"{self.kind}{self.index}"


@dataclass(frozen=True)
class SubgridMap:
    ac_component: Mapping[BusId, int] = field(default_factory=dict)
    dc_component: Mapping[BusId, int] = field(default_factory=dict)
    ac_count: int = 0
    dc_count: int = 0

    def subgrid_of(self, bus: BusId) -> Subgrid:
        if bus in self.ac_component:
            return Subgrid(self.ac_component[bus], "AC")
        if bus in self.dc_component:
            return Subgrid(self.dc_component[bus], "DC")
        raise UnknownElement(f"Unknown bus {bus}")

    def subgrids(self) -> list[Subgrid]:
        return [Subgrid(k, "AC") for k in range(1, self.ac_count + 1)] + [
            Subgrid(k, "DC") for k in range(1, self.dc_count + 1)
        ]

    def buses_of(self, label: str) -> list[BusId]:
        component = self.ac_component if label.startswith("AC") else self.dc_component
        index = int(label[2:])
        return sorted((b for b, k in component.items() if k == index), key=bus_sort_key)


def connected_components(grid: GridGraph) -> SubgridMap:
    ac_component = _components(grid.ac_buses, grid.ac_lines)
    dc_component = _components(grid.dc_buses, grid.dc_lines)
    smap = SubgridMap(
        ac_component=ac_component,
        dc_component=dc_component,
        ac_count=len(set(ac_component.values())),
        dc_count=len(set(dc_component.values())),
    )
    logger.debug("Grid %s: %d AC and %d DC subgrids", grid.name or "<unnamed>", smap.ac_count, smap.dc_count)
    return smap


def _components(buses: Iterable[BusId], lines: Iterable[tuple[BusId, BusId]]) -> dict[BusId, int]:
    graph = nx.Graph()
    graph.add_nodes_from(buses)
    graph.add_edges_from(lines)
    components = sorted(
        (sorted(c, key=bus_sort_key) for c in nx.connected_components(graph)),
        key=lambda members: bus_sort_key(members[0]),
    )
    return {bus: index for index, members in enumerate(components, start=1) for bus in members}


@dataclass(frozen=True)
class QuotientGraph:
    nodes: tuple[str, ...]
    kinds: Mapping[str, str]
    edges: frozenset[tuple[str, str]] = frozenset()
    underlying_edges: frozenset[frozenset[str]] = frozenset()

    def __post_init__(self) -> None:
        node_set = set(self.nodes)
        for a, b in self.edges:
            if a == b:
                raise InvariantError(f"Self-loop at {a} in quotient graph")
            if a not in node_set or b not in node_set:
                raise UnknownElement(f"Edge {a}->{b} references an unknown node")
            if frozenset((a, b)) not in self.underlying_edges:
                raise InvariantError(f"Edge {a}->{b} is missing from the underlying graph")
            if self.kinds.get(a) in ("AC", "DC") and self.kinds.get(a) == self.kinds.get(b):
                raise InvariantError(f"Quotient graph is not bipartite: {a}->{b} joins two {self.kinds[a]} subgrids")

    def directed(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.nodes)
        graph.add_edges_from(sorted(self.edges))
        return graph

    def undirected(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(self.nodes)
        graph.add_edges_from(sorted(tuple(sorted(e)) for e in self.underlying_edges))
        return graph

    def is_dag(self) -> bool:
        return nx.is_directed_acyclic_graph(self.directed())

    def is_bipartite(self) -> bool:
        return all(self.kinds[a] != self.kinds[b] for a, b in self.edges)


def build_quotient_graph(grid: GridGraph, smap: SubgridMap, oriented: bool = True) -> QuotientGraph:
    """One node per subgrid. With `oriented=False` only the underlying undirected edges are kept."""
    nodes = tuple(s.label for s in smap.subgrids())
    kinds = {s.label: s.kind for s in smap.subgrids()}
    edges: dict[tuple[str, str], str] = {}
    underlying: set[frozenset[str]] = set()

    for conv in grid.converters:
        ac = smap.subgrid_of(conv.ac_bus).label
        dc = smap.subgrid_of(conv.dc_bus).label
        underlying.add(frozenset((ac, dc)))
        if not (oriented and conv.is_oriented):
            continue
        edge = (ac, dc) if conv.orientation == "ac_to_dc" else (dc, ac)
        reverse = (edge[1], edge[0])
        if reverse in edges:
            raise CoOrientationConflict(
                f"Converters {edges[reverse]} and {conv.id} orient {ac}-{dc} in opposite directions (2-cycle)"
            )
        edges.setdefault(edge, conv.id)

    return QuotientGraph(nodes=nodes, kinds=kinds, edges=frozenset(edges), underlying_edges=frozenset(underlying))


def coarsen_quotient(q: QuotientGraph, groups: Mapping[str, Iterable[str]]) -> QuotientGraph:
    """Merge quotient nodes into named blocks; nodes not named in any group stay as they are."""
    block_of: dict[str, str] = {}
    for block, members in groups.items():
        for node in members:
            if node not in q.kinds:
                raise UnknownElement(f"Group '{block}' names unknown subgrid '{node}'")
            if node in block_of:
                raise InvariantError(f"Subgrid '{node}' appears in groups '{block_of[node]}' and '{block}'")
            block_of[node] = block

    nodes: list[str] = []
    for node in q.nodes:
        label = block_of.get(node, node)
        if label not in nodes:
            nodes.append(label)

    kinds: dict[str, str] = {}
    for node in q.nodes:
        label = block_of.get(node, node)
        kinds[label] = q.kinds[node] if kinds.get(label, q.kinds[node]) == q.kinds[node] else "mixed"

    edges: set[tuple[str, str]] = set()
    for a, b in q.edges:
        edge = (block_of.get(a, a), block_of.get(b, b))
        if edge[0] == edge[1]:
            continue
        if (edge[1], edge[0]) in edges:
            raise CoOrientationConflict(f"Blocks {edge[0]} and {edge[1]} are joined in both directions")
        edges.add(edge)

    underlying = {
        frozenset((block_of.get(a, a), block_of.get(b, b)))
        for a, b in (tuple(e) for e in q.underlying_edges)
        if block_of.get(a, a) != block_of.get(b, b)
    }
    return QuotientGraph(nodes=tuple(nodes), kinds=kinds, edges=frozenset(edges), underlying_edges=frozenset(underlying))


def infer_converter_direction(loops: Iterable[str]) -> InferredDirection:
    loops = set(loops)
    unknown = loops - set(LOCAL_LOOPS)
    if unknown:
        raise InvariantError(f"Unknown local loops {sorted(unknown)}")
    directions = {LOOP_DIRECTION[loop] for loop in loops}
    if not directions:
        return "free_choice"
    if len(directions) > 1:
        return "not_orientable"
    return directions.pop()
