from __future__ import annotations

import logging
from typing import Callable

import networkx as nx

from .config import OrientationStrategy
from .errors import ConverterNotOrientable, CycleForced, SchemaError, SizeLimit
from .grid import (
    GridGraph,
    Orientation,
    QuotientGraph,
    SubgridMap,
    connected_components,
    infer_converter_direction,
)


logger = logging.getLogger(__name__)

EdgeAssignment = tuple[tuple[str, str], ...]


def _priority(strategy: OrientationStrategy) -> Callable[[str], tuple]:
    def kind_and_index(label: str) -> tuple[str, int]:
        return label[:2], int(label[2:])

    if strategy == "index_order":
        return lambda label: (kind_and_index(label)[1], kind_and_index(label)[0])
    if strategy == "ac_first":
        return lambda label: (kind_and_index(label)[0] != "AC", kind_and_index(label)[1])
    if strategy == "dc_first":
        return lambda label: (kind_and_index(label)[0] != "DC", kind_and_index(label)[1])
    raise SchemaError(f"Unknown orientation strategy '{strategy}'")


def fixed_orientations(grid: GridGraph) -> dict[str, Orientation]:
    """Directions pinned by the user or implied by local control loops."""
    fixed: dict[str, Orientation] = {}
    for conv in grid.converters:
        inferred = infer_converter_direction(conv.local_loops)
        if inferred == "not_orientable":
            raise ConverterNotOrientable(
                f"Converter {conv.id}: local loops {sorted(conv.local_loops)} require both directions"
            )
        if inferred != "free_choice" and conv.is_oriented and conv.orientation != inferred:
            raise ConverterNotOrientable(
                f"Converter {conv.id}: orientation {conv.orientation} contradicts its local loops ({inferred})"
            )
        if conv.is_oriented:
            fixed[conv.id] = conv.orientation
        elif inferred != "free_choice":
            fixed[conv.id] = inferred
    return fixed


def orient_converters(
    grid: GridGraph,
    strategy: OrientationStrategy = "index_order",
    smap: SubgridMap | None = None,
) -> GridGraph:
    smap = smap or connected_components(grid)
    priority = _priority(strategy)
    fixed = fixed_orientations(grid)

    constraint = nx.DiGraph()
    constraint.add_nodes_from(s.label for s in smap.subgrids())
    for conv in grid.converters:
        if conv.id not in fixed:
            continue
        ac = smap.subgrid_of(conv.ac_bus).label
        dc = smap.subgrid_of(conv.dc_bus).label
        edge = (ac, dc) if fixed[conv.id] == "ac_to_dc" else (dc, ac)
        if constraint.has_edge(edge[1], edge[0]):
            raise CycleForced(f"Fixed converters orient {ac}-{dc} both ways; converter {conv.id} closes a 2-cycle")
        constraint.add_edge(*edge)

    if not nx.is_directed_acyclic_graph(constraint):
        cycle = nx.find_cycle(constraint)
        raise CycleForced(f"Fixed converter directions force the cycle {' -> '.join(a for a, _ in cycle)}")

    order = list(nx.lexicographical_topological_sort(constraint, key=priority))
    position = {label: i for i, label in enumerate(order)}
    logger.debug("Orientation order (%s): %s", strategy, order)

    orientations: dict[str, Orientation] = dict(fixed)
    for conv in grid.converters:
        if conv.id in orientations:
            continue
        ac = smap.subgrid_of(conv.ac_bus).label
        dc = smap.subgrid_of(conv.dc_bus).label
        orientations[conv.id] = "ac_to_dc" if position[ac] < position[dc] else "dc_to_ac"

    return grid.with_orientations(orientations)


def count_acyclic_orientations(q: QuotientGraph, vertex_bound: int = 20) -> int:
    if len(q.nodes) > vertex_bound:
        raise SizeLimit(f"Quotient graph has {len(q.nodes)} vertices; exact counting is bounded at {vertex_bound}")
    index = {label: i for i, label in enumerate(q.nodes)}
    edges = frozenset(tuple(sorted(index[v] for v in e)) for e in q.underlying_edges)
    value = chromatic_value(frozenset(range(len(q.nodes))), edges, -1, {})
    return abs(value)


def chromatic_value(
    vertices: frozenset[int],
    edges: frozenset[tuple[int, int]],
    x: int,
    memo: dict,
) -> int:
    """Chromatic polynomial of a simple graph evaluated at integer x, by deletion-contraction."""
    key = (vertices, edges)
    if key in memo:
        return memo[key]

    if not edges:
        result = x ** len(vertices)
    else:
        graph = nx.Graph()
        graph.add_nodes_from(vertices)
        graph.add_edges_from(edges)
        components = list(nx.connected_components(graph))
        if len(components) > 1:
            result = 1
            for comp in components:
                comp_edges = frozenset(e for e in edges if e[0] in comp)
                result *= chromatic_value(frozenset(comp), comp_edges, x, memo)
        elif len(edges) == len(vertices) - 1:
            # trees: x (x - 1)^(n - 1)
            result = x * (x - 1) ** (len(vertices) - 1)
        else:
            u, v = min(edges)
            deleted = edges - {(u, v)}
            contracted = frozenset(
                tuple(sorted((u if a == v else a, u if b == v else b)))
                for a, b in deleted
                if {a, b} != {u, v}
            )
            contracted = frozenset(e for e in contracted if e[0] != e[1])
            result = chromatic_value(vertices, deleted, x, memo) - chromatic_value(
                vertices - {v}, contracted, x, memo
            )

    memo[key] = result
    return result


def enumerate_acyclic_orientations(q: QuotientGraph, edge_bound: int = 20) -> list[EdgeAssignment]:
    edges = sorted(tuple(sorted(e, key=q.nodes.index)) for e in q.underlying_edges)
    if len(edges) > edge_bound:
        raise SizeLimit(f"Quotient graph has {len(edges)} edges; enumeration is bounded at {edge_bound}")

    graph = nx.DiGraph()
    graph.add_nodes_from(q.nodes)
    found: list[EdgeAssignment] = []
    chosen: list[tuple[str, str]] = []

    def extend(k: int) -> None:
        if k == len(edges):
            found.append(tuple(sorted(chosen)))
            return
        a, b = edges[k]
        for tail, head in ((a, b), (b, a)):
            # adding tail->head closes a cycle iff head already reaches tail
            if nx.has_path(graph, head, tail):
                continue
            graph.add_edge(tail, head)
            chosen.append((tail, head))
            extend(k + 1)
            chosen.pop()
            graph.remove_edge(tail, head)

    extend(0)
    return found


def apply_assignment(q: QuotientGraph, assignment: EdgeAssignment) -> QuotientGraph:
    return QuotientGraph(
        nodes=q.nodes,
        kinds=q.kinds,
        edges=frozenset(assignment),
        underlying_edges=q.underlying_edges,
    )
