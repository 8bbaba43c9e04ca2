from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import networkx as nx
import numpy as np

from .errors import DimensionMismatch, InvariantError, NotAcyclic, UnknownElement
from .grid import QuotientGraph


logger = logging.getLogger(__name__)

StructureKind = Literal["PosetCausal", "Hierarchical", "Coordinated", "LeaderFollower", "Decoupled"]


@dataclass(frozen=True, eq=False)
class Poset:
    """Finite poset over string elements; leq[a, b] means a precedes (is upstream of) b."""

    elements: tuple[str, ...]
    leq: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "elements", tuple(self.elements))
        object.__setattr__(self, "leq", np.array(self.leq, dtype=bool))
        n = len(self.elements)
        if self.leq.shape != (n, n):
            raise DimensionMismatch(f"leq must be {n}x{n}, got {self.leq.shape}")
        if len(set(self.elements)) != n:
            raise InvariantError("Poset elements must be unique")
        if not self.satisfies_axioms():
            raise InvariantError("Relation is not reflexive, antisymmetric and transitive")
        self.leq.setflags(write=False)

    @classmethod
    def from_pairs(cls, elements: Sequence[str], pairs: Iterable[tuple[str, str]]) -> Poset:
        graph = nx.DiGraph()
        graph.add_nodes_from(elements)
        graph.add_edges_from(pairs)
        return poset_from_graph(graph)

    @classmethod
    def chain(cls, elements: Sequence[str]) -> Poset:
        return cls.from_pairs(elements, zip(elements[:-1], elements[1:]))

    @classmethod
    def antichain(cls, elements: Sequence[str]) -> Poset:
        return cls(tuple(elements), np.eye(len(elements), dtype=bool))

    def satisfies_axioms(self) -> bool:
        leq = np.asarray(self.leq, dtype=bool)
        reflexive = bool(np.all(np.diag(leq)))
        off_diagonal = leq & ~np.eye(len(self.elements), dtype=bool)
        antisymmetric = not bool(np.any(off_diagonal & off_diagonal.T))
        composed = (leq.astype(int) @ leq.astype(int)) > 0
        transitive = bool(np.all(leq | ~composed))
        return reflexive and antisymmetric and transitive

    def index(self, element: str) -> int:
        try:
            return self.elements.index(element)
        except ValueError:
            raise UnknownElement(f"'{element}' is not an element of the poset") from None

    def precedes(self, a: str, b: str) -> bool:
        return bool(self.leq[self.index(a), self.index(b)])

    def up_set(self, element: str) -> set[str]:
        col = self.leq[:, self.index(element)]
        return {self.elements[i] for i in np.flatnonzero(col)}

    def down_set(self, element: str) -> set[str]:
        row = self.leq[self.index(element), :]
        return {self.elements[i] for i in np.flatnonzero(row)}

    def covers(self) -> set[tuple[str, str]]:
        graph = nx.DiGraph()
        graph.add_nodes_from(self.elements)
        n = len(self.elements)
        graph.add_edges_from(
            (self.elements[i], self.elements[j]) for i in range(n) for j in range(n) if i != j and self.leq[i, j]
        )
        return set(nx.transitive_reduction(graph).edges())

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.leq, np.eye(len(self.elements), dtype=bool)))

    def is_chain(self) -> bool:
        """Every pair of elements is comparable."""
        return bool(np.all(self.leq | self.leq.T))

    def is_up_closed(self, subset: Iterable[str]) -> bool:
        subset = set(subset)
        return all(self.up_set(a) <= subset for a in subset)


def poset_from_graph(graph: nx.DiGraph) -> Poset:
    if not nx.is_directed_acyclic_graph(graph):
        cycle = nx.find_cycle(graph)
        raise NotAcyclic(f"Graph has the directed cycle {' -> '.join(str(a) for a, _ in cycle)}")
    elements = tuple(graph.nodes)
    position = {e: i for i, e in enumerate(elements)}
    leq = np.eye(len(elements), dtype=bool)
    for e in elements:
        for reachable in nx.descendants(graph, e):
            leq[position[e], position[reachable]] = True
    return Poset(elements, leq)


def poset_from_dag(q: QuotientGraph) -> Poset:
    return poset_from_graph(q.directed())


def up_set(poset: Poset, element: str) -> set[str]:
    return poset.up_set(element)


def down_set(poset: Poset, element: str) -> set[str]:
    return poset.down_set(element)


@dataclass(frozen=True)
class BlockPartition:
    """Assigns every scalar index of a vector to a labelled block."""

    labels: tuple[str, ...]
    block_of_index: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(b < 0 or b >= len(self.labels) for b in self.block_of_index):
            raise DimensionMismatch("block_of_index references a block that does not exist")

    @classmethod
    def from_sizes(cls, labels: Sequence[str], sizes: Sequence[int]) -> BlockPartition:
        if len(labels) != len(sizes):
            raise DimensionMismatch("labels and sizes differ in length")
        return cls(tuple(labels), tuple(b for b, size in enumerate(sizes) for _ in range(size)))

    @classmethod
    def from_labels(cls, index_labels: Sequence[str], order: Sequence[str] | None = None) -> BlockPartition:
        labels = list(order) if order is not None else list(dict.fromkeys(index_labels))
        missing = set(index_labels) - set(labels)
        if missing:
            raise UnknownElement(f"Indices reference blocks {sorted(missing)} outside the given order")
        position = {label: b for b, label in enumerate(labels)}
        return cls(tuple(labels), tuple(position[label] for label in index_labels))

    @property
    def size(self) -> int:
        return len(self.block_of_index)

    @property
    def block_sizes(self) -> tuple[int, ...]:
        counts = [0] * len(self.labels)
        for b in self.block_of_index:
            counts[b] += 1
        return tuple(counts)

    def indices(self, label: str) -> np.ndarray:
        b = self.labels.index(label)
        return np.array([i for i, block in enumerate(self.block_of_index) if block == b], dtype=int)


def in_block_incidence_algebra(
    M: np.ndarray,
    rows: BlockPartition,
    cols: BlockPartition,
    poset: Poset,
    tol: float = 1e-12,
) -> tuple[bool, list[tuple[str, str]]]:
    """Block (j, i) may be nonzero only when column block i precedes row block j."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        M = M.reshape(rows.size, cols.size)
    if M.shape != (rows.size, cols.size):
        raise DimensionMismatch(f"Matrix is {M.shape}, partitions describe {(rows.size, cols.size)}")

    violations: list[tuple[str, str]] = []
    for row_label in rows.labels:
        r = rows.indices(row_label)
        for col_label in cols.labels:
            if poset.precedes(col_label, row_label):
                continue
            c = cols.indices(col_label)
            if r.size == 0 or c.size == 0:
                continue
            if np.max(np.abs(M[np.ix_(r, c)])) > tol:
                violations.append((row_label, col_label))
    return not violations, violations


@dataclass(frozen=True)
class StructureClass:
    kind: StructureKind
    coordinator: frozenset[str] = field(default_factory=frozenset)
    leader: str | None = None

    def describe(self) -> str:
        if self.kind == "LeaderFollower":
            return f"LeaderFollower, leader = {self.leader}"
        if self.kind == "Coordinated":
            return f"Coordinated, coordinator = {{{', '.join(sorted(self.coordinator))}}}"
        return self.kind


def is_leader_follower(poset: Poset) -> bool:
    return len(poset.elements) == 2 and not poset.is_identity()


def is_coordinated(poset: Poset) -> bool:
    return _star_center(poset) is not None


def is_hierarchical(poset: Poset) -> bool:
    if len(poset.elements) == 1:
        return True
    undirected = nx.Graph()
    undirected.add_nodes_from(poset.elements)
    undirected.add_edges_from(poset.covers())
    return nx.is_tree(undirected)


def is_poset_causal(poset: Poset) -> bool:
    return poset.satisfies_axioms()


def _star_center(poset: Poset) -> tuple[str, Literal["out", "in"]] | None:
    covers = poset.covers()
    p = len(poset.elements)
    if p < 2 or len(covers) != p - 1:
        return None
    sources = {a for a, _ in covers}
    targets = {b for _, b in covers}
    if len(sources) == 1:
        center = next(iter(sources))
        if targets == set(poset.elements) - {center}:
            return center, "out"
    if len(targets) == 1:
        center = next(iter(targets))
        if sources == set(poset.elements) - {center}:
            return center, "in"
    return None


def classify_structure(poset: Poset, q: QuotientGraph | None = None) -> StructureClass:
    if q is not None and set(q.nodes) != set(poset.elements):
        raise UnknownElement("Poset elements do not match the quotient graph nodes")

    p = len(poset.elements)
    if p > 1 and poset.is_identity():
        return StructureClass("Decoupled")

    if is_leader_follower(poset):
        a, b = poset.elements
        leader = a if poset.precedes(a, b) else b
        return StructureClass("LeaderFollower", coordinator=frozenset({leader}), leader=leader)

    star = _star_center(poset)
    if star is not None:
        center, direction = star
        if direction == "out":
            return StructureClass("Coordinated", coordinator=frozenset({center}))
        # in-star: the sources together act as the coordinator
        return StructureClass("Coordinated", coordinator=frozenset(poset.elements) - {center})

    if is_hierarchical(poset):
        return StructureClass("Hierarchical")
    return StructureClass("PosetCausal")
