from __future__ import annotations

import itertools

import networkx as nx
import numpy as np
import pytest

from src.acdc_poset.errors import DimensionMismatch, InvariantError, NotAcyclic, UnknownElement
from src.acdc_poset.grid import QuotientGraph, build_quotient_graph, connected_components
from src.acdc_poset.poset import (
    BlockPartition,
    Poset,
    classify_structure,
    in_block_incidence_algebra,
    is_coordinated,
    is_hierarchical,
    is_poset_causal,
    poset_from_dag,
    poset_from_graph,
    up_set,
)


def _quotient(nodes: list[str], edges: list[tuple[str, str]], kinds: dict[str, str] | None = None) -> QuotientGraph:
    return QuotientGraph(
        nodes=tuple(nodes),
        kinds=kinds or {n: n[:2] for n in nodes},
        edges=frozenset(edges),
        underlying_edges=frozenset(frozenset(e) for e in edges),
    )


def _random_dag(rng: np.random.Generator, n: int) -> nx.DiGraph:
    order = [f"x{k}" for k in rng.permutation(n)]
    graph = nx.DiGraph()
    graph.add_nodes_from(order)
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() < 0.35:
            graph.add_edge(order[i], order[j])
    return graph


def test_single_node_is_identity():
    q = _quotient(["AC1"], [])
    poset = poset_from_dag(q)
    assert poset.leq.tolist() == [[True]]
    assert poset.satisfies_axioms()


def test_chain_is_transitive():
    poset = Poset.chain(["a", "b", "c"])
    assert poset.precedes("a", "c")
    assert not poset.precedes("c", "a")
    assert up_set(poset, "c") == {"a", "b", "c"}
    assert poset.down_set("a") == {"a", "b", "c"}
    assert poset.covers() == {("a", "b"), ("b", "c")}


def test_antichain_up_set():
    assert up_set(Poset.antichain(["a", "b"]), "a") == {"a"}


def test_unknown_element():
    with pytest.raises(UnknownElement):
        Poset.chain(["a", "b"]).up_set("z")


def test_cycle_is_rejected():
    with pytest.raises(NotAcyclic):
        poset_from_graph(nx.DiGraph([("a", "b"), ("b", "a")]))


def test_relation_must_be_antisymmetric():
    with pytest.raises(InvariantError):
        Poset(("a", "b"), np.ones((2, 2), dtype=bool))


def test_fig_acyclic_reachability(fig_acyclic):
    q = build_quotient_graph(fig_acyclic.grid, connected_components(fig_acyclic.grid))
    poset = poset_from_dag(q)
    # bus 1 -> D1 -> bus 3 -> D2 -> bus 4
    assert poset.precedes("AC1", "AC3")
    assert up_set(poset, "AC3") == {label for label in q.nodes if nx.has_path(q.directed(), label, "AC3")}
    assert classify_structure(poset, q).kind == "PosetCausal"


def test_fig_acyclic_bus_one_precedes_bus_four(fig_acyclic):
    smap = connected_components(fig_acyclic.grid)
    poset = poset_from_dag(build_quotient_graph(fig_acyclic.grid, smap))
    first, last = smap.subgrid_of(1).label, smap.subgrid_of(4).label
    # subgrids are numbered by component, so the subgrid of bus 4 is the third AC subgrid
    assert (first, last) == ("AC1", "AC3")
    assert poset.precedes(first, last)
    assert not poset.precedes(last, first)
    for dc_bus in ("D1", "D2"):
        assert poset.precedes(first, smap.subgrid_of(dc_bus).label)
        assert poset.precedes(smap.subgrid_of(dc_bus).label, last)


def test_random_dags_match_reachability(rng):
    for _ in range(40):
        graph = _random_dag(rng, int(rng.integers(1, 9)))
        poset = poset_from_graph(graph)
        assert poset.satisfies_axioms()
        for a, b in itertools.product(graph.nodes, repeat=2):
            assert poset.precedes(a, b) == (a == b or nx.has_path(graph, a, b))


def test_block_lower_triangular_on_chain():
    part = BlockPartition.from_sizes(["1", "2", "3"], [1, 2, 1])
    M = np.tril(np.ones((4, 4)))
    ok, violations = in_block_incidence_algebra(M, part, part, Poset.chain(["1", "2", "3"]))
    assert ok and violations == []


def test_nonzero_block_outside_algebra_is_reported():
    part = BlockPartition.from_sizes(["1", "2"], [1, 1])
    M = np.array([[1.0, 0.5], [0.0, 1.0]])
    ok, violations = in_block_incidence_algebra(M, part, part, Poset.chain(["1", "2"]))
    assert not ok
    assert violations == [("1", "2")]


def test_block_diagonal_is_in_every_algebra(rng):
    part = BlockPartition.from_sizes(["a", "b", "c"], [2, 1, 2])
    M = np.zeros((5, 5))
    M[:2, :2] = rng.normal(size=(2, 2))
    M[2, 2] = 1.0
    M[3:, 3:] = rng.normal(size=(2, 2))
    for poset in (Poset.antichain(["a", "b", "c"]), Poset.chain(["c", "a", "b"])):
        assert in_block_incidence_algebra(M, part, part, poset)[0]


def test_membership_dimension_mismatch():
    part = BlockPartition.from_sizes(["a"], [2])
    with pytest.raises(DimensionMismatch):
        in_block_incidence_algebra(np.zeros((3, 3)), part, part, Poset.antichain(["a"]))


def test_membership_is_monotone_in_the_poset(rng):
    for _ in range(20):
        graph = _random_dag(rng, 5)
        poset = poset_from_graph(graph)
        part = BlockPartition.from_sizes(list(poset.elements), [1] * 5)
        M = np.where(poset.leq.T, rng.normal(size=(5, 5)), 0.0)
        assert in_block_incidence_algebra(M, part, part, poset)[0]
        extra = list(nx.topological_sort(graph))
        richer = poset_from_graph(nx.compose(graph, nx.DiGraph(list(zip(extra[:-1], extra[1:])))))
        assert in_block_incidence_algebra(M, part, part, richer)[0]


def test_out_star_from_one_dc_is_coordinated():
    q = _quotient(["DC1", "AC1", "AC2", "AC3"], [("DC1", "AC1"), ("DC1", "AC2"), ("DC1", "AC3")])
    structure = classify_structure(poset_from_dag(q), q)
    assert structure.kind == "Coordinated"
    assert structure.coordinator == frozenset({"DC1"})


def test_in_star_reports_sources_as_coordinator():
    q = _quotient(["DC1", "AC1", "AC2"], [("AC1", "DC1"), ("AC2", "DC1")])
    structure = classify_structure(poset_from_dag(q), q)
    assert structure.kind == "Coordinated"
    assert structure.coordinator == frozenset({"AC1", "AC2"})


def test_two_nodes_one_edge_is_leader_follower():
    q = _quotient(["AC1", "DC1"], [("AC1", "DC1")])
    structure = classify_structure(poset_from_dag(q), q)
    assert structure.kind == "LeaderFollower"
    assert structure.leader == "AC1"
    assert structure.describe() == "LeaderFollower, leader = AC1"


def test_disconnected_subgrids_are_decoupled():
    q = _quotient(["AC1", "DC1"], [])
    assert classify_structure(poset_from_dag(q), q).kind == "Decoupled"


def test_directed_tree_is_hierarchical():
    q = _quotient(
        ["AC1", "DC1", "DC2", "AC2", "AC3"],
        [("AC1", "DC1"), ("AC1", "DC2"), ("DC1", "AC2"), ("DC2", "AC3")],
    )
    assert classify_structure(poset_from_dag(q), q).kind == "Hierarchical"


def test_classification_rejects_mismatched_quotient():
    q = _quotient(["AC1", "DC1"], [("AC1", "DC1")])
    with pytest.raises(UnknownElement):
        classify_structure(Poset.antichain(["x", "y"]), q)


def test_specificity_chain_on_random_posets(rng):
    for _ in range(100):
        poset = poset_from_graph(_random_dag(rng, int(rng.integers(1, 7))))
        kind = classify_structure(poset).kind
        if kind == "LeaderFollower":
            assert is_coordinated(poset)
        if kind in ("LeaderFollower", "Coordinated"):
            assert is_hierarchical(poset)
        assert is_poset_causal(poset)


def test_partition_from_labels_keeps_order():
    part = BlockPartition.from_labels(["b", "a", "b"], ["a", "b"])
    assert part.labels == ("a", "b")
    assert part.block_sizes == (1, 2)
    assert part.indices("b").tolist() == [0, 2]


def test_chain_detection():
    assert Poset.chain(["a", "b", "c"]).is_chain()
    assert not Poset.antichain(["a", "b"]).is_chain()
    assert not Poset.from_pairs(["a", "b", "c"], [("a", "b"), ("a", "c")]).is_chain()
