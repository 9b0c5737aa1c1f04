from __future__ import annotations

import networkx as nx
import numpy as np
import pytest

from app.dag import (
    DagError,
    DagFormatError,
    DagGraph,
    EdgeAction,
    EdgeConflictError,
    JobNode,
    add_edge,
    dag_from_document,
    dag_to_document,
    is_conflicting,
    legal_actions,
    merge_dags,
    qualified_ending_nodes,
    qualified_starting_nodes,
    strip_virtual_root,
)
from app.oracle import random_small_dags


def _nodes(count: int, runtime: float = 1.0, resource: float = 0.5) -> list[JobNode]:
    return [JobNode(id=i, runtime=runtime, resource=resource) for i in range(count)]


def _chain(count: int) -> DagGraph:
    return DagGraph.build(_nodes(count), [(i, i + 1) for i in range(count - 1)])


def _random_dag(rng: np.random.Generator, count: int, prob: float) -> DagGraph:
    edges = [(u, v) for u in range(count) for v in range(u + 1, count) if rng.random() < prob]
    perm = rng.permutation(count)
    return DagGraph.build(_nodes(count), [(int(perm[u]), int(perm[v])) for u, v in edges])


def _networkx_reach(g: DagGraph) -> np.ndarray:
    graph = nx.DiGraph()
    graph.add_nodes_from(range(g.size))
    graph.add_edges_from(g.edges)
    reach = np.zeros((g.size, g.size), dtype=bool)
    for u in range(g.size):
        for v in nx.descendants(graph, u):
            reach[u, v] = True
    return reach


def test_merge_chain_and_diamond() -> None:
    chain = _chain(3)
    diamond = DagGraph.build(_nodes(4), [(0, 1), (0, 2), (1, 3), (2, 3)])

    merged = merge_dags([chain, diamond])

    assert merged.size == 8
    assert merged.virtual_root == 0
    assert sorted(merged.children[0]) == [1, 4]
    assert merged.nodes[0].runtime == 0 and merged.nodes[0].resource == 0


def test_merge_single_node_and_empty_list() -> None:
    merged = merge_dags([DagGraph.build(_nodes(1), [])])
    assert merged.size == 2
    assert merged.edges == frozenset({(0, 1)})

    with pytest.raises(DagError):
        merge_dags([])


def test_conflicts_on_chain() -> None:
    g = _chain(3)
    assert is_conflicting(g, EdgeAction(0, 2))
    assert is_conflicting(g, EdgeAction(2, 0))

    free = DagGraph.build(_nodes(2), [])
    assert not is_conflicting(free, EdgeAction(0, 1))


def test_conflict_unknown_node_and_root_endpoints() -> None:
    g = merge_dags([DagGraph.build(_nodes(2), [])])
    with pytest.raises(DagError):
        is_conflicting(g, EdgeAction(0, 7))
    assert is_conflicting(g, EdgeAction(0, 1))
    assert is_conflicting(g, EdgeAction(1, 0))
    assert not is_conflicting(g, EdgeAction(1, 2))


def test_add_edge_updates_reachability_and_blocks_reverse() -> None:
    g = DagGraph.build(_nodes(2), [])
    augmented = add_edge(g, EdgeAction(0, 1))

    assert augmented.reaches(0, 1)
    assert not g.reaches(0, 1)
    assert is_conflicting(augmented, EdgeAction(1, 0))
    with pytest.raises(EdgeConflictError):
        add_edge(augmented, EdgeAction(1, 0))


def test_incremental_reachability_matches_recomputation() -> None:
    rng = np.random.default_rng(7)
    for _ in range(20):
        g = _random_dag(rng, 10, 0.2)
        for _ in range(6):
            actions = legal_actions(g)
            if not actions:
                break
            g = add_edge(g, actions[int(rng.integers(len(actions)))])
            np.testing.assert_array_equal(g.reach, _networkx_reach(g))
            rebuilt = DagGraph.build(g.nodes, g.edges)
            np.testing.assert_array_equal(g.reach, rebuilt.reach)
            assert g.topological_order()


def test_qualified_nodes_trivial_cases() -> None:
    merged = merge_dags([DagGraph.build(_nodes(1), []), DagGraph.build(_nodes(1), [])])
    assert qualified_starting_nodes(merged) == [1, 2]
    assert qualified_ending_nodes(merged, 1) == [2]

    assert qualified_starting_nodes(merge_dags([_chain(4)])) == []
    assert qualified_ending_nodes(_chain(4), 0) == []


def test_qualified_nodes_match_pair_enumeration() -> None:
    rng = np.random.default_rng(3)
    for _ in range(15):
        g = merge_dags([_random_dag(rng, 8, 0.25)])
        pairs = [
            (u, v)
            for u in range(g.size)
            for v in range(g.size)
            if u != v and not is_conflicting(g, EdgeAction(u, v))
        ]
        assert qualified_starting_nodes(g) == sorted({u for u, _ in pairs})
        for u in qualified_starting_nodes(g):
            assert qualified_ending_nodes(g, u) == sorted(v for s, v in pairs if s == u)
        assert {(a.start, a.end) for a in legal_actions(g)} == set(pairs)


def test_build_rejects_cycles_and_bad_values() -> None:
    with pytest.raises(DagError):
        DagGraph.build(_nodes(2), [(0, 1), (1, 0)])
    with pytest.raises(DagFormatError):
        DagGraph.build([JobNode(id=0, runtime=1.0, resource=1.5)], [])
    with pytest.raises(DagFormatError):
        DagGraph.build([JobNode(id=0, runtime=-1.0, resource=0.5)], [])
    with pytest.raises(DagFormatError):
        DagGraph.build(_nodes(2), [(0, 5)])


def test_document_round_trip_and_strip_root() -> None:
    for g in random_small_dags(np.random.default_rng(11), 5, tasks=5, edge_prob=0.4):
        assert dag_from_document(dag_to_document(g)) == g
        stripped, old_ids = strip_virtual_root(g)
        assert stripped.virtual_root is None
        assert old_ids == list(range(1, g.size))
        assert stripped.size == g.size - 1


@pytest.mark.parametrize("root", [7, 1, -1, "first"])
def test_out_of_range_virtual_root_is_a_format_error(root) -> None:
    document = {"nodes": [{"id": 0, "runtime": 0.0, "resource": 0.0}], "edges": [], "virtual_root": root}
    with pytest.raises(DagFormatError):
        dag_from_document(document)


def test_virtual_root_in_range_is_kept() -> None:
    document = {
        "nodes": [{"id": 0, "runtime": 0.0, "resource": 0.0}, {"id": 1, "runtime": 2.0, "resource": 0.5}],
        "edges": [[0, 1]],
        "virtual_root": 0,
    }
    assert dag_from_document(document).virtual_root == 0
