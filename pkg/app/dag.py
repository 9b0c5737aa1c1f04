"""DAG data model: nodes, merging, reachability and legal edge addition."""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


class DagError(ValueError):
    pass


class EdgeConflictError(DagError):
    pass


class DagFormatError(DagError):
    pass


@dataclass(frozen=True, slots=True)
class JobNode:
    id: int
    runtime: float
    resource: float


@dataclass(frozen=True, slots=True)
class EdgeAction:
    start: int
    end: int


@dataclass(frozen=True, slots=True, eq=False)
class DagGraph:
    """Immutable DAG with a dense reachability index.

    ``reach[u, v]`` is true iff a directed path of length >= 1 leads from u to v.
    """

    nodes: tuple[JobNode, ...]
    edges: frozenset[tuple[int, int]]
    virtual_root: int | None
    reach: np.ndarray
    children: tuple[tuple[int, ...], ...]
    parents: tuple[tuple[int, ...], ...]

    @classmethod
    def build(
        cls,
        nodes: Sequence[JobNode],
        edges: Iterable[tuple[int, int]],
        *,
        virtual_root: int | None = None,
    ) -> DagGraph:
        node_tuple = tuple(nodes)
        for index, node in enumerate(node_tuple):
            if node.id != index:
                raise DagFormatError(f"Node ids must be dense and ordered; got {node.id} at {index}")
            if not np.isfinite(node.runtime) or node.runtime < 0:
                raise DagFormatError(f"Node {index} has invalid runtime {node.runtime}")
            if not (0.0 <= node.resource <= 1.0):
                raise DagFormatError(f"Node {index} resource {node.resource} outside [0, 1]")
        n = len(node_tuple)
        edge_set: set[tuple[int, int]] = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if not (0 <= u < n and 0 <= v < n):
                raise DagFormatError(f"Edge ({u}, {v}) references an unknown node")
            if u == v:
                raise DagFormatError(f"Self-loop on node {u}")
            edge_set.add((u, v))
        if virtual_root is not None:
            if not 0 <= virtual_root < n:
                raise DagFormatError(f"Virtual root {virtual_root} is not a node id")
            root = node_tuple[virtual_root]
            if root.runtime != 0 or root.resource != 0:
                raise DagFormatError("Virtual root must have zero runtime and resource")
            if any(v == virtual_root for _, v in edge_set):
                raise DagFormatError("Virtual root cannot have incoming edges")
        children, parents = _adjacency(n, edge_set)
        reach = compute_reachability(n, children, parents)
        reach.setflags(write=False)
        return cls(
            nodes=node_tuple,
            edges=frozenset(edge_set),
            virtual_root=virtual_root,
            reach=reach,
            children=children,
            parents=parents,
        )

    @property
    def size(self) -> int:
        return len(self.nodes)

    @property
    def runtimes(self) -> np.ndarray:
        return np.array([node.runtime for node in self.nodes], dtype=np.float64)

    @property
    def resources(self) -> np.ndarray:
        return np.array([node.resource for node in self.nodes], dtype=np.float64)

    def task_ids(self) -> list[int]:
        return [node.id for node in self.nodes if node.id != self.virtual_root]

    def reaches(self, u: int, v: int) -> bool:
        return bool(self.reach[u, v])

    def children_matrix(self) -> np.ndarray:
        matrix = np.zeros((self.size, self.size), dtype=np.float64)
        for u, v in self.edges:
            matrix[u, v] = 1.0
        return matrix

    def topological_order(self) -> list[int]:
        order = _kahn(self.size, self.children, self.parents)
        if order is None:
            raise DagError("Graph contains a cycle")
        return order

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DagGraph):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.edges == other.edges
            and self.virtual_root == other.virtual_root
        )

    __hash__ = None  # type: ignore[assignment]


def _adjacency(
    n: int, edges: Iterable[tuple[int, int]]
) -> tuple[tuple[tuple[int, ...], ...], tuple[tuple[int, ...], ...]]:
    children: list[list[int]] = [[] for _ in range(n)]
    parents: list[list[int]] = [[] for _ in range(n)]
    for u, v in sorted(edges):
        children[u].append(v)
        parents[v].append(u)
    return tuple(tuple(c) for c in children), tuple(tuple(p) for p in parents)


def _kahn(
    n: int,
    children: Sequence[Sequence[int]],
    parents: Sequence[Sequence[int]],
) -> list[int] | None:
    indegree = [len(p) for p in parents]
    queue = deque(i for i in range(n) if indegree[i] == 0)
    order: list[int] = []
    while queue:
        u = queue.popleft()
        order.append(u)
        for v in children[u]:
            indegree[v] -= 1
            if indegree[v] == 0:
                queue.append(v)
    if len(order) != n:
        return None
    return order


def compute_reachability(
    n: int,
    children: Sequence[Sequence[int]],
    parents: Sequence[Sequence[int]],
) -> np.ndarray:
    """Recompute the full reachability relation from the edge lists."""
    order = _kahn(n, children, parents)
    if order is None:
        raise DagFormatError("Graph contains a cycle")
    reach = np.zeros((n, n), dtype=bool)
    for u in reversed(order):
        for v in children[u]:
            reach[u, v] = True
            reach[u] |= reach[v]
    return reach


def _check_node(g: DagGraph, node: int) -> None:
    if not (0 <= node < g.size):
        raise DagError(f"Unknown node id {node}")


def merge_dags(dags: Sequence[DagGraph]) -> DagGraph:
    """Merge DAGs under a new virtual root (index 0) linked to every former source."""
    if not dags:
        raise DagError("merge_dags needs at least one DAG")
    nodes: list[JobNode] = [JobNode(id=0, runtime=0.0, resource=0.0)]
    edges: list[tuple[int, int]] = []
    offset = 1
    for dag in dags:
        for node in dag.nodes:
            nodes.append(JobNode(id=node.id + offset, runtime=node.runtime, resource=node.resource))
        for u, v in dag.edges:
            edges.append((u + offset, v + offset))
        for node in dag.nodes:
            if not dag.parents[node.id]:
                edges.append((0, node.id + offset))
        offset += dag.size
    return DagGraph.build(nodes, edges, virtual_root=0)


def is_conflicting(g: DagGraph, a: EdgeAction) -> bool:
    _check_node(g, a.start)
    _check_node(g, a.end)
    if a.start == a.end:
        return True
    if g.virtual_root is not None and g.virtual_root in (a.start, a.end):
        return True
    return bool(g.reach[a.start, a.end] or g.reach[a.end, a.start])


def add_edge(g: DagGraph, a: EdgeAction) -> DagGraph:
    if is_conflicting(g, a):
        raise EdgeConflictError(f"Edge ({a.start}, {a.end}) conflicts with existing paths")
    n = g.size
    ancestors = g.reach[:, a.start].copy()
    ancestors[a.start] = True
    descendants = g.reach[a.end, :].copy()
    descendants[a.end] = True
    reach = g.reach | np.outer(ancestors, descendants)
    reach.setflags(write=False)
    edges = g.edges | {(a.start, a.end)}
    children, parents = _adjacency(n, edges)
    return DagGraph(
        nodes=g.nodes,
        edges=edges,
        virtual_root=g.virtual_root,
        reach=reach,
        children=children,
        parents=parents,
    )


def _free_pairs(g: DagGraph) -> np.ndarray:
    free = ~(g.reach | g.reach.T)
    np.fill_diagonal(free, False)
    if g.virtual_root is not None:
        free[g.virtual_root, :] = False
        free[:, g.virtual_root] = False
    return free


def qualified_starting_nodes(g: DagGraph) -> list[int]:
    free = _free_pairs(g)
    return [int(u) for u in np.flatnonzero(free.any(axis=1))]


def qualified_ending_nodes(g: DagGraph, start: int) -> list[int]:
    _check_node(g, start)
    if start == g.virtual_root:
        return []
    free = _free_pairs(g)
    return [int(v) for v in np.flatnonzero(free[start])]


def legal_actions(g: DagGraph) -> list[EdgeAction]:
    free = _free_pairs(g)
    return [EdgeAction(int(u), int(v)) for u, v in zip(*np.nonzero(free))]


def strip_virtual_root(g: DagGraph) -> tuple[DagGraph, list[int]]:
    """Drop the virtual root; returns the stripped graph and the old id of each new node."""
    if g.virtual_root is None:
        return g, list(range(g.size))
    kept = g.task_ids()
    index = {old: new for new, old in enumerate(kept)}
    nodes = [
        JobNode(id=index[old], runtime=g.nodes[old].runtime, resource=g.nodes[old].resource)
        for old in kept
    ]
    edges = [(index[u], index[v]) for u, v in g.edges if u in index and v in index]
    return DagGraph.build(nodes, edges), kept


def dag_to_document(g: DagGraph) -> dict:
    document: dict = {
        "nodes": [
            {"id": node.id, "runtime": node.runtime, "resource": node.resource}
            for node in g.nodes
        ],
        "edges": [[u, v] for u, v in sorted(g.edges)],
    }
    if g.virtual_root is not None:
        document["virtual_root"] = g.virtual_root
    return document


def dag_from_document(document: dict) -> DagGraph:
    try:
        raw_nodes = sorted(document["nodes"], key=lambda item: int(item["id"]))
        nodes = [
            JobNode(
                id=int(item["id"]),
                runtime=float(item["runtime"]),
                resource=float(item["resource"]),
            )
            for item in raw_nodes
        ]
        edges = [(int(u), int(v)) for u, v in document.get("edges", [])]
        root = document.get("virtual_root")
        virtual_root = None if root is None else int(root)
    except (KeyError, TypeError, ValueError) as exc:
        raise DagFormatError(f"Malformed DAG document: {exc}") from exc
    return DagGraph.build(nodes, edges, virtual_root=virtual_root)
