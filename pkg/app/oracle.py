"""Exhaustive schedulers used as ground truth for small instances."""

from __future__ import annotations

import itertools
import logging
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass

import numpy as np

from app.config import CAPACITY, CAPACITY_EPS
from app.dag import DagGraph, EdgeAction, JobNode, add_edge, dag_from_document, legal_actions, merge_dags
from app.simulator import CP, SJF, PriorityRule, makespan

logger = logging.getLogger(__name__)

MAX_ORACLE_NODES = 9


@dataclass(frozen=True, slots=True)
class EdgeImprovement:
    graph: DagGraph
    action: EdgeAction
    before: dict[str, float]
    after: dict[str, float]


def _guard(g: DagGraph) -> None:
    if len(g.task_ids()) > MAX_ORACLE_NODES:
        raise ValueError(f"Exhaustive search limited to {MAX_ORACLE_NODES} task nodes")


def best_list_schedule(g: DagGraph) -> tuple[tuple[int, ...], float]:
    """Best FIXED_ORDER list schedule over every priority permutation."""
    _guard(g)
    prefix = () if g.virtual_root is None else (g.virtual_root,)
    best_order: tuple[int, ...] = tuple(range(g.size))
    best = float("inf")
    for perm in itertools.permutations(g.task_ids()):
        order = prefix + perm
        value = makespan(g, PriorityRule.fixed(order))
        if value < best:
            best, best_order = value, order
    return best_order, best


def _topological_orders(g: DagGraph) -> Iterator[list[int]]:
    indegree = [len(p) for p in g.parents]
    order: list[int] = []

    def extend() -> Iterator[list[int]]:
        if len(order) == g.size:
            yield list(order)
            return
        for u in range(g.size):
            if indegree[u] == 0 and u not in order:
                order.append(u)
                for c in g.children[u]:
                    indegree[c] -= 1
                yield from extend()
                for c in g.children[u]:
                    indegree[c] += 1
                order.pop()

    yield from extend()


def _fits(placed: Sequence[tuple[float, float, float]], t: float, p: float, r: float) -> bool:
    points = [t] + [s for s, _, _ in placed if t < s < t + p]
    for x in points:
        used = sum(res for s, f, res in placed if s <= x < f)
        if used + r > CAPACITY + CAPACITY_EPS:
            return False
    return True


def serial_schedule(g: DagGraph, order: Sequence[int]) -> dict[int, float]:
    """Place each node, in order, at its earliest precedence- and capacity-feasible start."""
    placed: list[tuple[float, float, float]] = []
    start: dict[int, float] = {}
    finish: dict[int, float] = {}
    for u in order:
        p = g.nodes[u].runtime
        r = g.nodes[u].resource
        earliest = max((finish[q] for q in g.parents[u]), default=0.0)
        candidates = sorted({earliest} | {f for _, f, _ in placed if f > earliest})
        chosen = candidates[-1]
        for t in candidates:
            if _fits(placed, t, p, r):
                chosen = t
                break
        start[u] = chosen
        finish[u] = chosen + p
        placed.append((chosen, chosen + p, r))
    return start


def optimal_makespan(g: DagGraph) -> float:
    """True optimum: the serial scheme over all precedence-feasible orders reaches it."""
    _guard(g)
    best = float("inf")
    for order in _topological_orders(g):
        start = serial_schedule(g, order)
        value = max((start[u] + g.nodes[u].runtime for u in start), default=0.0)
        best = min(best, value)
    return 0.0 if best == float("inf") else best


def random_small_dags(
    rng: np.random.Generator,
    count: int,
    tasks: int = 4,
    edge_prob: float = 0.3,
) -> Iterator[DagGraph]:
    """Merged single-DAG instances with small integer runtimes and tenth-unit resources."""
    for _ in range(count):
        nodes = [
            JobNode(
                id=i,
                runtime=float(rng.integers(1, 6)),
                resource=float(rng.integers(1, 11)) / 10.0,
            )
            for i in range(tasks)
        ]
        edges = [
            (u, v)
            for u in range(tasks)
            for v in range(u + 1, tasks)
            if rng.random() < edge_prob
        ]
        yield merge_dags([DagGraph.build(nodes, edges)])


def find_edge_improvement(
    graphs: Iterable[DagGraph],
    rules: Sequence[PriorityRule] = (SJF, CP),
) -> EdgeImprovement | None:
    """First graph and legal edge that strictly lowers the makespan of every rule."""
    for g in graphs:
        before = {rule.label: makespan(g, rule) for rule in rules}
        for action in legal_actions(g):
            augmented = add_edge(g, action)
            after = {rule.label: makespan(augmented, rule) for rule in rules}
            if all(after[label] < before[label] for label in before):
                logger.info("Edge (%d, %d) improves %s -> %s", action.start, action.end, before, after)
                return EdgeImprovement(graph=g, action=action, before=before, after=after)
    return None


def oracle_table(instances: Sequence[dict]) -> list[dict]:
    rows = []
    for item in instances:
        g = dag_from_document(item["dag"])
        _, best_list = best_list_schedule(g)
        rows.append(
            {
                "name": item["name"],
                "optimal": optimal_makespan(g),
                "best_list": best_list,
            }
        )
    return rows
