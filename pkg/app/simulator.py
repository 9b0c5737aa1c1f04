"""Event-driven non-preemptive list scheduling under one unit of resource."""

from __future__ import annotations

import heapq
import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Literal

from app.config import CAPACITY, CAPACITY_EPS, RuleName
from app.dag import DagGraph

logger = logging.getLogger(__name__)

RuleTag = Literal["sjf", "cp", "tetris", "fixed"]


class InfeasibleInstanceError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class PriorityRule:
    tag: RuleTag
    order: tuple[int, ...] = field(default=())

    @classmethod
    def named(cls, name: RuleName | str) -> PriorityRule:
        if name not in ("sjf", "cp", "tetris"):
            raise ValueError(f"Unknown priority rule: {name}")
        return cls(tag=name)  # type: ignore[arg-type]

    @classmethod
    def fixed(cls, order: Sequence[int]) -> PriorityRule:
        return cls(tag="fixed", order=tuple(int(i) for i in order))

    @property
    def label(self) -> str:
        return "fixed_order" if self.tag == "fixed" else self.tag


SJF = PriorityRule(tag="sjf")
CP = PriorityRule(tag="cp")
TETRIS = PriorityRule(tag="tetris")


@dataclass(frozen=True, slots=True)
class Schedule:
    start_time: Mapping[int, float]
    finish_time: Mapping[int, float]

    @property
    def makespan(self) -> float:
        if not self.finish_time:
            return 0.0
        return max(self.finish_time.values())


def cp_priority(g: DagGraph) -> dict[int, float]:
    """Longest runtime sum from each node down to any leaf, the node included."""
    priority: dict[int, float] = {}
    for u in reversed(g.topological_order()):
        tail = max((priority[c] for c in g.children[u]), default=0.0)
        priority[u] = g.nodes[u].runtime + tail
    return priority


def _static_keys(g: DagGraph, rule: PriorityRule) -> dict[int, tuple]:
    if rule.tag == "sjf":
        return {node.id: (node.runtime, node.id) for node in g.nodes}
    if rule.tag == "cp":
        priority = cp_priority(g)
        return {u: (-value, u) for u, value in priority.items()}
    if rule.tag == "fixed":
        if sorted(rule.order) != list(range(g.size)):
            raise ValueError("FIXED_ORDER must be a permutation of node ids")
        return {u: (position, u) for position, u in enumerate(rule.order)}
    return {}


def simulate(g: DagGraph, rule: PriorityRule) -> Schedule:
    for node in g.nodes:
        if node.resource > CAPACITY + CAPACITY_EPS:
            raise InfeasibleInstanceError(
                f"Node {node.id} requires {node.resource} > capacity {CAPACITY}"
            )
    keys = _static_keys(g, rule)
    runtimes = [node.runtime for node in g.nodes]
    resources = [node.resource for node in g.nodes]
    waiting = [len(p) for p in g.parents]
    ready = {u for u in range(g.size) if waiting[u] == 0}
    running: list[tuple[float, int]] = []
    start_time: dict[int, float] = {}
    finish_time: dict[int, float] = {}
    available = CAPACITY
    now = 0.0

    while ready or running:
        if rule.tag == "tetris":
            # 1-D alignment score: demand times remaining capacity, at this event.
            candidates = sorted(ready, key=lambda u: (-resources[u] * available, u))
        else:
            candidates = sorted(ready, key=keys.__getitem__)
        for u in candidates:
            if resources[u] <= available + CAPACITY_EPS:
                ready.discard(u)
                available -= resources[u]
                start_time[u] = now
                finish = now + runtimes[u]
                finish_time[u] = finish
                heapq.heappush(running, (finish, u))
        if not running:
            raise InfeasibleInstanceError("Scheduler stalled with unscheduled ready nodes")
        now = running[0][0]
        while running and running[0][0] <= now:
            _, done = heapq.heappop(running)
            available += resources[done]
            for child in g.children[done]:
                waiting[child] -= 1
                if waiting[child] == 0:
                    ready.add(child)
        if not running:
            # Reset float drift once the machine is idle.
            available = CAPACITY

    return Schedule(start_time=start_time, finish_time=finish_time)


def makespan(g: DagGraph, rule: PriorityRule) -> float:
    return simulate(g, rule).makespan


def verify_schedule(g: DagGraph, schedule: Schedule) -> list[str]:
    """Return every violated precedence, capacity or duration invariant."""
    problems: list[str] = []
    if set(schedule.start_time) != set(range(g.size)):
        problems.append("schedule does not cover every node")
        return problems
    for node in g.nodes:
        start = schedule.start_time[node.id]
        if start < 0:
            problems.append(f"node {node.id} starts before 0")
        if schedule.finish_time[node.id] != start + node.runtime:
            problems.append(f"node {node.id} does not run contiguously")
    for u, v in sorted(g.edges):
        if schedule.finish_time[u] > schedule.start_time[v]:
            problems.append(f"edge ({u}, {v}) violated")
    events: list[tuple[float, int, float]] = []
    for node in g.nodes:
        if node.runtime > 0:
            events.append((schedule.start_time[node.id], 1, node.resource))
            events.append((schedule.finish_time[node.id], 0, -node.resource))
    # Finishes sort before starts at equal times.
    usage = 0.0
    for time, _, delta in sorted(events):
        usage += delta
        if usage > CAPACITY + CAPACITY_EPS:
            problems.append(f"capacity exceeded at t={time}: {usage}")
    return problems


def export_schedule(schedule: Schedule) -> str:
    lines = ["node,start,finish"]
    for node in sorted(schedule.start_time):
        lines.append(
            f"{node},{schedule.start_time[node]:.6f},{schedule.finish_time[node]:.6f}"
        )
    lines.append(f"makespan,{schedule.makespan:.6f}")
    return "\n".join(lines) + "\n"
