from __future__ import annotations

import itertools

import numpy as np
import pytest

from app.dag import DagGraph, JobNode, merge_dags
from app.dataset import generate_dag
from app.models import GeneratorConfig
from app.oracle import best_list_schedule, optimal_makespan, random_small_dags
from app.simulator import (
    CP,
    SJF,
    TETRIS,
    InfeasibleInstanceError,
    PriorityRule,
    cp_priority,
    export_schedule,
    makespan,
    simulate,
    verify_schedule,
)


def _pair(resource: float) -> DagGraph:
    nodes = [JobNode(0, 5.0, resource), JobNode(1, 7.0, resource)]
    return DagGraph.build(nodes, [])


def test_parallel_and_serial_pairs() -> None:
    for rule in (SJF, CP, TETRIS):
        assert makespan(_pair(0.5), rule) == 7.0
        assert makespan(_pair(1.0), rule) == 12.0


def test_cp_priority_chain_and_single() -> None:
    chain = DagGraph.build(
        [JobNode(0, 3.0, 0.1), JobNode(1, 2.0, 0.1), JobNode(2, 1.0, 0.1)], [(0, 1), (1, 2)]
    )
    assert cp_priority(chain) == {0: 6.0, 1: 3.0, 2: 1.0}
    assert cp_priority(DagGraph.build([JobNode(0, 5.0, 0.1)], [])) == {0: 5.0}


def test_cp_priority_matches_path_enumeration() -> None:
    rng = np.random.default_rng(5)
    for g in random_small_dags(rng, 20, tasks=9, edge_prob=0.35):
        def longest(u: int) -> float:
            return g.nodes[u].runtime + max((longest(c) for c in g.children[u]), default=0.0)

        priority = cp_priority(g)
        for u in range(g.size):
            assert priority[u] == pytest.approx(longest(u))


def test_chain_makespan_is_runtime_sum() -> None:
    nodes = [JobNode(i, float(i + 1), 0.3) for i in range(4)]
    chain = DagGraph.build(nodes, [(0, 1), (1, 2), (2, 3)])
    for rule in (SJF, CP, TETRIS):
        assert makespan(chain, rule) == 10.0


def test_root_only_graph_has_zero_makespan() -> None:
    root_only = DagGraph.build([JobNode(0, 0.0, 0.0)], [], virtual_root=0)
    assert makespan(root_only, SJF) == 0.0


def test_oversized_resource_is_infeasible() -> None:
    g = DagGraph.build([JobNode(0, 1.0, 1.0)], [])
    object.__setattr__(g, "nodes", (JobNode(0, 1.0, 1.5),))
    with pytest.raises(InfeasibleInstanceError):
        simulate(g, SJF)


def test_backfilling_skips_nodes_that_do_not_fit() -> None:
    nodes = [JobNode(0, 1.0, 0.7), JobNode(1, 2.0, 0.6), JobNode(2, 3.0, 0.3)]
    schedule = simulate(DagGraph.build(nodes, []), SJF)
    assert schedule.start_time == {0: 0.0, 2: 0.0, 1: 1.0}


def test_schedules_respect_invariants_and_oracle_bound() -> None:
    rng = np.random.default_rng(17)
    for g in random_small_dags(rng, 30, tasks=6, edge_prob=0.3):
        optimum = optimal_makespan(g)
        for rule in (SJF, CP, TETRIS):
            schedule = simulate(g, rule)
            assert verify_schedule(g, schedule) == []
            assert schedule.makespan >= optimum - 1e-9


def test_fixed_order_reproduces_best_list_schedule() -> None:
    rng = np.random.default_rng(23)
    for g in random_small_dags(rng, 10, tasks=5, edge_prob=0.3):
        order, best = best_list_schedule(g)
        assert makespan(g, PriorityRule.fixed(order)) == best
        assert best >= optimal_makespan(g) - 1e-9


def test_fixed_order_must_be_permutation() -> None:
    with pytest.raises(ValueError):
        simulate(_pair(0.5), PriorityRule.fixed([0, 0]))


def test_no_idle_while_a_ready_node_fits() -> None:
    rng = np.random.default_rng(29)
    for g in random_small_dags(rng, 15, tasks=6, edge_prob=0.3):
        schedule = simulate(g, SJF)
        finish = schedule.finish_time
        events = sorted({0.0, *finish.values()})
        for t in events:
            running = [u for u in range(g.size) if schedule.start_time[u] <= t < finish[u]]
            used = sum(g.nodes[u].resource for u in running)
            for u in range(g.size):
                ready = all(finish[p] <= t for p in g.parents[u])
                if ready and schedule.start_time[u] > t:
                    assert used + g.nodes[u].resource > 1.0 + 1e-9


def test_merged_graph_matches_joint_scheduling() -> None:
    rng = np.random.default_rng(31)
    parts = [next(random_small_dags(rng, 1, tasks=3)) for _ in range(5)]
    raw = []
    for part in parts:
        nodes = [JobNode(n.id - 1, n.runtime, n.resource) for n in part.nodes[1:]]
        edges = [(u - 1, v - 1) for u, v in part.edges if u != 0]
        raw.append(DagGraph.build(nodes, edges))
    merged = merge_dags(raw)

    offset = 0
    nodes, edges = [], []
    for dag in raw:
        nodes += [JobNode(n.id + offset, n.runtime, n.resource) for n in dag.nodes]
        edges += [(u + offset, v + offset) for u, v in dag.edges]
        offset += dag.size
    joint = DagGraph.build(nodes, edges)
    for rule in (SJF, CP):
        assert makespan(merged, rule) == makespan(joint, rule)


def test_determinism_and_export_format() -> None:
    g = next(random_small_dags(np.random.default_rng(2), 1, tasks=4))
    first, second = simulate(g, CP), simulate(g, CP)
    assert first == second

    text = export_schedule(first)
    lines = text.strip().splitlines()
    assert lines[0] == "node,start,finish"
    assert lines[-1] == f"makespan,{first.makespan:.6f}"
    assert len(lines) == g.size + 2


@pytest.mark.parametrize("order", list(itertools.permutations([1, 2, 3])))
def test_fixed_order_of_three_independent_nodes(order) -> None:
    g = merge_dags([DagGraph.build([JobNode(0, 1.0, 0.4), JobNode(1, 2.0, 0.4), JobNode(2, 3.0, 0.4)], [])])
    schedule = simulate(g, PriorityRule.fixed((0, *order)))
    assert verify_schedule(g, schedule) == []
    first, second = order[0], order[1]
    assert schedule.start_time[first] == 0.0 and schedule.start_time[second] == 0.0


@pytest.mark.slow
def test_every_rule_is_sound_on_a_thousand_generated_dags() -> None:
    rng = np.random.default_rng(101)
    configs = [GeneratorConfig(), GeneratorConfig(runtime_mode="uniform", resource_dist=0.5)]
    for k in range(1000):
        g = generate_dag(rng, configs[k % 2])
        assert g.size <= 18
        order = tuple(int(u) for u in rng.permutation(g.size))
        for rule in (SJF, CP, TETRIS, PriorityRule.fixed(order)):
            assert verify_schedule(g, simulate(g, rule)) == []
