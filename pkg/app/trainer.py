"""Policy-gradient training: rollouts, reward adjustment and gradient ascent."""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field, replace

import numpy as np

from app.dag import DagGraph, EdgeAction, add_edge, merge_dags
from app.gnn import embed
from app.inference import infer_edges
from app.models import TrainConfig
from app.nn import NoActionError, Tape, backward, sgd_step
from app.policy import (
    ActionDistribution,
    ModelParams,
    end_node_distribution,
    init_model,
    joint_log_prob_tensor,
    start_node_distribution,
)
from app.simulator import PriorityRule, makespan

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[str, int, str], None]


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True, slots=True)
class RolloutRecord:
    graph: DagGraph
    action: EdgeAction
    reward: float


@dataclass(slots=True)
class RolloutBatch:
    graph: DagGraph
    initial_makespan: float
    records: list[list[RolloutRecord]]


@dataclass(slots=True)
class ConvergenceRow:
    iteration: int
    makespans: dict[int, float]


@dataclass(slots=True)
class TrainResult:
    params: ModelParams
    log: list[ConvergenceRow] = field(default_factory=list)


def _choose(dist: ActionDistribution, epsilon: float, rng: np.random.Generator) -> int:
    # Per-decision exploration: with probability epsilon the choice is uniform.
    if epsilon > 0 and rng.random() < epsilon:
        return dist.candidate_ids[int(rng.integers(len(dist.candidate_ids)))]
    return dist.candidate_ids[int(rng.choice(len(dist.candidate_ids), p=dist.probs))]


def rollout(
    dags: Sequence[DagGraph],
    rollouts: int,
    edges: int,
    params: ModelParams,
    rule: PriorityRule,
    epsilon: float,
    rng: np.random.Generator,
    hops: int | None = None,
) -> RolloutBatch:
    graph = merge_dags(dags)
    initial = makespan(graph, rule)
    grid: list[list[RolloutRecord]] = []
    for _ in range(rollouts):
        current = graph
        current_span = initial
        records: list[RolloutRecord] = []
        for _ in range(edges):
            ems = embed(current, params, hops)
            try:
                start = _choose(start_node_distribution(current, ems, params), epsilon, rng)
                end = _choose(end_node_distribution(current, ems, params, start), epsilon, rng)
            except NoActionError:
                break
            action = EdgeAction(start, end)
            nxt = add_edge(current, action)
            next_span = makespan(nxt, rule)
            records.append(RolloutRecord(graph=current, action=action, reward=current_span - next_span))
            current, current_span = nxt, next_span
        grid.append(records)
    return RolloutBatch(graph=graph, initial_makespan=initial, records=grid)


def adjust_rewards(
    records: Sequence[Sequence[RolloutRecord]],
    initial_makespan: float,
    gamma: float = 1.0,
) -> list[list[RolloutRecord]]:
    """Discounted suffix sums, minus the per-step mean across rollouts, over T0."""
    cumulative: list[list[float]] = []
    for row in records:
        sums = [0.0] * len(row)
        running = 0.0
        for j in range(len(row) - 1, -1, -1):
            running = row[j].reward + gamma * running
            sums[j] = running
        cumulative.append(sums)

    depth = max((len(row) for row in cumulative), default=0)
    baseline = []
    for j in range(depth):
        reached = [sums[j] for sums in cumulative if len(sums) > j]
        baseline.append(sum(reached) / len(reached))

    scale = initial_makespan if initial_makespan != 0 else 1.0
    return [
        [
            replace(record, reward=(sums[j] - baseline[j]) / scale)
            for j, record in enumerate(row)
        ]
        for row, sums in zip(records, cumulative)
    ]


def sample_dag_count(rng: np.random.Generator, mean: float, cap: int) -> int:
    return int(np.clip(round(rng.exponential(mean)), 1, cap))


def accumulate_gradients(
    params: ModelParams,
    records: Sequence[Sequence[RolloutRecord]],
    hops: int | None = None,
) -> None:
    """Add sum of reward * grad log p(a|G) over all records into the parameter buffers."""
    for row in records:
        for record in row:
            if record.reward == 0.0:
                continue
            tape = Tape()
            log_prob = joint_log_prob_tensor(tape, record.graph, params, record.action, hops)
            backward(tape, log_prob, record.reward)


def evaluate(
    params: ModelParams,
    eval_sets: Mapping[int, Sequence[DagGraph]],
    rule: PriorityRule,
    edges: int,
    beam: int,
    hops: int | None = None,
) -> dict[int, float]:
    result: dict[int, float] = {}
    for bucket, graphs in sorted(eval_sets.items()):
        spans = [makespan(infer_edges(g, params, edges, beam, hops), rule) for g in graphs]
        result[bucket] = float(np.mean(spans)) if spans else 0.0
    return result


def train(
    dataset: Sequence[DagGraph],
    config: TrainConfig,
    params: ModelParams | None = None,
    eval_sets: Mapping[int, Sequence[DagGraph]] | None = None,
    progress: ProgressCallback | None = None,
) -> TrainResult:
    if not dataset:
        raise ValueError("Training needs a non-empty dataset")
    params = params if params is not None else init_model()
    rule = PriorityRule.named(config.rule)
    rng = np.random.default_rng(config.seed)
    result = TrainResult(params=params)
    params.store.zero_grad()

    for iteration in range(1, config.iterations + 1):
        count = sample_dag_count(rng, config.dags_mean, config.dags_max)
        picks = rng.integers(len(dataset), size=count)
        batch = rollout(
            [dataset[int(i)] for i in picks],
            config.rollouts,
            config.edges,
            params,
            rule,
            config.epsilon,
            rng,
            config.hops,
        )
        adjusted = adjust_rewards(batch.records, batch.initial_makespan, config.gamma)
        accumulate_gradients(params, adjusted, config.hops)
        sgd_step(params.store, config.lr)
        if not params.store.all_finite():
            raise TrainingDivergedError(
                f"Non-finite parameters after iteration {iteration} (lr={config.lr})"
            )

        if eval_sets and (iteration % config.eval_every == 0 or iteration == config.iterations):
            spans = evaluate(params, eval_sets, rule, config.edges, config.beam, config.hops)
            result.log.append(ConvergenceRow(iteration=iteration, makespans=spans))
            logger.info("iteration %d eval %s", iteration, {k: round(v, 4) for k, v in spans.items()})
        if progress is not None and config.iterations:
            progress("train", int(100 * iteration / config.iterations), f"Iteration {iteration}")

    return result
