"""Per-edge beam search for edge addition, and the edge-count ensemble."""

from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass

from app.dag import DagGraph, EdgeAction, add_edge
from app.gnn import embed
from app.nn import NoActionError
from app.policy import ModelParams, end_node_distribution, start_node_distribution
from app.simulator import PriorityRule, makespan

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class BeamCandidate:
    action: EdgeAction
    start_prob: float
    end_prob: float

    @property
    def score(self) -> float:
        return self.start_prob * self.end_prob


@dataclass(frozen=True, slots=True)
class EnsembleChoice:
    graph: DagGraph
    makespan: float
    edge_count: int
    baseline: float
    actions: tuple[EdgeAction, ...]


def beam_candidates(
    g: DagGraph, params: ModelParams, beam: int, hops: int | None = None
) -> list[BeamCandidate]:
    """Top-``beam`` starts, each paired with its most likely end."""
    if beam < 1:
        raise ValueError("beam must be >= 1")
    ems = embed(g, params, hops)
    try:
        starts = start_node_distribution(g, ems, params).top(beam)
    except NoActionError:
        return []
    candidates = []
    for start, start_prob in starts:
        end, end_prob = end_node_distribution(g, ems, params, start).best()
        candidates.append(BeamCandidate(EdgeAction(start, end), start_prob, end_prob))
    return candidates


def select_candidate(candidates: list[BeamCandidate]) -> BeamCandidate:
    return min(candidates, key=lambda c: (-c.score, c.action.start, c.action.end))


def iter_edge_additions(
    g: DagGraph, params: ModelParams, beam: int, hops: int | None = None
) -> Iterator[tuple[BeamCandidate, DagGraph]]:
    current = g
    while True:
        candidates = beam_candidates(current, params, beam, hops)
        if not candidates:
            return
        chosen = select_candidate(candidates)
        current = add_edge(current, chosen.action)
        logger.debug(
            "Committed edge (%d, %d) p=%.6f", chosen.action.start, chosen.action.end, chosen.score
        )
        yield chosen, current


def infer_edges(
    g: DagGraph, params: ModelParams, edges: int, beam: int, hops: int | None = None
) -> DagGraph:
    if edges < 0:
        raise ValueError("edges must be >= 0")
    current = g
    if edges == 0:
        return current
    for count, (_, graph) in enumerate(iter_edge_additions(g, params, beam, hops), start=1):
        current = graph
        if count >= edges:
            break
    return current


def ensemble_trace(
    g: DagGraph,
    rule: PriorityRule,
    max_edges: int,
    beam: int,
    params: ModelParams,
    hops: int | None = None,
) -> list[tuple[DagGraph, float, tuple[EdgeAction, ...]]]:
    """Graph and makespan after 0, 1, ..., ``max_edges`` committed edges."""
    trace = [(g, makespan(g, rule), ())]
    actions: tuple[EdgeAction, ...] = ()
    if max_edges <= 0:
        return trace
    for candidate, graph in iter_edge_additions(g, params, beam, hops):
        actions = actions + (candidate.action,)
        trace.append((graph, makespan(graph, rule), actions))
        if len(actions) >= max_edges:
            break
    return trace


def ensemble_best(
    g: DagGraph,
    rule: PriorityRule,
    max_edges: int,
    beam: int,
    params: ModelParams,
    hops: int | None = None,
) -> EnsembleChoice:
    """Best of 0..max_edges added edges; zero edges keeps the baseline in the pool."""
    if max_edges < 1:
        raise ValueError("max_edges must be >= 1")
    trace = ensemble_trace(g, rule, max_edges, beam, params, hops)
    best_index = min(range(len(trace)), key=lambda i: (trace[i][1], i))
    graph, span, actions = trace[best_index]
    return EnsembleChoice(
        graph=graph,
        makespan=span,
        edge_count=len(actions),
        baseline=trace[0][1],
        actions=actions,
    )
