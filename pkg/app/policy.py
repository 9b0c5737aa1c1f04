"""Starting- and ending-node policies over qualified nodes, plus model checkpoints."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from app.dag import DagGraph, EdgeAction, qualified_ending_nodes, qualified_starting_nodes
from app.gnn import Embeddings, embed, init_gnn_params
from app.models import Checkpoint, ModelConfig, ParamRecord
from app.nn import (
    NoActionError,
    ParamStore,
    Tape,
    Tensor2,
    add,
    concat_cols,
    dense_forward,
    masked_log_softmax,
    masked_softmax,
    pick,
    repeat_row,
    residual_block_forward,
    take_rows,
)
from app.session_store import JsonStore

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class ModelParams:
    """GNN weights plus both policy networks, sharing one ``ParamStore``."""

    def __init__(self, config: ModelConfig, store: ParamStore):
        self.config = config
        self.store = store

    def group(self, prefix: str) -> list[str]:
        return [name for name in self.store.names() if name.startswith(prefix + ".")]

    def copy(self) -> ModelParams:
        store = ParamStore()
        for name, tensor in self.store.items():
            store.add(name, tensor.value.copy())
        return ModelParams(self.config.model_copy(), store)


def _init_policy_net(
    store: ParamStore, prefix: str, in_dim: int, config: ModelConfig, rng: np.random.Generator
) -> None:
    width = config.policy_width
    store.add_uniform(f"{prefix}.proj.w", (in_dim, width), in_dim, rng)
    store.add_uniform(f"{prefix}.proj.b", (1, width), in_dim, rng)
    for block in range(config.policy_blocks):
        for part in ("a", "b"):
            store.add_uniform(f"{prefix}.block.{block}.{part}.w", (width, width), width, rng)
            store.add_uniform(f"{prefix}.block.{block}.{part}.b", (1, width), width, rng)
    store.add_uniform(f"{prefix}.head.w", (width, 1), width, rng)
    store.add_uniform(f"{prefix}.head.b", (1, 1), width, rng)


def init_model(config: ModelConfig | None = None) -> ModelParams:
    config = config or ModelConfig()
    rng = np.random.default_rng(config.seed)
    store = ParamStore()
    init_gnn_params(store, config, rng)
    _init_policy_net(store, "start", 2 * config.width, config, rng)
    _init_policy_net(store, "end", 3 * config.width, config, rng)
    return ModelParams(config, store)


def _policy_net(tape: Tape, x: Tensor2, params: ModelParams, prefix: str) -> Tensor2:
    store = params.store
    h = dense_forward(tape, x, store, f"{prefix}.proj", "relu")
    for block in range(params.config.policy_blocks):
        h = residual_block_forward(tape, h, store, f"{prefix}.block.{block}")
    return dense_forward(tape, h, store, f"{prefix}.head", "linear")


def start_scores(tape: Tape, g: DagGraph, ems: Embeddings, params: ModelParams) -> Tensor2:
    n = g.size
    inputs = concat_cols(tape, [repeat_row(tape, ems.graph_em, n), ems.node_ems])
    return _policy_net(tape, inputs, params, "start")


def end_scores(
    tape: Tape, g: DagGraph, ems: Embeddings, params: ModelParams, start: int
) -> Tensor2:
    n = g.size
    start_em = take_rows(tape, ems.node_ems, [start])
    inputs = concat_cols(
        tape,
        [repeat_row(tape, ems.graph_em, n), repeat_row(tape, start_em, n), ems.node_ems],
    )
    return _policy_net(tape, inputs, params, "end")


@dataclass(frozen=True, slots=True)
class ActionDistribution:
    candidate_ids: tuple[int, ...]
    probs: np.ndarray

    def prob_of(self, node: int) -> float:
        try:
            return float(self.probs[self.candidate_ids.index(node)])
        except ValueError:
            return 0.0

    def best(self) -> tuple[int, float]:
        # argmax returns the first maximum; candidates are sorted by id.
        index = int(np.argmax(self.probs))
        return self.candidate_ids[index], float(self.probs[index])

    def top(self, k: int) -> list[tuple[int, float]]:
        ranked = sorted(zip(self.candidate_ids, self.probs), key=lambda item: (-item[1], item[0]))
        return [(int(node), float(prob)) for node, prob in ranked[:k]]


def _mask(n: int, candidates: list[int]) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[candidates] = True
    return mask


def _distribution(scores: Tensor2, candidates: list[int]) -> ActionDistribution:
    if not candidates:
        raise NoActionError("No qualified candidates")
    probs = masked_softmax(scores.value[:, 0], _mask(scores.rows, candidates))
    return ActionDistribution(candidate_ids=tuple(candidates), probs=probs[candidates])


def start_node_distribution(g: DagGraph, ems: Embeddings, params: ModelParams) -> ActionDistribution:
    candidates = qualified_starting_nodes(g)
    if not candidates:
        raise NoActionError("No qualified starting nodes")
    return _distribution(start_scores(Tape(), g, ems, params), candidates)


def end_node_distribution(
    g: DagGraph, ems: Embeddings, params: ModelParams, start: int
) -> ActionDistribution:
    candidates = qualified_ending_nodes(g, start)
    if not candidates:
        raise NoActionError(f"No qualified ending nodes for start {start}")
    return _distribution(end_scores(Tape(), g, ems, params, start), candidates)


def joint_log_prob(g: DagGraph, ems: Embeddings, params: ModelParams, action: EdgeAction) -> float:
    p_start = start_node_distribution(g, ems, params).prob_of(action.start)
    if p_start == 0.0:
        raise ValueError(f"Start node {action.start} outside the policy support")
    p_end = end_node_distribution(g, ems, params, action.start).prob_of(action.end)
    if p_end == 0.0:
        raise ValueError(f"End node {action.end} outside the policy support")
    return math.log(p_start) + math.log(p_end)


def joint_log_prob_tensor(
    tape: Tape,
    g: DagGraph,
    params: ModelParams,
    action: EdgeAction,
    hops: int | None = None,
) -> Tensor2:
    """log p(a1|G) + log p(a2|G, a1) recorded on ``tape``, embeddings included."""
    ems = embed(g, params, hops, tape)
    starts = qualified_starting_nodes(g)
    if action.start not in starts:
        raise ValueError(f"Start node {action.start} outside the policy support")
    ends = qualified_ending_nodes(g, action.start)
    if action.end not in ends:
        raise ValueError(f"End node {action.end} outside the policy support")
    start_lp = masked_log_softmax(tape, start_scores(tape, g, ems, params), _mask(g.size, starts))
    end_lp = masked_log_softmax(
        tape, end_scores(tape, g, ems, params, action.start), _mask(g.size, ends)
    )
    return add(tape, pick(tape, start_lp, action.start), pick(tape, end_lp, action.end))


def save_checkpoint(path: Path, params: ModelParams, meta: dict | None = None) -> None:
    checkpoint = Checkpoint(
        version=CHECKPOINT_VERSION,
        model=params.config,
        params={
            name: ParamRecord(shape=tensor.shape, values=tensor.value.ravel().tolist())
            for name, tensor in params.store.items()
        },
        meta=meta or {},
    )
    JsonStore(Path(path)).save(checkpoint.model_dump(mode="json"))
    logger.info("Saved checkpoint with %d parameters to %s", params.store.count(), path)


def load_checkpoint(path: Path) -> ModelParams:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        checkpoint = Checkpoint.model_validate(JsonStore(path).load_strict())
    except (ValidationError, ValueError) as exc:
        raise CheckpointError(f"Invalid checkpoint {path}: {exc}") from exc
    if checkpoint.version != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {checkpoint.version}")
    template = init_model(checkpoint.model)
    if set(template.store.names()) != set(checkpoint.params):
        raise CheckpointError("Checkpoint parameters do not match the model layout")
    store = ParamStore()
    for name in template.store.names():
        record = checkpoint.params[name]
        if tuple(record.shape) != template.store[name].shape:
            raise CheckpointError(f"Parameter {name} has shape {record.shape}")
        store.add(name, np.array(record.values, dtype=np.float64).reshape(record.shape))
    return ModelParams(checkpoint.model, store)
