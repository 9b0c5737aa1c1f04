"""Node and graph embeddings by message passing over each node's children."""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from app.dag import DagGraph
from app.models import ModelConfig
from app.nn import (
    ParamStore,
    Tape,
    Tensor2,
    concat_cols,
    constant,
    dense_forward,
    mean_rows,
    propagate,
)

if TYPE_CHECKING:
    from app.policy import ModelParams


@dataclass(frozen=True, slots=True)
class Embeddings:
    node_ems: Tensor2
    graph_em: Tensor2

    @property
    def nodes(self) -> np.ndarray:
        return self.node_ems.value

    @property
    def graph(self) -> np.ndarray:
        return self.graph_em.value[0]


def encode_features(g: DagGraph) -> np.ndarray:
    """Rows of (runtime / max runtime, resource)."""
    runtimes = g.runtimes
    peak = runtimes.max() if runtimes.size else 0.0
    scaled = runtimes / peak if peak > 0 else np.zeros_like(runtimes)
    return np.column_stack([scaled, g.resources])


def init_gnn_params(store: ParamStore, config: ModelConfig, rng: np.random.Generator) -> None:
    fan_in = config.features
    for layer in range(config.transform_layers):
        store.add_uniform(f"gnn.transform.{layer}.w", (fan_in, config.width), fan_in, rng)
        store.add_uniform(f"gnn.transform.{layer}.b", (1, config.width), fan_in, rng)
        fan_in = config.width
    for hop in range(config.hops):
        store.add_uniform(f"gnn.hop.{hop}.w", (2 * config.width, config.width), 2 * config.width, rng)
        store.add_uniform(f"gnn.hop.{hop}.b", (1, config.width), 2 * config.width, rng)


def embed(
    g: DagGraph,
    params: ModelParams,
    hops: int | None = None,
    tape: Tape | None = None,
) -> Embeddings:
    config = params.config
    hops = config.hops if hops is None else hops
    if hops < 0 or hops > config.hops:
        raise ValueError(f"hops={hops} outside configured range 0..{config.hops}")
    tape = tape if tape is not None else Tape()
    store = params.store

    x = constant(encode_features(g))
    for layer in range(config.transform_layers):
        x = dense_forward(tape, x, store, f"gnn.transform.{layer}", "relu")

    # Messages flow from children to parents: reversed edges.
    children = g.children_matrix()
    for hop in range(hops):
        neighbours = propagate(tape, children, x)
        x = dense_forward(tape, concat_cols(tape, [x, neighbours]), store, f"gnn.hop.{hop}", "relu")

    return Embeddings(node_ems=x, graph_em=mean_rows(tape, x))
