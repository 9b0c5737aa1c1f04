from __future__ import annotations

import numpy as np
import pytest

from app.dag import DagGraph, JobNode, merge_dags
from app.gnn import encode_features, embed
from app.models import ModelConfig
from app.nn import Tape, backward
from app.oracle import random_small_dags
from app.policy import init_model


def _small_model(hops: int = 2, seed: int = 0):
    return init_model(
        ModelConfig(width=4, transform_layers=2, hops=hops, policy_width=4, policy_blocks=1, seed=seed)
    )


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def test_encode_features_normalises_runtime() -> None:
    g = merge_dags([DagGraph.build([JobNode(0, 2.0, 0.3), JobNode(1, 4.0, 0.9)], [(0, 1)])])
    features = encode_features(g)
    np.testing.assert_array_equal(features[0], [0.0, 0.0])
    assert features[2, 0] == 1.0
    assert features[1].tolist() == [0.5, 0.3]


def test_zero_hops_equals_transform_only() -> None:
    params = _small_model()
    g = next(random_small_dags(np.random.default_rng(0), 1, tasks=5))
    x = encode_features(g)
    for layer in range(2):
        x = _relu(x @ params.store[f"gnn.transform.{layer}.w"].value + params.store[f"gnn.transform.{layer}.b"].value)
    ems = embed(g, params, hops=0)
    np.testing.assert_allclose(ems.nodes, x, atol=1e-12)
    np.testing.assert_allclose(ems.graph, x.mean(axis=0), atol=1e-12)


def test_hand_unrolled_chain() -> None:
    params = _small_model(hops=2)
    g = DagGraph.build([JobNode(0, 1.0, 0.2), JobNode(1, 2.0, 0.4), JobNode(2, 4.0, 0.6)], [(0, 1), (1, 2)])
    store = params.store
    x = encode_features(g)
    for layer in range(2):
        x = _relu(x @ store[f"gnn.transform.{layer}.w"].value + store[f"gnn.transform.{layer}.b"].value)
    for hop in range(2):
        neighbours = np.stack([x[1], x[2], np.zeros(4)])
        x = _relu(np.hstack([x, neighbours]) @ store[f"gnn.hop.{hop}.w"].value + store[f"gnn.hop.{hop}.b"].value)
    np.testing.assert_allclose(embed(g, params).nodes, x, atol=1e-12)


def test_too_many_hops_rejected() -> None:
    params = _small_model(hops=2)
    g = DagGraph.build([JobNode(0, 1.0, 0.2)], [])
    with pytest.raises(ValueError):
        embed(g, params, hops=3)


def test_permutation_equivariance() -> None:
    params = _small_model(hops=2, seed=4)
    rng = np.random.default_rng(9)
    nodes = [JobNode(i, float(rng.integers(1, 9)), float(rng.integers(1, 10)) / 10) for i in range(6)]
    edges = [(0, 2), (1, 2), (2, 4), (3, 5), (1, 5)]
    g = DagGraph.build(nodes, edges)
    perm = rng.permutation(6)
    relabelled = DagGraph.build(
        sorted((JobNode(int(perm[n.id]), n.runtime, n.resource) for n in nodes), key=lambda n: n.id),
        [(int(perm[u]), int(perm[v])) for u, v in edges],
    )
    base, moved = embed(g, params), embed(relabelled, params)
    np.testing.assert_allclose(moved.nodes[perm], base.nodes, atol=1e-12)
    np.testing.assert_allclose(moved.graph, base.graph, atol=1e-12)


def test_identical_components_get_identical_embeddings() -> None:
    params = _small_model(hops=2, seed=5)
    part = DagGraph.build([JobNode(0, 3.0, 0.5), JobNode(1, 1.0, 0.2)], [(0, 1)])
    ems = embed(merge_dags([part, part]), params)
    np.testing.assert_allclose(ems.nodes[1], ems.nodes[3], atol=1e-12)
    np.testing.assert_allclose(ems.nodes[2], ems.nodes[4], atol=1e-12)


def test_locality_beyond_hop_range() -> None:
    params = _small_model(hops=1, seed=6)
    nodes = [JobNode(i, 1.0 + i, 0.3) for i in range(4)]
    chain = [(0, 1), (1, 2), (2, 3)]
    g = DagGraph.build(nodes, chain)
    # Same max runtime, so only node 3 features change; node 0 sees one step down.
    edited = DagGraph.build(nodes[:3] + [JobNode(3, 4.0, 0.9)], chain)
    np.testing.assert_allclose(embed(g, params).nodes[0], embed(edited, params).nodes[0], atol=1e-12)
    np.testing.assert_allclose(embed(g, params).nodes[1], embed(edited, params).nodes[1], atol=1e-12)


def test_leaf_gets_zero_neighbour_message() -> None:
    params = _small_model(hops=1, seed=8)
    g = DagGraph.build([JobNode(0, 1.0, 0.5), JobNode(1, 2.0, 0.5)], [(0, 1)])
    store = params.store
    x = encode_features(g)
    for layer in range(2):
        x = _relu(x @ store[f"gnn.transform.{layer}.w"].value + store[f"gnn.transform.{layer}.b"].value)
    leaf = _relu(np.hstack([x[1], np.zeros(4)]) @ store["gnn.hop.0.w"].value + store["gnn.hop.0.b"].value[0])
    np.testing.assert_allclose(embed(g, params).nodes[1], leaf, atol=1e-12)


def test_embedding_gradient_matches_finite_differences() -> None:
    params = _small_model(hops=2, seed=10)
    g = next(random_small_dags(np.random.default_rng(12), 1, tasks=4, edge_prob=0.5))
    weights = np.random.default_rng(13).normal(size=4)
    name = "gnn.hop.0.w"

    def objective() -> float:
        return float(embed(g, params).graph @ weights)

    tape = Tape()
    ems = embed(g, params, tape=tape)
    backward(tape, ems.graph_em, weights.reshape(1, -1))
    analytic = params.store[name].grad.copy()

    tensor = params.store[name]
    numeric = np.zeros_like(tensor.value)
    h = 1e-6
    for index in np.ndindex(tensor.value.shape):
        original = tensor.value[index]
        tensor.value[index] = original + h
        up = objective()
        tensor.value[index] = original - h
        down = objective()
        tensor.value[index] = original
        numeric[index] = (up - down) / (2 * h)
    scale = max(1.0, float(np.abs(numeric).max()))
    assert float(np.abs(analytic - numeric).max()) <= 1e-4 * scale
